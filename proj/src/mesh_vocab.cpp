#include "dki/mesh_vocab.hpp"

#include <algorithm>
#include <cctype>
#include <regex>
#include <sstream>

#include <json.hpp>

#include "dki/error.hpp"
#include "dki/text.hpp"

namespace dki::mesh {

namespace {

bool is_prefix_code(std::string_view p)
{
    return p.size() == 3 && std::isupper(static_cast<unsigned char>(p[0]))
           && std::isdigit(static_cast<unsigned char>(p[1]))
           && std::isdigit(static_cast<unsigned char>(p[2]));
}

// Minimal pull-style XML reader. Handles the subset of XML found in MeSH
// descriptor releases: prolog, DOCTYPE (with internal subset), comments,
// CDATA, attributes and the predefined/numeric entities.
class XmlReader {
   public:
    enum class Event { Start, End, Text, Eof };

    explicit XmlReader(std::string_view doc) : m_doc(doc) {}

    Event next()
    {
        if (m_pending_end) {
            m_pending_end = false;
            return Event::End;
        }
        while (m_pos < m_doc.size()) {
            if (m_doc[m_pos] != '<') {
                return read_text();
            }
            if (starts_with("<?")) {
                skip_past("?>", "unterminated processing instruction");
            } else if (starts_with("<!--")) {
                skip_past("-->", "unterminated comment");
            } else if (starts_with("<![CDATA[")) {
                auto begin = m_pos + 9;
                auto end = m_doc.find("]]>", begin);
                if (end == std::string_view::npos) {
                    throw ParseError("unterminated CDATA section", m_pos);
                }
                m_text.assign(m_doc.substr(begin, end - begin));
                m_pos = end + 3;
                return Event::Text;
            } else if (starts_with("<!")) {
                skip_doctype();
            } else if (starts_with("</")) {
                return read_end_tag();
            } else {
                return read_start_tag();
            }
        }
        if (!m_stack.empty()) {
            throw ParseError("unexpected end of document inside <" + m_stack.back() + ">",
                             m_doc.size());
        }
        if (!m_seen_root) {
            throw ParseError("document has no root element", m_doc.size());
        }
        return Event::Eof;
    }

    const std::string& name() const { return m_name; }
    const std::string& text() const { return m_text; }
    const std::vector<std::string>& stack() const { return m_stack; }
    std::size_t offset() const { return m_pos; }

   private:
    bool starts_with(std::string_view s) const { return m_doc.substr(m_pos, s.size()) == s; }

    void skip_past(std::string_view terminator, const char* err)
    {
        auto end = m_doc.find(terminator, m_pos);
        if (end == std::string_view::npos) {
            throw ParseError(err, m_pos);
        }
        m_pos = end + terminator.size();
    }

    void skip_doctype()
    {
        auto start = m_pos;
        int bracket = 0;
        for (; m_pos < m_doc.size(); ++m_pos) {
            char c = m_doc[m_pos];
            if (c == '[') {
                ++bracket;
            } else if (c == ']') {
                --bracket;
            } else if (c == '>' && bracket == 0) {
                ++m_pos;
                return;
            }
        }
        throw ParseError("unterminated declaration", start);
    }

    Event read_text()
    {
        auto start = m_pos;
        auto end = m_doc.find('<', m_pos);
        if (end == std::string_view::npos) {
            end = m_doc.size();
        }
        m_text = decode_entities(m_doc.substr(start, end - start), start);
        m_pos = end;
        if (m_stack.empty()) {
            if (std::any_of(m_text.begin(), m_text.end(),
                            [](unsigned char c) { return !std::isspace(c); })) {
                throw ParseError("text outside of root element", start);
            }
            return next();
        }
        return Event::Text;
    }

    std::string read_name()
    {
        auto start = m_pos;
        while (m_pos < m_doc.size()) {
            char c = m_doc[m_pos];
            if (std::isspace(static_cast<unsigned char>(c)) || c == '>' || c == '/' || c == '=') {
                break;
            }
            ++m_pos;
        }
        if (start == m_pos) {
            throw ParseError("expected element name", start);
        }
        return std::string(m_doc.substr(start, m_pos - start));
    }

    void skip_space()
    {
        while (m_pos < m_doc.size() && std::isspace(static_cast<unsigned char>(m_doc[m_pos]))) {
            ++m_pos;
        }
    }

    Event read_start_tag()
    {
        auto tag_start = m_pos;
        ++m_pos;
        m_name = read_name();
        if (m_stack.empty() && m_seen_root) {
            throw ParseError("multiple root elements", tag_start);
        }
        while (true) {
            skip_space();
            if (m_pos >= m_doc.size()) {
                throw ParseError("unterminated start tag <" + m_name + ">", tag_start);
            }
            char c = m_doc[m_pos];
            if (c == '>') {
                ++m_pos;
                break;
            }
            if (c == '/') {
                if (m_pos + 1 >= m_doc.size() || m_doc[m_pos + 1] != '>') {
                    throw ParseError("malformed empty-element tag", m_pos);
                }
                m_pos += 2;
                m_pending_end = true;
                break;
            }
            read_name();
            skip_space();
            if (m_pos >= m_doc.size() || m_doc[m_pos] != '=') {
                throw ParseError("expected '=' after attribute name", m_pos);
            }
            ++m_pos;
            skip_space();
            if (m_pos >= m_doc.size() || (m_doc[m_pos] != '"' && m_doc[m_pos] != '\'')) {
                throw ParseError("expected quoted attribute value", m_pos);
            }
            char quote = m_doc[m_pos];
            auto end = m_doc.find(quote, m_pos + 1);
            if (end == std::string_view::npos) {
                throw ParseError("unterminated attribute value", m_pos);
            }
            m_pos = end + 1;
        }
        m_seen_root = true;
        // An empty-element tag reports Start now and its End on the next call.
        if (!m_pending_end) {
            m_stack.push_back(m_name);
        }
        return Event::Start;
    }

    Event read_end_tag()
    {
        auto tag_start = m_pos;
        m_pos += 2;
        m_name = read_name();
        skip_space();
        if (m_pos >= m_doc.size() || m_doc[m_pos] != '>') {
            throw ParseError("unterminated end tag </" + m_name + ">", tag_start);
        }
        ++m_pos;
        if (m_stack.empty() || m_stack.back() != m_name) {
            throw ParseError("mismatched end tag </" + m_name + ">", tag_start);
        }
        m_stack.pop_back();
        return Event::End;
    }

    static std::string decode_entities(std::string_view raw, std::size_t base)
    {
        std::string out;
        out.reserve(raw.size());
        for (std::size_t i = 0; i < raw.size(); ++i) {
            if (raw[i] != '&') {
                out.push_back(raw[i]);
                continue;
            }
            auto semi = raw.find(';', i);
            if (semi == std::string_view::npos) {
                throw ParseError("unterminated entity reference", base + i);
            }
            auto ent = raw.substr(i + 1, semi - i - 1);
            if (ent == "amp") {
                out.push_back('&');
            } else if (ent == "lt") {
                out.push_back('<');
            } else if (ent == "gt") {
                out.push_back('>');
            } else if (ent == "quot") {
                out.push_back('"');
            } else if (ent == "apos") {
                out.push_back('\'');
            } else if (!ent.empty() && ent[0] == '#') {
                unsigned long cp = 0;
                try {
                    cp = (ent.size() > 1 && (ent[1] == 'x' || ent[1] == 'X'))
                             ? std::stoul(std::string(ent.substr(2)), nullptr, 16)
                             : std::stoul(std::string(ent.substr(1)), nullptr, 10);
                } catch (const std::exception&) {
                    throw ParseError("bad character reference", base + i);
                }
                append_utf8(out, cp);
            } else {
                throw ParseError("unknown entity '&" + std::string(ent) + ";'", base + i);
            }
            i = semi;
        }
        return out;
    }

    static void append_utf8(std::string& out, unsigned long cp)
    {
        if (cp < 0x80) {
            out.push_back(static_cast<char>(cp));
        } else if (cp < 0x800) {
            out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
            out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
        } else if (cp < 0x10000) {
            out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
            out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
            out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
        } else {
            out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
            out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
            out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
            out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
        }
    }

    std::string_view m_doc;
    std::size_t m_pos = 0;
    std::string m_name;
    std::string m_text;
    std::vector<std::string> m_stack;
    bool m_seen_root = false;
    bool m_pending_end = false;
};

std::string trimmed(const std::string& s) { return text::collapse_whitespace(s); }

void check_record(const DescriptorRecord& rec, std::size_t offset)
{
    if (rec.unique_id.empty()) {
        throw ParseError("descriptor without unique id", offset);
    }
    for (const auto& tn : rec.tree_numbers) {
        if (!is_valid_tree_number(tn)) {
            throw ParseError("invalid tree number '" + tn + "' in " + rec.unique_id, offset);
        }
    }
}

std::vector<DescriptorRecord> parse_xml(std::string_view input)
{
    std::vector<DescriptorRecord> records;
    XmlReader reader(input);
    DescriptorRecord current;
    std::size_t record_depth = 0; // stack depth of the open DescriptorRecord, 0 if none
    std::size_t record_offset = 0;
    std::string leaf_text;

    // Path of the innermost element relative to the open record.
    auto relative = [&](const std::vector<std::string>& stack) {
        return std::vector<std::string>(stack.begin() + static_cast<std::ptrdiff_t>(record_depth),
                                        stack.end());
    };

    std::vector<std::string> open_path;
    while (true) {
        auto ev = reader.next();
        if (ev == XmlReader::Event::Eof) {
            break;
        }
        if (ev == XmlReader::Event::Start) {
            open_path.push_back(reader.name());
            if (record_depth == 0 && reader.name() == "DescriptorRecord") {
                current = DescriptorRecord{};
                record_depth = open_path.size();
                record_offset = reader.offset();
            }
            leaf_text.clear();
        } else if (ev == XmlReader::Event::Text) {
            leaf_text += reader.text();
        } else {
            if (record_depth != 0) {
                auto rel = relative(open_path);
                using P = std::vector<std::string>;
                if (rel.empty()) {
                    check_record(current, record_offset);
                    records.push_back(std::move(current));
                    current = DescriptorRecord{};
                    record_depth = 0;
                } else if (rel == P{"DescriptorUI"}) {
                    current.unique_id = trimmed(leaf_text);
                } else if (rel == P{"DescriptorName", "String"}) {
                    current.preferred_term = leaf_text;
                } else if (rel == P{"TreeNumberList", "TreeNumber"}) {
                    current.tree_numbers.push_back(trimmed(leaf_text));
                } else if (rel == P{"ConceptList", "Concept", "TermList", "Term", "String"}) {
                    current.entry_terms.push_back(leaf_text);
                }
            }
            open_path.pop_back();
            leaf_text.clear();
        }
    }
    return records;
}

std::vector<DescriptorRecord> parse_json(std::string_view input)
{
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(input);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(std::string("malformed JSON: ") + e.what(), e.byte);
    }
    if (!doc.is_array()) {
        throw FormatError("JSON descriptor document must be an array of objects");
    }
    std::vector<DescriptorRecord> records;
    for (std::size_t i = 0; i < doc.size(); ++i) {
        const auto& obj = doc[i];
        try {
            DescriptorRecord rec;
            rec.unique_id = obj.at("id").get<std::string>();
            rec.preferred_term = obj.at("term").get<std::string>();
            rec.tree_numbers = obj.value("tree_numbers", std::vector<std::string>{});
            rec.entry_terms = obj.value("synonyms", std::vector<std::string>{});
            check_record(rec, 0);
            records.push_back(std::move(rec));
        } catch (const nlohmann::json::exception& e) {
            throw FormatError("descriptor #" + std::to_string(i) + ": " + e.what());
        }
    }
    return records;
}

} // namespace

BranchSpec BranchSpec::disease_default() { return parse("C01-C26,F01"); }

BranchSpec BranchSpec::parse(std::string_view spec_text)
{
    BranchSpec spec;
    for (auto part : text::split(spec_text, ',')) {
        part = text::collapse_whitespace(part);
        if (part.empty()) {
            continue;
        }
        auto dash = part.find('-');
        if (dash == std::string::npos) {
            spec.included_prefixes.push_back(part);
            continue;
        }
        auto lo = part.substr(0, dash);
        auto hi = part.substr(dash + 1);
        if (!is_prefix_code(lo) || !is_prefix_code(hi) || lo[0] != hi[0] || lo > hi) {
            throw ValidationError("bad branch range '" + part + "'");
        }
        for (int n = std::stoi(lo.substr(1)); n <= std::stoi(hi.substr(1)); ++n) {
            char buf[4];
            std::snprintf(buf, sizeof buf, "%c%02d", lo[0], n);
            spec.included_prefixes.emplace_back(buf);
        }
    }
    spec.validate();
    return spec;
}

void BranchSpec::validate() const
{
    std::set<std::string> seen;
    for (const auto& p : included_prefixes) {
        if (!is_prefix_code(p)) {
            throw ValidationError("branch prefix '" + p + "' is not a letter plus two digits");
        }
        if (!seen.insert(p).second) {
            throw ValidationError("duplicate branch prefix '" + p + "'");
        }
    }
}

bool DiseaseVocabulary::contains(std::string_view term) const
{
    return terms.count(normalize_term(term)) != 0;
}

InputLayout parse_layout(std::string_view name)
{
    if (name == "xml") {
        return InputLayout::Xml;
    }
    if (name == "json") {
        return InputLayout::Json;
    }
    if (name == "auto") {
        return InputLayout::Auto;
    }
    throw FormatError("unknown descriptor layout '" + std::string(name) + "'");
}

std::vector<DescriptorRecord> parse_mesh_descriptors(std::string_view input, InputLayout layout)
{
    if (layout == InputLayout::Auto) {
        auto first = input.find_first_not_of(" \t\r\n");
        if (first == std::string_view::npos) {
            throw FormatError("empty descriptor document");
        }
        // Skip a UTF-8 byte order mark.
        if (input.substr(first, 3) == "\xEF\xBB\xBF") {
            first = input.find_first_not_of(" \t\r\n", first + 3);
        }
        if (first != std::string_view::npos && input[first] == '<') {
            layout = InputLayout::Xml;
        } else if (first != std::string_view::npos && input[first] == '[') {
            layout = InputLayout::Json;
        } else {
            throw FormatError("cannot detect descriptor layout (expected XML or JSON array)");
        }
    }
    return layout == InputLayout::Xml ? parse_xml(input) : parse_json(input);
}

bool is_valid_tree_number(std::string_view tree_number)
{
    static const std::regex pattern(R"([A-Z][0-9]+(\.[0-9A-Za-z]+)*)");
    return std::regex_match(tree_number.begin(), tree_number.end(), pattern);
}

bool in_branch(std::string_view tree_number, const BranchSpec& spec)
{
    if (!is_valid_tree_number(tree_number)) {
        throw ValidationError("invalid tree number '" + std::string(tree_number) + "'");
    }
    auto head = tree_number.substr(0, tree_number.find('.'));
    return std::find(spec.included_prefixes.begin(), spec.included_prefixes.end(), head)
           != spec.included_prefixes.end();
}

DiseaseVocabulary build_disease_vocabulary(const std::vector<DescriptorRecord>& records,
                                           const BranchSpec& spec, bool include_entry_terms)
{
    DiseaseVocabulary vocab;
    vocab.source_count = records.size();
    for (const auto& rec : records) {
        bool hit = std::any_of(rec.tree_numbers.begin(), rec.tree_numbers.end(),
                               [&](const std::string& tn) { return in_branch(tn, spec); });
        if (!hit) {
            continue;
        }
        auto term = normalize_term(rec.preferred_term);
        if (!term.empty()) {
            vocab.terms.insert(term);
        }
        if (include_entry_terms) {
            for (const auto& syn : rec.entry_terms) {
                auto s = normalize_term(syn);
                if (!s.empty()) {
                    vocab.terms.insert(s);
                }
            }
        }
    }
    vocab.term_count = vocab.terms.size();
    return vocab;
}

std::string normalize_term(std::string_view term)
{
    return text::to_lower(text::collapse_whitespace(term));
}

std::string write_vocabulary(const DiseaseVocabulary& vocab)
{
    std::string out;
    for (const auto& t : vocab.terms) {
        out += t;
        out += '\n';
    }
    return out;
}

DiseaseVocabulary read_vocabulary(std::string_view contents)
{
    DiseaseVocabulary vocab;
    for (const auto& line : text::split(contents, '\n')) {
        auto t = normalize_term(line);
        if (!t.empty()) {
            vocab.terms.insert(t);
            ++vocab.source_count;
        }
    }
    vocab.term_count = vocab.terms.size();
    return vocab;
}

} // namespace dki::mesh
