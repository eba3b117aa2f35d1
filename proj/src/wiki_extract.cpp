#include "dki/wiki_extract.hpp"

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <regex>
#include <thread>

#include <json.hpp>

#include "dki/error.hpp"
#include "dki/text.hpp"

namespace dki::wiki {

namespace {

constexpr std::array<std::string_view, kAspectCount> kNames = {
    "Information", "Causes",     "Symptoms",        "Diagnosis",
    "Treatment",   "Prevention", "Pathophysiology", "Transmission",
};

constexpr std::array<std::string_view, kAspectCount> kSurface = {
    "information", "causes",     "symptoms",        "diagnosis",
    "treatment",   "prevention", "pathophysiology", "transmission",
};

bool parse_heading(std::string_view line, std::string& heading, int& level)
{
    static const std::regex pattern(R"(^\s*(={2,})\s*(.*?)\s*(={2,})\s*$)");
    std::cmatch m;
    if (!std::regex_match(line.data(), line.data() + line.size(), m, pattern)) {
        return false;
    }
    if (m[1].length() != m[3].length() || m[2].length() == 0) {
        return false;
    }
    heading = m[2].str();
    level = static_cast<int>(m[1].length());
    return true;
}

std::string trim(const std::string& s)
{
    auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) {
        return {};
    }
    auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

void append_line(std::string& body, std::string_view line)
{
    if (!body.empty()) {
        body.push_back('\n');
    }
    body.append(line);
}

} // namespace

std::string_view aspect_name(Aspect a) { return kNames[static_cast<std::size_t>(a)]; }

std::string_view surface_word(Aspect a) { return kSurface[static_cast<std::size_t>(a)]; }

std::optional<Aspect> parse_aspect(std::string_view name)
{
    auto lowered = text::to_lower(name);
    for (auto a : kAllAspects) {
        if (lowered == surface_word(a)) {
            return a;
        }
    }
    return std::nullopt;
}

AspectSynonyms AspectSynonyms::defaults()
{
    AspectSynonyms s;
    s.m_table = {
        {Aspect::Causes, {"cause", "causes", "etiology"}},
        {Aspect::Symptoms, {"symptoms", "signs and symptoms", "presentation", "clinical features"}},
        {Aspect::Diagnosis, {"diagnosis", "screening and diagnosis", "testing"}},
        {Aspect::Treatment, {"treatment", "management", "therapy"}},
        {Aspect::Prevention, {"prevention", "screening"}},
        {Aspect::Pathophysiology, {"pathophysiology", "mechanism", "pathogenesis"}},
        {Aspect::Transmission, {"transmission", "spread"}},
    };
    return s;
}

AspectSynonyms AspectSynonyms::from_json(std::string_view json_text)
{
    nlohmann::ordered_json doc;
    try {
        doc = nlohmann::ordered_json::parse(json_text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(std::string("malformed synonym table: ") + e.what(), e.byte);
    }
    if (!doc.is_object()) {
        throw FormatError("synonym table must be a JSON object");
    }
    AspectSynonyms s;
    for (const auto& [key, value] : doc.items()) {
        auto aspect = parse_aspect(key);
        if (!aspect) {
            throw ValidationError("unknown aspect '" + key + "' in synonym table");
        }
        std::vector<std::string> phrases;
        for (const auto& v : value) {
            phrases.push_back(mesh::normalize_term(v.get<std::string>()));
        }
        s.m_table.emplace_back(*aspect, std::move(phrases));
    }
    return s;
}

std::optional<Aspect> AspectSynonyms::lookup(std::string_view heading) const
{
    auto key = mesh::normalize_term(heading);
    for (const auto& [aspect, phrases] : m_table) {
        if (std::find(phrases.begin(), phrases.end(), key) != phrases.end()) {
            return aspect;
        }
    }
    return std::nullopt;
}

Article parse_sections(std::string_view raw_text, std::string title)
{
    Article article;
    article.title = std::move(title);
    std::string lead;
    for (const auto& line : text::split(raw_text, '\n')) {
        std::string heading;
        int level = 0;
        if (parse_heading(line, heading, level)) {
            bool nested = !article.sections.empty() && level > article.sections.back().level;
            if (!nested) {
                article.sections.push_back(Section{heading, {}, level});
            }
            continue;
        }
        if (article.sections.empty()) {
            append_line(lead, line);
        } else {
            append_line(article.sections.back().body, line);
        }
    }
    article.lead = trim(lead);
    for (auto& s : article.sections) {
        s.body = trim(s.body);
    }
    return article;
}

std::optional<Aspect> map_heading_to_aspect(std::string_view heading, const AspectSynonyms& synonyms)
{
    return synonyms.lookup(heading);
}

std::string clean_markup(std::string_view in)
{
    static const std::regex ref_empty(R"(<ref[^>]*/>)", std::regex::icase);
    static const std::regex ref_full(R"(<ref[^>]*>[\s\S]*?</ref\s*>)", std::regex::icase);
    std::string s = std::regex_replace(std::string(in), ref_empty, "");
    s = std::regex_replace(s, ref_full, "");

    std::string out;
    out.reserve(s.size());
    int template_depth = 0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (s.compare(i, 2, "{{") == 0) {
            ++template_depth;
            ++i;
            continue;
        }
        if (template_depth > 0) {
            if (s.compare(i, 2, "}}") == 0) {
                --template_depth;
                ++i;
            }
            continue;
        }
        if (s.compare(i, 2, "[[") == 0) {
            auto close = s.find("]]", i + 2);
            if (close != std::string::npos) {
                auto inner = s.substr(i + 2, close - i - 2);
                auto bar = inner.rfind('|');
                out += bar == std::string::npos ? inner : inner.substr(bar + 1);
                i = close + 1;
                continue;
            }
        }
        out.push_back(s[i]);
    }
    return out;
}

namespace {

KnowledgePassage make_passage(const std::string& title, Aspect aspect, const std::string& raw)
{
    KnowledgePassage p;
    p.disease = title;
    p.aspect = aspect;
    p.text = text::collapse_whitespace(clean_markup(raw));
    p.mentions_disease = text::contains_ci(p.text, mesh::normalize_term(title));
    p.mentions_aspect = text::contains_ci(p.text, surface_word(aspect));
    return p;
}

} // namespace

std::vector<KnowledgePassage> extract_passages(const Article& article,
                                               const mesh::DiseaseVocabulary& vocab,
                                               const AspectSynonyms& synonyms)
{
    std::vector<KnowledgePassage> out;
    if (!vocab.contains(article.title)) {
        return out;
    }
    auto emit = [&](Aspect aspect, const std::string& raw) {
        auto p = make_passage(article.title, aspect, raw);
        if (!p.text.empty()) {
            out.push_back(std::move(p));
        }
    };
    emit(Aspect::Information, article.lead);
    for (const auto& section : article.sections) {
        if (auto aspect = synonyms.lookup(section.heading)) {
            emit(*aspect, section.body);
        }
    }
    return out;
}

std::vector<KnowledgePassage> extract_all(const std::vector<Article>& articles,
                                          const mesh::DiseaseVocabulary& vocab,
                                          const AspectSynonyms& synonyms, unsigned workers)
{
    std::vector<std::vector<KnowledgePassage>> per_article(articles.size());
    workers = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(articles.size())));
    auto run = [&](unsigned worker) {
        for (std::size_t i = worker; i < articles.size(); i += workers) {
            per_article[i] = extract_passages(articles[i], vocab, synonyms);
        }
    };
    if (workers <= 1) {
        run(0);
    } else {
        std::vector<std::jthread> pool;
        for (unsigned w = 0; w < workers; ++w) {
            pool.emplace_back(run, w);
        }
    }
    std::vector<KnowledgePassage> merged;
    for (auto& batch : per_article) {
        std::move(batch.begin(), batch.end(), std::back_inserter(merged));
    }
    std::stable_sort(merged.begin(), merged.end(), [](const auto& a, const auto& b) {
        if (a.disease != b.disease) {
            return a.disease < b.disease;
        }
        return a.aspect < b.aspect;
    });
    return merged;
}

CorpusStats corpus_stats(const std::vector<KnowledgePassage>& passages)
{
    CorpusStats stats;
    for (auto a : kAllAspects) {
        stats.per_aspect_counts[a] = 0;
    }
    std::size_t both = 0;
    for (const auto& p : passages) {
        ++stats.per_aspect_counts[p.aspect];
        if (p.mentions_disease && p.mentions_aspect) {
            ++both;
        }
    }
    stats.passage_count = passages.size();
    stats.both_mention_rate =
        passages.empty() ? 0.0 : static_cast<double>(both) / static_cast<double>(passages.size());
    return stats;
}

std::string passage_to_json(const KnowledgePassage& p)
{
    nlohmann::ordered_json j;
    j["disease"] = p.disease;
    j["aspect"] = std::string(aspect_name(p.aspect));
    j["text"] = p.text;
    j["mentions_disease"] = p.mentions_disease;
    j["mentions_aspect"] = p.mentions_aspect;
    return j.dump();
}

std::string write_passages(const std::vector<KnowledgePassage>& passages)
{
    std::string out;
    for (const auto& p : passages) {
        out += passage_to_json(p);
        out += '\n';
    }
    return out;
}

std::vector<KnowledgePassage> read_passages(std::string_view jsonl)
{
    std::vector<KnowledgePassage> out;
    std::size_t line_no = 0;
    for (const auto& line : text::split(jsonl, '\n')) {
        ++line_no;
        if (text::collapse_whitespace(line).empty()) {
            continue;
        }
        try {
            auto j = nlohmann::json::parse(line);
            KnowledgePassage p;
            p.disease = j.at("disease").get<std::string>();
            auto aspect = parse_aspect(j.at("aspect").get<std::string>());
            if (!aspect) {
                throw SchemaError("unknown aspect", line_no);
            }
            p.aspect = *aspect;
            p.text = j.at("text").get<std::string>();
            p.mentions_disease = j.value("mentions_disease", false);
            p.mentions_aspect = j.value("mentions_aspect", false);
            out.push_back(std::move(p));
        } catch (const nlohmann::json::exception& e) {
            throw SchemaError(e.what(), line_no);
        }
    }
    return out;
}

std::string stats_to_json(const CorpusStats& stats)
{
    nlohmann::ordered_json j;
    j["passage_count"] = stats.passage_count;
    nlohmann::ordered_json per = nlohmann::ordered_json::object();
    for (const auto& [aspect, n] : stats.per_aspect_counts) {
        per[std::string(aspect_name(aspect))] = n;
    }
    j["per_aspect_counts"] = per;
    j["both_mention_rate"] = stats.both_mention_rate;
    return j.dump(2);
}

std::string url_decode(std::string_view s)
{
    std::string out;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (s[i] == '%' && i + 2 < s.size() && std::isxdigit(static_cast<unsigned char>(s[i + 1]))
            && std::isxdigit(static_cast<unsigned char>(s[i + 2]))) {
            out.push_back(static_cast<char>(std::stoi(std::string(s.substr(i + 1, 2)), nullptr, 16)));
            i += 2;
        } else if (s[i] == '_') {
            out.push_back(' ');
        } else {
            out.push_back(s[i]);
        }
    }
    return out;
}

std::vector<Article> load_articles(const std::string& path)
{
    namespace fs = std::filesystem;
    std::vector<Article> articles;
    if (!fs::exists(path)) {
        throw IoError("input not found: '" + path + "'");
    }
    if (fs::is_directory(path)) {
        std::vector<fs::path> files;
        for (const auto& entry : fs::directory_iterator(path)) {
            if (entry.is_regular_file() && entry.path().extension() == ".wiki") {
                files.push_back(entry.path());
            }
        }
        std::sort(files.begin(), files.end());
        for (const auto& f : files) {
            articles.push_back(parse_sections(text::read_file(f.string()),
                                              url_decode(f.stem().string())));
        }
        return articles;
    }
    std::size_t line_no = 0;
    for (const auto& line : text::split(text::read_file(path), '\n')) {
        ++line_no;
        if (text::collapse_whitespace(line).empty()) {
            continue;
        }
        try {
            auto j = nlohmann::json::parse(line);
            articles.push_back(parse_sections(j.at("text").get<std::string>(),
                                              j.at("title").get<std::string>()));
        } catch (const nlohmann::json::exception& e) {
            throw SchemaError(e.what(), line_no);
        }
    }
    return articles;
}

} // namespace dki::wiki
