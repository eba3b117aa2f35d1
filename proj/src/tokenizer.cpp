#include "dki/tokenizer.hpp"

#include <algorithm>
#include <cctype>
#include <map>
#include <set>

#include "dki/error.hpp"
#include "dki/text.hpp"

namespace dki::tok {

namespace {

const std::vector<std::string>& special_tokens()
{
    static const std::vector<std::string> specials = {"[PAD]", "[UNK]", "[CLS]", "[SEP]",
                                                      "[MASK]"};
    return specials;
}

// Length in bytes of the UTF-8 sequence starting with `lead`.
std::size_t utf8_len(unsigned char lead)
{
    if (lead < 0x80) {
        return 1;
    }
    if ((lead >> 5) == 0x6) {
        return 2;
    }
    if ((lead >> 4) == 0xE) {
        return 3;
    }
    if ((lead >> 3) == 0x1E) {
        return 4;
    }
    return 1;
}

std::vector<std::string> utf8_chars(std::string_view word)
{
    std::vector<std::string> chars;
    for (std::size_t i = 0; i < word.size();) {
        auto n = std::min(utf8_len(static_cast<unsigned char>(word[i])), word.size() - i);
        chars.emplace_back(word.substr(i, n));
        i += n;
    }
    return chars;
}

constexpr std::size_t kMaxWordBytes = 100;

} // namespace

SubwordVocab::SubwordVocab() : SubwordVocab(special_tokens()) {}

SubwordVocab::SubwordVocab(std::vector<std::string> tokens) : m_tokens(std::move(tokens))
{
    const auto& specials = special_tokens();
    if (m_tokens.size() < specials.size()) {
        throw ValidationError("vocabulary must start with the five special tokens");
    }
    for (std::size_t i = 0; i < specials.size(); ++i) {
        if (m_tokens[i] != specials[i]) {
            throw ValidationError("vocabulary line " + std::to_string(i) + " must be "
                                  + specials[i] + ", found '" + m_tokens[i] + "'");
        }
    }
    for (std::size_t i = 0; i < m_tokens.size(); ++i) {
        if (m_tokens[i].empty()) {
            throw ValidationError("empty token at vocabulary line " + std::to_string(i));
        }
        if (!m_index.emplace(m_tokens[i], static_cast<TokenId>(i)).second) {
            throw ValidationError("duplicate token '" + m_tokens[i] + "' in vocabulary");
        }
    }
}

SubwordVocab SubwordVocab::from_file_contents(std::string_view contents)
{
    auto lines = text::split(contents, '\n');
    for (auto& l : lines) {
        if (!l.empty() && l.back() == '\r') {
            l.pop_back();
        }
    }
    while (!lines.empty() && lines.back().empty()) {
        lines.pop_back();
    }
    return SubwordVocab(std::move(lines));
}

std::string SubwordVocab::to_file_contents() const
{
    std::string out;
    for (const auto& t : m_tokens) {
        out += t;
        out += '\n';
    }
    return out;
}

bool SubwordVocab::contains(std::string_view piece) const
{
    return m_index.find(std::string(piece)) != m_index.end();
}

TokenId SubwordVocab::id(std::string_view piece) const
{
    auto it = m_index.find(std::string(piece));
    return it == m_index.end() ? kUnk : it->second;
}

const std::string& SubwordVocab::token(TokenId id) const
{
    if (id < 0 || static_cast<std::size_t>(id) >= m_tokens.size()) {
        throw ValidationError("token id " + std::to_string(id) + " out of range");
    }
    return m_tokens[static_cast<std::size_t>(id)];
}

void TokenSeq::append(const TokenSeq& other)
{
    ids.insert(ids.end(), other.ids.begin(), other.ids.end());
    surface.insert(surface.end(), other.surface.begin(), other.surface.end());
}

std::vector<std::string> basic_split(std::string_view input)
{
    std::vector<std::string> words;
    std::string current;
    auto flush = [&] {
        if (!current.empty()) {
            words.push_back(std::move(current));
            current.clear();
        }
    };
    for (char ch : input) {
        auto c = static_cast<unsigned char>(ch);
        if (std::isspace(c)) {
            flush();
        } else if (c < 0x80 && std::ispunct(c)) {
            flush();
            words.emplace_back(1, ch);
        } else {
            current.push_back(static_cast<char>(std::tolower(c)));
        }
    }
    flush();
    return words;
}

std::vector<std::string> wordpiece_word(std::string_view word, const SubwordVocab& vocab)
{
    if (word.size() > kMaxWordBytes) {
        return {"[UNK]"};
    }
    std::vector<std::string> pieces;
    std::size_t start = 0;
    while (start < word.size()) {
        std::size_t end = word.size();
        std::string match;
        while (end > start) {
            std::string candidate(word.substr(start, end - start));
            if (start > 0) {
                candidate.insert(0, "##");
            }
            if (vocab.contains(candidate)) {
                match = std::move(candidate);
                break;
            }
            --end;
        }
        if (match.empty()) {
            return {"[UNK]"};
        }
        pieces.push_back(std::move(match));
        start = end;
    }
    return pieces;
}

TokenSeq wordpiece_tokenize(std::string_view input, const SubwordVocab& vocab)
{
    TokenSeq seq;
    for (const auto& word : basic_split(input)) {
        for (auto& piece : wordpiece_word(word, vocab)) {
            seq.ids.push_back(vocab.id(piece));
            seq.surface.push_back(std::move(piece));
        }
    }
    return seq;
}

SubwordVocab build_vocab(std::span<const std::string> corpus, std::size_t target_size,
                         std::size_t min_freq, std::span<const std::string> seed_pieces)
{
    if (target_size <= kSpecialCount) {
        throw CapacityError("target vocabulary size must exceed the five special tokens");
    }
    std::map<std::string, std::size_t> word_freq;
    for (const auto& line : corpus) {
        for (auto& w : basic_split(line)) {
            ++word_freq[w];
        }
    }

    std::vector<std::string> tokens = special_tokens();
    std::set<std::string> present(tokens.begin(), tokens.end());
    auto add = [&](const std::string& t) {
        if (present.insert(t).second) {
            tokens.push_back(t);
        }
    };
    for (const auto& s : seed_pieces) {
        add(s);
    }

    std::set<std::string> chars;
    std::map<std::string, std::size_t> piece_freq;
    for (const auto& [word, n] : word_freq) {
        auto cs = utf8_chars(word);
        chars.insert(cs.begin(), cs.end());
        if (n >= min_freq) {
            piece_freq[word] += n;
        }
        for (std::size_t i = 1; i + 1 < cs.size(); ++i) {
            piece_freq["##" + cs[i] + cs[i + 1]] += n;
        }
    }
    std::size_t required = tokens.size();
    for (const auto& c : chars) {
        required += !present.count(c) + !present.count("##" + c);
    }
    if (required > target_size) {
        throw CapacityError("target size " + std::to_string(target_size) + " cannot hold "
                            + std::to_string(required) + " required specials, seeds and characters");
    }
    for (const auto& c : chars) {
        add(c);
    }
    for (const auto& c : chars) {
        add("##" + c);
    }

    std::vector<std::pair<std::string, std::size_t>> ranked;
    for (const auto& [piece, n] : piece_freq) {
        if (n >= min_freq && !present.count(piece)) {
            ranked.emplace_back(piece, n);
        }
    }
    std::stable_sort(ranked.begin(), ranked.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });
    for (const auto& [piece, n] : ranked) {
        if (tokens.size() >= target_size) {
            break;
        }
        add(piece);
    }
    return SubwordVocab(std::move(tokens));
}

std::string decode(std::span<const TokenId> ids, const SubwordVocab& vocab)
{
    std::string out;
    for (auto id : ids) {
        const auto& t = vocab.token(id);
        if (t.size() > 2 && t.compare(0, 2, "##") == 0) {
            out.append(t, 2);
        } else {
            if (!out.empty()) {
                out.push_back(' ');
            }
            out += t;
        }
    }
    return out;
}

} // namespace dki::tok
