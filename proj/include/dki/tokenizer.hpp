#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace dki::tok {

using TokenId = std::int32_t;

inline constexpr TokenId kPad = 0;
inline constexpr TokenId kUnk = 1;
inline constexpr TokenId kCls = 2;
inline constexpr TokenId kSep = 3;
inline constexpr TokenId kMask = 4;
inline constexpr std::size_t kSpecialCount = 5;

/// Sub-word vocabulary with the five special tokens pinned to ids 0..4.
/// Continuation pieces carry a "##" prefix.
class SubwordVocab {
   public:
    SubwordVocab();

    /// Throws ValidationError on duplicates or misplaced specials.
    explicit SubwordVocab(std::vector<std::string> tokens);

    static SubwordVocab from_file_contents(std::string_view contents);
    std::string to_file_contents() const;

    std::size_t size() const noexcept { return m_tokens.size(); }
    bool contains(std::string_view piece) const;
    TokenId id(std::string_view piece) const; // kUnk when absent
    const std::string& token(TokenId id) const;
    const std::vector<std::string>& tokens() const noexcept { return m_tokens; }

   private:
    std::vector<std::string> m_tokens;
    std::unordered_map<std::string, TokenId> m_index;
};

struct TokenSeq {
    std::vector<TokenId> ids;
    std::vector<std::string> surface;

    std::size_t size() const noexcept { return ids.size(); }
    void append(const TokenSeq& other);
};

/// Lowercases, splits on whitespace and isolates ASCII punctuation.
std::vector<std::string> basic_split(std::string_view text);

/// Greedy longest-match-first segmentation of one (already lowercased) word.
std::vector<std::string> wordpiece_word(std::string_view word, const SubwordVocab& vocab);

TokenSeq wordpiece_tokenize(std::string_view text, const SubwordVocab& vocab);

/// Frequency-driven vocabulary. `seed_pieces` are placed right after the
/// specials. Every character seen in the corpus is present both as a word
/// piece and as a "##" piece.
SubwordVocab build_vocab(std::span<const std::string> corpus, std::size_t target_size,
                         std::size_t min_freq = 1,
                         std::span<const std::string> seed_pieces = {});

std::string decode(std::span<const TokenId> ids, const SubwordVocab& vocab);

} // namespace dki::tok
