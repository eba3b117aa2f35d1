#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "dki/tokenizer.hpp"
#include "dki/wiki_extract.hpp"

namespace dki::corpus {

enum class MaskMode { Default, NoAuxiliary, NoAspect, NoDisease, RandomMLM15 };

std::string_view mode_name(MaskMode m); // "default", "no_aux", ...
MaskMode parse_mode(std::string_view name);

struct BuildConfig {
    std::size_t max_seq_len = 256;
    double mask_rate = 0.15;
    std::uint64_t seed = 13;
    /// Per-aspect overrides of the question template; "{aspect}" and
    /// "{disease}" are substituted.
    std::map<wiki::Aspect, std::string> templates;

    void validate() const;
};

inline constexpr std::string_view kDefaultTemplate = "What is the {aspect} of {disease}?";

struct InfusionExample {
    std::vector<tok::TokenId> ids;
    std::vector<std::size_t> mask_positions;
    std::vector<tok::TokenId> labels;
    std::vector<std::size_t> aspect_positions;
    std::vector<std::size_t> disease_positions;
    MaskMode mode = MaskMode::Default;
    /// Passage tokens dropped to respect max_seq_len. Serialized only when nonzero.
    std::size_t truncated = 0;

    bool operator==(const InfusionExample&) const = default;

    /// Gold id at a masked position.
    tok::TokenId label_at(std::size_t position) const;
};

std::string make_auxiliary_sentence(std::string_view disease, wiki::Aspect aspect,
                                    std::string_view template_text = kDefaultTemplate);

/// `index` feeds the per-passage random stream of RandomMLM15, so building a
/// corpus in parallel gives the same masks as building it serially.
InfusionExample build_example(const wiki::KnowledgePassage& passage, const tok::SubwordVocab& vocab,
                              const BuildConfig& cfg, MaskMode mode, std::size_t index = 0);

std::vector<InfusionExample> build_corpus(const std::vector<wiki::KnowledgePassage>& passages,
                                          const tok::SubwordVocab& vocab, const BuildConfig& cfg,
                                          MaskMode mode);

/// Input ids with every masked position restored to its label.
std::vector<tok::TokenId> unmasked_ids(const InfusionExample& ex);

std::string write_examples(const std::vector<InfusionExample>& examples);
std::vector<InfusionExample> read_examples(std::string_view jsonl);

} // namespace dki::corpus
