#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dki/downstream.hpp"
#include "dki/encoder_model.hpp"
#include "dki/infusion_trainer.hpp"
#include "dki/tokenizer.hpp"
#include "dki/wiki_extract.hpp"

// Made-up diseases whose aspects are described by made-up keywords. Nothing
// here exists in any real vocabulary, so a model can only relate a keyword to
// its disease by seeing the infusion corpus.
namespace dki::synthetic {

struct World {
    std::vector<std::string> diseases;
    std::vector<wiki::Aspect> aspects;
    /// keywords[d][a][k]: k-th keyword of disease d, aspect index a.
    std::vector<std::vector<std::vector<std::string>>> keywords;
    std::vector<std::string> filler;

    std::vector<std::string> all_words() const;
};

/// Distinct pronounceable nonsense words, deterministic in `seed`.
std::vector<std::string> nonsense_words(std::size_t count, std::uint64_t seed);

World make_world(std::size_t diseases, std::vector<wiki::Aspect> aspects, std::size_t keywords_per_pair,
                 std::uint64_t seed);

/// `copies` passages per (disease, aspect); each holds `per_passage` keywords
/// of the pair (all of them when 0) drawn at random, separated by filler
/// words. Disease names never appear.
std::vector<wiki::KnowledgePassage> infusion_passages(const World& w, std::size_t copies, std::uint64_t seed,
                                                      std::size_t per_passage = 0);

/// One question "what is the {aspect} of {disease} ?" per pair with four
/// candidates: the right answer (score 11, rank 1) built from keywords in
/// [kw_begin, kw_end) and three distractors (score 1, ranks 2..4) describing
/// the same disease's other aspects (other diseases when aspects run out).
/// Only the first `asked_aspects` aspects are asked about (all when 0).
std::vector<downstream::QaPair> qa_pairs(const World& w, std::size_t kw_begin, std::size_t kw_end,
                                         std::uint64_t seed, std::size_t asked_aspects = 0);

/// Vocabulary in which every world word and aspect word is a single token.
tok::SubwordVocab world_vocab(const World& w, const std::vector<wiki::KnowledgePassage>& passages);

/// 50 passages (10 diseases x 5 aspects) with a vocabulary covering them.
struct OverfitFixture {
    World world;
    std::vector<wiki::KnowledgePassage> passages;
    tok::SubwordVocab vocab;
};
OverfitFixture overfit_fixture(std::uint64_t seed = 13);

/// 20 QA pairs with spread-out target scores.
std::vector<downstream::QaPair> regression_set(std::uint64_t seed = 13);
/// 30 NLI pairs whose label is decided by one hypothesis token.
std::vector<downstream::NliPair> separable_nli_set();
/// Sentences where exactly the token "redpox" is a disease span.
std::vector<downstream::TaggedSentence> redpox_ner_set(std::uint64_t seed = 13);
/// Vocabulary covering all words of the three sets above.
tok::SubwordVocab downstream_vocab();

struct ProbeConfig {
    std::size_t diseases = 16;
    std::vector<wiki::Aspect> aspects = {wiki::Aspect::Symptoms, wiki::Aspect::Treatment,
                                         wiki::Aspect::Causes, wiki::Aspect::Diagnosis};
    std::size_t keywords_per_pair = 6;
    std::size_t infusion_copies = 8;
    std::size_t keywords_per_passage = 2;
    std::size_t asked_aspects = 1;
    /// Fresh answer samplings of the training questions.
    std::size_t train_rounds = 3;
    model::EncoderConfig encoder;
    train::TrainConfig infusion;
    downstream::FineTuneConfig fine_tune;
    std::uint64_t seed = 13;

    static ProbeConfig desk(std::uint64_t seed);
};

struct ProbeResult {
    double baseline_accuracy = 0.0;
    double infused_accuracy = 0.0;
    double infusion_masked_accuracy = 0.0;
};

/// Fine-tunes a random encoder and an infused encoder on QA built from
/// keywords 0..k/2 and scores both on QA built from the remaining keywords.
ProbeResult run_infusion_probe(const ProbeConfig& cfg);

} // namespace dki::synthetic
