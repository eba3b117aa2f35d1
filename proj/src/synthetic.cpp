#include "dki/synthetic.hpp"

#include <algorithm>
#include <random>
#include <set>

#include "dki/corpus_builder.hpp"
#include "dki/error.hpp"
#include "dki/text.hpp"

namespace dki::synthetic {

namespace {

constexpr const char* kOnsets[] = {"b", "d", "f", "g", "k", "l", "m", "n", "p", "r",
                                   "s", "t", "v", "z", "br", "dr", "gl", "kr", "pl", "st", "tr", "zh"};
constexpr const char* kVowels[] = {"a", "e", "i", "o", "u", "ae", "ou", "y"};
constexpr const char* kCodas[] = {"", "n", "x", "r", "m", "sk", "th", "l"};

const std::vector<std::string>& filler_words()
{
    static const std::vector<std::string> words = {
        "the", "a", "patients", "often", "show", "with", "and", "is", "are", "in", "may", "be",
        "seen", "common", "reported", "cases", "usually", "includes", "typical", "signs", "of", "some",
    };
    return words;
}

std::mt19937_64 make_rng(std::uint64_t seed, std::uint64_t stream)
{
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream)};
    return std::mt19937_64(seq);
}

template <typename T>
const T& pick(const std::vector<T>& v, std::mt19937_64& rng)
{
    return v[std::uniform_int_distribution<std::size_t>(0, v.size() - 1)(rng)];
}

std::string sentence_from(const std::vector<std::string>& words)
{
    std::string out;
    for (const auto& w : words) {
        if (!out.empty()) {
            out.push_back(' ');
        }
        out += w;
    }
    return out;
}

} // namespace

std::vector<std::string> World::all_words() const
{
    std::vector<std::string> out = diseases;
    for (const auto& per_disease : keywords) {
        for (const auto& per_aspect : per_disease) {
            out.insert(out.end(), per_aspect.begin(), per_aspect.end());
        }
    }
    out.insert(out.end(), filler.begin(), filler.end());
    return out;
}

std::vector<std::string> nonsense_words(std::size_t count, std::uint64_t seed)
{
    auto rng = make_rng(seed, 1);
    auto idx = [&](std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng); };
    std::set<std::string> seen(filler_words().begin(), filler_words().end());
    for (auto a : wiki::kAllAspects) {
        seen.emplace(wiki::surface_word(a));
    }
    for (const char* w : {"what", "of", "the", "is"}) {
        seen.emplace(w);
    }
    std::vector<std::string> out;
    std::size_t attempts = 0;
    while (out.size() < count) {
        if (++attempts > count * 1000 + 1000) {
            throw CapacityError("cannot generate enough distinct nonsense words");
        }
        std::string w;
        const std::size_t syllables = 2 + idx(2);
        for (std::size_t s = 0; s < syllables; ++s) {
            w += kOnsets[idx(std::size(kOnsets))];
            w += kVowels[idx(std::size(kVowels))];
        }
        w += kCodas[idx(std::size(kCodas))];
        if (seen.insert(w).second) {
            out.push_back(std::move(w));
        }
    }
    return out;
}

World make_world(std::size_t diseases, std::vector<wiki::Aspect> aspects, std::size_t keywords_per_pair,
                 std::uint64_t seed)
{
    if (diseases < 2 || aspects.empty() || keywords_per_pair == 0) {
        throw ValidationError("a world needs two diseases, one aspect and one keyword per pair");
    }
    World w;
    w.aspects = std::move(aspects);
    auto words = nonsense_words(diseases * (1 + w.aspects.size() * keywords_per_pair), seed);
    auto it = words.begin();
    for (std::size_t d = 0; d < diseases; ++d) {
        w.diseases.push_back(*it++);
    }
    w.keywords.resize(diseases);
    for (std::size_t d = 0; d < diseases; ++d) {
        w.keywords[d].resize(w.aspects.size());
        for (std::size_t a = 0; a < w.aspects.size(); ++a) {
            for (std::size_t k = 0; k < keywords_per_pair; ++k) {
                w.keywords[d][a].push_back(*it++);
            }
        }
    }
    w.filler = filler_words();
    return w;
}

std::vector<wiki::KnowledgePassage> infusion_passages(const World& w, std::size_t copies, std::uint64_t seed,
                                                      std::size_t per_passage)
{
    auto rng = make_rng(seed, 2);
    std::vector<wiki::KnowledgePassage> out;
    for (std::size_t c = 0; c < copies; ++c) {
        for (std::size_t d = 0; d < w.diseases.size(); ++d) {
            for (std::size_t a = 0; a < w.aspects.size(); ++a) {
                auto kws = w.keywords[d][a];
                std::shuffle(kws.begin(), kws.end(), rng);
                if (per_passage > 0 && per_passage < kws.size()) {
                    kws.resize(per_passage);
                }
                std::vector<std::string> words;
                for (const auto& k : kws) {
                    words.push_back(pick(w.filler, rng));
                    words.push_back(k);
                }
                wiki::KnowledgePassage p;
                p.disease = w.diseases[d];
                p.aspect = w.aspects[a];
                p.text = sentence_from(words);
                p.mentions_aspect = text::contains_ci(p.text, wiki::surface_word(p.aspect));
                out.push_back(std::move(p));
            }
        }
    }
    return out;
}

std::vector<downstream::QaPair> qa_pairs(const World& w, std::size_t kw_begin, std::size_t kw_end,
                                         std::uint64_t seed, std::size_t asked_aspects)
{
    if (asked_aspects == 0 || asked_aspects > w.aspects.size()) {
        asked_aspects = w.aspects.size();
    }
    const std::size_t per_pair = w.keywords.front().front().size();
    if (kw_begin >= kw_end || kw_end > per_pair) {
        throw ValidationError("keyword range out of bounds");
    }
    auto rng = make_rng(seed, 3);
    auto answer_from = [&](std::size_t d, std::size_t a) {
        std::vector<std::string> pool(w.keywords[d][a].begin() + static_cast<std::ptrdiff_t>(kw_begin),
                                      w.keywords[d][a].begin() + static_cast<std::ptrdiff_t>(kw_end));
        std::shuffle(pool.begin(), pool.end(), rng);
        pool.resize(std::min<std::size_t>(2, pool.size()));
        std::vector<std::string> words;
        for (const auto& k : pool) {
            words.push_back(pick(w.filler, rng));
            words.push_back(k);
        }
        return sentence_from(words);
    };
    auto other = [&](std::size_t n, std::size_t not_this) {
        std::size_t r = std::uniform_int_distribution<std::size_t>(0, n - 2)(rng);
        return r >= not_this ? r + 1 : r;
    };
    std::vector<downstream::QaPair> out;
    for (std::size_t d = 0; d < w.diseases.size(); ++d) {
        for (std::size_t a = 0; a < asked_aspects; ++a) {
            std::string q = "what is the " + std::string(wiki::surface_word(w.aspects[a])) + " of "
                            + w.diseases[d] + " ?";
            // distractors: the same disease's other aspects first, then
            // other diseases with this aspect
            std::vector<std::string> candidates = {answer_from(d, a)};
            std::vector<std::size_t> other_aspects;
            for (std::size_t oa = 0; oa < w.aspects.size(); ++oa) {
                if (oa != a) {
                    other_aspects.push_back(oa);
                }
            }
            std::shuffle(other_aspects.begin(), other_aspects.end(), rng);
            for (auto oa : other_aspects) {
                if (candidates.size() < 4) {
                    candidates.push_back(answer_from(d, oa));
                }
            }
            std::set<std::size_t> used{d};
            while (candidates.size() < 4) {
                const auto od = other(w.diseases.size(), d);
                if (used.insert(od).second) {
                    candidates.push_back(answer_from(od, a));
                }
            }
            std::vector<std::size_t> order = {0, 1, 2, 3};
            std::shuffle(order.begin(), order.end(), rng);
            for (auto i : order) {
                out.push_back({q, candidates[i], i == 0 ? 11 : 1, static_cast<int>(i) + 1, 4});
            }
        }
    }
    return out;
}

tok::SubwordVocab world_vocab(const World& w, const std::vector<wiki::KnowledgePassage>& passages)
{
    std::vector<std::string> seeds = w.all_words();
    for (const char* s : {"what", "is", "the", "of", "?", "."}) {
        seeds.emplace_back(s);
    }
    for (auto a : wiki::kAllAspects) {
        seeds.emplace_back(wiki::surface_word(a));
    }
    std::vector<std::string> corpus;
    for (const auto& p : passages) {
        corpus.push_back(p.text);
    }
    corpus.insert(corpus.end(), seeds.begin(), seeds.end());
    // every character twice plus a little room for frequent pieces
    return tok::build_vocab(corpus, seeds.size() + 5 + 2 * 40 + 32, 1, seeds);
}

OverfitFixture overfit_fixture(std::uint64_t seed)
{
    OverfitFixture f;
    f.world = make_world(10,
                         {wiki::Aspect::Symptoms, wiki::Aspect::Treatment, wiki::Aspect::Causes,
                          wiki::Aspect::Diagnosis, wiki::Aspect::Prevention},
                         4, seed);
    f.passages = infusion_passages(f.world, 1, seed);
    f.vocab = world_vocab(f.world, f.passages);
    return f;
}

std::vector<downstream::QaPair> regression_set(std::uint64_t seed)
{
    auto rng = make_rng(seed, 4);
    const std::vector<std::string> good = {"rest", "fluids", "antibiotics", "vaccination", "surgery"};
    const std::vector<std::string> bad = {"weather", "music", "painting", "football", "cooking"};
    std::vector<downstream::QaPair> out;
    for (std::size_t i = 0; i < 20; ++i) {
        const bool relevant = i % 2 == 0;
        std::string answer = relevant ? "treatment includes " + pick(good, rng) : "the answer mentions " + pick(bad, rng);
        const int score = relevant ? 9 + static_cast<int>(i % 3) : 1 + static_cast<int>(i % 3);
        out.push_back({"what is the treatment of flu ?", answer, score, static_cast<int>(i % 4) + 1, 4});
    }
    return out;
}

std::vector<downstream::NliPair> separable_nli_set()
{
    const std::vector<std::string> premises = {"the patient has a fever", "the scan shows a lesion",
                                               "the child was vaccinated", "blood pressure is high",
                                               "the cough lasted two weeks", "no rash was observed",
                                               "the wound healed quickly", "the test came back clear",
                                               "she reports chest pain", "he sleeps poorly"};
    std::vector<downstream::NliPair> out;
    for (std::size_t i = 0; i < 30; ++i) {
        const auto label = static_cast<downstream::NliLabel>(i % 3);
        const char* marker = label == downstream::NliLabel::Entailment      ? "yes"
                             : label == downstream::NliLabel::Contradiction ? "no"
                                                                            : "maybe";
        out.push_back({premises[i % premises.size()], std::string(marker) + " the finding holds", label});
    }
    return out;
}

std::vector<downstream::TaggedSentence> redpox_ner_set(std::uint64_t seed)
{
    auto rng = make_rng(seed, 5);
    const std::vector<std::string> words = {"the", "patient", "had", "severe", "mild", "signs", "of",
                                            "fever", "and", "rash", "after", "travel", "was", "treated"};
    std::vector<downstream::TaggedSentence> out;
    for (std::size_t i = 0; i < 24; ++i) {
        downstream::TaggedSentence s;
        const std::size_t len = 6 + i % 5;
        const std::size_t pos = i % len;
        for (std::size_t k = 0; k < len; ++k) {
            const bool disease = k == pos || (i % 4 == 0 && k + 3 == len);
            s.tokens.push_back(disease ? "redpox" : pick(words, rng));
            s.tags.push_back(disease ? downstream::Tag::B : downstream::Tag::O);
        }
        out.push_back(std::move(s));
    }
    return out;
}

tok::SubwordVocab downstream_vocab()
{
    std::vector<std::string> corpus;
    for (const auto& p : regression_set()) {
        corpus.push_back(p.question + " " + p.answer);
    }
    for (const auto& p : separable_nli_set()) {
        corpus.push_back(p.premise + " " + p.hypothesis);
    }
    for (const auto& s : redpox_ner_set()) {
        for (const auto& t : s.tokens) {
            corpus.push_back(t);
        }
    }
    return tok::build_vocab(corpus, 400);
}

ProbeConfig ProbeConfig::desk(std::uint64_t seed)
{
    ProbeConfig c;
    c.seed = seed;
    c.encoder.layers = 2;
    c.encoder.heads = 2;
    c.encoder.model_dim = 32;
    c.encoder.ffn_dim = 64;
    c.encoder.max_seq_len = 64;
    c.encoder.tie_embeddings = true;
    c.encoder.seed = seed;
    c.infusion = train::TrainConfig::desk();
    c.infusion.epochs = 60;
    c.infusion.seed = seed;
    c.fine_tune.epochs = 20;
    c.fine_tune.learning_rate = 1e-3;
    c.fine_tune.batch_size = 16;
    c.fine_tune.max_len = 64;
    c.fine_tune.seed = seed;
    return c;
}

ProbeResult run_infusion_probe(const ProbeConfig& cfg)
{
    auto world = make_world(cfg.diseases, cfg.aspects, cfg.keywords_per_pair, cfg.seed);
    auto passages = infusion_passages(world, cfg.infusion_copies, cfg.seed, cfg.keywords_per_passage);
    auto vocab = world_vocab(world, passages);
    const std::size_t half = cfg.keywords_per_pair / 2;
    std::vector<downstream::QaPair> train_pairs;
    for (std::size_t r = 0; r < std::max<std::size_t>(1, cfg.train_rounds); ++r) {
        auto round = qa_pairs(world, 0, half, cfg.seed + 100 + r, cfg.asked_aspects);
        train_pairs.insert(train_pairs.end(), round.begin(), round.end());
    }
    downstream::Dataset train_qa = std::move(train_pairs);
    downstream::Dataset test_qa = qa_pairs(world, half, cfg.keywords_per_pair, cfg.seed + 1, cfg.asked_aspects);

    auto ecfg = cfg.encoder;
    ecfg.vocab_size = vocab.size();
    corpus::BuildConfig bcfg;
    bcfg.max_seq_len = ecfg.max_seq_len;
    bcfg.seed = cfg.seed;
    auto corpus = corpus::build_corpus(passages, vocab, bcfg, corpus::MaskMode::Default);

    ProbeResult result;
    auto fresh = model::init_params(ecfg);

    auto baseline = downstream::attach_head(fresh, ecfg, downstream::HeadKind::Regression, cfg.seed);
    downstream::fine_tune(baseline, train_qa, vocab, cfg.fine_tune);
    result.baseline_accuracy = downstream::evaluate_task(baseline, test_qa, vocab, cfg.fine_tune).at("accuracy");

    auto trained = train::train(fresh, ecfg, corpus, cfg.infusion, {});
    if (!trained.curve.empty() && trained.curve.back().accuracy.combined) {
        result.infusion_masked_accuracy = *trained.curve.back().accuracy.combined;
    }
    auto infused = downstream::attach_head(trained.params, ecfg, downstream::HeadKind::Regression, cfg.seed);
    downstream::fine_tune(infused, train_qa, vocab, cfg.fine_tune);
    result.infused_accuracy = downstream::evaluate_task(infused, test_qa, vocab, cfg.fine_tune).at("accuracy");
    return result;
}

} // namespace dki::synthetic
