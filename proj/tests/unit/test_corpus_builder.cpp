#include <doctest.h>

#include <set>
#include <string>

#include "dki/corpus_builder.hpp"
#include "dki/error.hpp"
#include "dki/synthetic.hpp"

using namespace dki;
using namespace dki::corpus;
using wiki::Aspect;

namespace {

tok::SubwordVocab fixture_vocab()
{
    return tok::SubwordVocab({"[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]", "what", "is", "the", "of", "?", "co",
                              "##vid", "-", "19", "diagnosis", "symptoms", "treatment", "pcr", "test", "rest", ".",
                              "path", "##ophysiology", "cough"});
}

wiki::KnowledgePassage passage(std::string disease, Aspect a, std::string text, bool mentions = false)
{
    return {std::move(disease), a, std::move(text), mentions, false};
}

std::string render_span(const InfusionExample& ex, const tok::SubwordVocab& v, std::size_t end)
{
    std::vector<tok::TokenId> span(ex.ids.begin() + 1, ex.ids.begin() + static_cast<std::ptrdiff_t>(end));
    return tok::decode(span, v);
}

} // namespace

TEST_CASE("auxiliary sentence examples")
{
    CHECK(make_auxiliary_sentence("COVID-19", Aspect::Diagnosis) == "What is the diagnosis of COVID-19?");
    CHECK(make_auxiliary_sentence("COVID-19", Aspect::Transmission) == "What is the transmission of COVID-19?");
    CHECK(make_auxiliary_sentence("Aphasia", Aspect::Symptoms) == "What is the symptoms of Aphasia?");
    CHECK(make_auxiliary_sentence("Flu", Aspect::Causes, "{disease}: {aspect}?") == "Flu: causes?");
}

TEST_CASE("default example masks disease and aspect inside the auxiliary span")
{
    auto v = fixture_vocab();
    BuildConfig cfg;
    auto ex = build_example(passage("COVID-19", Aspect::Diagnosis, "PCR test."), v, cfg, MaskMode::Default);
    CHECK(ex.mask_positions.size() == 5);
    CHECK(ex.aspect_positions == std::vector<std::size_t>{4});
    CHECK(ex.disease_positions == std::vector<std::size_t>{6, 7, 8, 9});
    CHECK(ex.ids.front() == tok::kCls);
    CHECK(ex.ids.back() == tok::kSep);
    CHECK(render_span(ex, v, 11) == "what is the [MASK] of [MASK] [MASK] [MASK] [MASK] ?");
    CHECK(ex.label_at(4) == v.id("diagnosis"));
    CHECK(tok::decode(unmasked_ids(ex), v) == "[CLS] what is the diagnosis of covid - 19 ? pcr test . [SEP]");
}

TEST_CASE("ablation modes")
{
    auto v = fixture_vocab();
    BuildConfig cfg;
    auto p = passage("COVID-19", Aspect::Diagnosis, "PCR test.");
    auto na = build_example(p, v, cfg, MaskMode::NoAspect);
    CHECK(na.aspect_positions.empty());
    CHECK(na.mask_positions == na.disease_positions);
    CHECK(na.ids[4] == v.id("diagnosis"));
    auto nd = build_example(p, v, cfg, MaskMode::NoDisease);
    CHECK(nd.disease_positions.empty());
    CHECK(nd.mask_positions == std::vector<std::size_t>{4});

    // no auxiliary sentence and no mention: nothing to mask for the disease
    auto noaux = build_example(p, v, cfg, MaskMode::NoAuxiliary);
    CHECK(noaux.disease_positions.empty());
    CHECK(noaux.ids[1] == v.id("pcr"));

    auto mention = passage("COVID-19", Aspect::Diagnosis, "COVID-19 diagnosis: PCR test.", true);
    auto m = build_example(mention, v, cfg, MaskMode::NoAuxiliary);
    CHECK(m.disease_positions == std::vector<std::size_t>{1, 2, 3, 4});
    CHECK(m.aspect_positions == std::vector<std::size_t>{5});
}

TEST_CASE("multi-piece aspect words are masked fully")
{
    auto v = fixture_vocab();
    auto ex = build_example(passage("COVID-19", Aspect::Pathophysiology, "cough"), v, {}, MaskMode::Default);
    CHECK(ex.aspect_positions == std::vector<std::size_t>{4, 5});
    CHECK(ex.mask_positions.size() == 6);
}

TEST_CASE("truncation keeps the auxiliary sentence")
{
    auto v = fixture_vocab();
    BuildConfig cfg;
    cfg.max_seq_len = 16;
    auto ex = build_example(passage("COVID-19", Aspect::Diagnosis, "pcr test pcr test pcr test pcr test"), v, cfg,
                            MaskMode::Default);
    CHECK(ex.ids.size() == 16);
    CHECK(ex.truncated == 4);
    CHECK(ex.mask_positions.size() == 5);
    CHECK_THROWS_AS(build_example(passage("COVID-19", Aspect::Diagnosis, "   "), v, cfg, MaskMode::Default),
                    ValidationError);
    cfg.max_seq_len = 8;
    CHECK_THROWS_AS(cfg.validate(), ValidationError);
}

TEST_CASE("random masking is seeded per passage")
{
    auto world = synthetic::make_world(10, {Aspect::Symptoms, Aspect::Causes}, 4, 3);
    auto ps = synthetic::infusion_passages(world, 5, 3);
    auto v = synthetic::world_vocab(world, ps);
    BuildConfig cfg;
    auto a = build_corpus(ps, v, cfg, MaskMode::RandomMLM15);
    auto b = build_corpus(ps, v, cfg, MaskMode::RandomMLM15);
    CHECK(a == b);
    for (std::size_t i = 0; i < ps.size(); ++i) {
        CHECK(build_example(ps[i], v, cfg, MaskMode::RandomMLM15, i) == a[i]);
        CHECK(a[i].mode == MaskMode::RandomMLM15);
        CHECK(a[i].aspect_positions.empty());
    }
    cfg.seed = 99;
    CHECK_FALSE(build_corpus(ps, v, cfg, MaskMode::RandomMLM15) == a);
}

TEST_CASE("example invariants across modes")
{
    auto world = synthetic::make_world(12, {wiki::kAllAspects.begin(), wiki::kAllAspects.end()}, 3, 8);
    auto ps = synthetic::infusion_passages(world, 1, 8);
    auto v = synthetic::world_vocab(world, ps);
    BuildConfig cfg;
    cfg.max_seq_len = 20;
    for (auto mode : {MaskMode::Default, MaskMode::NoAspect, MaskMode::NoDisease, MaskMode::RandomMLM15}) {
        for (const auto& ex : build_corpus(ps, v, cfg, mode)) {
            CHECK(ex.ids.size() <= cfg.max_seq_len);
            CHECK(ex.labels.size() == ex.mask_positions.size());
            CHECK(std::is_sorted(ex.mask_positions.begin(), ex.mask_positions.end()));
            CHECK(std::adjacent_find(ex.mask_positions.begin(), ex.mask_positions.end()) == ex.mask_positions.end());
            for (auto p : ex.mask_positions) {
                CHECK(ex.ids[p] == tok::kMask);
            }
            if (mode != MaskMode::RandomMLM15) {
                std::set<std::size_t> u(ex.aspect_positions.begin(), ex.aspect_positions.end());
                u.insert(ex.disease_positions.begin(), ex.disease_positions.end());
                CHECK(u == std::set<std::size_t>(ex.mask_positions.begin(), ex.mask_positions.end()));
            }
        }
    }
}

TEST_CASE("examples jsonl")
{
    auto world = synthetic::make_world(10, {Aspect::Symptoms, Aspect::Causes, Aspect::Treatment, Aspect::Diagnosis,
                                            Aspect::Prevention},
                                       2, 4);
    auto ps = synthetic::infusion_passages(world, 2, 4);
    auto v = synthetic::world_vocab(world, ps);
    BuildConfig cfg;
    cfg.max_seq_len = 18;
    auto ex = build_corpus(ps, v, cfg, MaskMode::Default);
    REQUIRE(ex.size() == 100);
    CHECK(read_examples(write_examples(ex)) == ex);
    CHECK(read_examples("").empty());

    const std::string missing =
        "{\"ids\":[2,4,3],\"mask_positions\":[1],\"labels\":[9],\"aspect_positions\":[1],\"disease_positions\":[],"
        "\"mode\":\"default\"}\n{\"ids\":[2,4,3],\"mask_positions\":[1],\"aspect_positions\":[],"
        "\"disease_positions\":[1],\"mode\":\"default\"}\n";
    try {
        read_examples(missing);
        FAIL("missing labels accepted");
    } catch (const SchemaError& e) {
        CHECK(e.line() == 2);
    }
}

TEST_CASE("mode names")
{
    for (auto m : {MaskMode::Default, MaskMode::NoAuxiliary, MaskMode::NoAspect, MaskMode::NoDisease,
                   MaskMode::RandomMLM15}) {
        CHECK(parse_mode(mode_name(m)) == m);
    }
    CHECK_THROWS_AS(parse_mode("bogus"), ValidationError);
}
