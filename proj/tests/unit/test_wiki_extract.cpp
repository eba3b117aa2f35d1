#include <doctest.h>

#include <random>
#include <string>

#include "dki/error.hpp"
#include "dki/text.hpp"
#include "dki/wiki_extract.hpp"

using namespace dki;
using namespace dki::wiki;

namespace {

mesh::DiseaseVocabulary vocab_of(std::set<std::string> terms)
{
    mesh::DiseaseVocabulary v;
    v.terms = std::move(terms);
    v.term_count = v.terms.size();
    v.source_count = v.term_count;
    return v;
}

// Lines that are not headings, whitespace-normalized and joined.
std::string non_heading_text(const std::string& raw)
{
    std::string out;
    for (const auto& line : text::split(raw, '\n')) {
        auto t = text::collapse_whitespace(line);
        if (t.size() >= 2 && t.front() == '=' && t.back() == '=') {
            continue;
        }
        if (!t.empty()) {
            out += (out.empty() ? "" : " ") + t;
        }
    }
    return out;
}

} // namespace

TEST_CASE("aspect catalog")
{
    CHECK(kAllAspects.size() == 8);
    for (auto a : kAllAspects) {
        CHECK(surface_word(a) == text::to_lower(aspect_name(a)));
        CHECK(parse_aspect(aspect_name(a)) == a);
        CHECK(parse_aspect(surface_word(a)) == a);
    }
    CHECK_FALSE(parse_aspect("history").has_value());
}

TEST_CASE("parse_sections examples")
{
    auto a = parse_sections("intro\n== Diagnosis ==\nbody A\n=== Sub ===\nbody B");
    CHECK(a.lead == "intro");
    REQUIRE(a.sections.size() == 1);
    CHECK(a.sections[0].heading == "Diagnosis");
    CHECK(a.sections[0].body == "body A\nbody B");

    auto none = parse_sections("just text\nmore text");
    CHECK(none.lead == "just text\nmore text");
    CHECK(none.sections.empty());

    auto empty = parse_sections("== Treatment ==\n\n== Prevention ==\nx");
    REQUIRE(empty.sections.size() == 2);
    CHECK(empty.sections[0].heading == "Treatment");
    CHECK(empty.sections[0].body == "");
    CHECK(empty.sections[1].body == "x");
}

TEST_CASE("parse_sections keeps all non-heading text")
{
    std::mt19937_64 rng(9);
    const std::vector<std::string> pieces = {"alpha beta", "  gamma  ", "", "== Causes ==", "=== Detail ===",
                                             "== Signs and symptoms ==", "delta\tepsilon", "zeta = eta"};
    for (int trial = 0; trial < 200; ++trial) {
        std::string raw;
        const int lines = static_cast<int>(rng() % 12);
        for (int i = 0; i < lines; ++i) {
            raw += pieces[rng() % pieces.size()] + "\n";
        }
        auto art = parse_sections(raw);
        std::string rebuilt = art.lead;
        for (const auto& s : art.sections) {
            CHECK_FALSE(s.heading.empty());
            rebuilt += "\n" + s.body;
        }
        CHECK(non_heading_text(rebuilt) == non_heading_text(raw));
    }
}

TEST_CASE("heading mapping examples")
{
    CHECK(map_heading_to_aspect("Signs and symptoms") == Aspect::Symptoms);
    CHECK(map_heading_to_aspect("Management") == Aspect::Treatment);
    CHECK_FALSE(map_heading_to_aspect("History").has_value());
    CHECK(map_heading_to_aspect("Screening") == Aspect::Prevention);
    CHECK(map_heading_to_aspect("Screening and diagnosis") == Aspect::Diagnosis);
    CHECK(map_heading_to_aspect("  ETIOLOGY ") == Aspect::Causes);
    CHECK(map_heading_to_aspect("Spread") == Aspect::Transmission);
    CHECK(map_heading_to_aspect("Pathogenesis") == Aspect::Pathophysiology);
}

TEST_CASE("synonym table from json")
{
    auto syn = AspectSynonyms::from_json(R"({"Causes": ["origin"], "treatment": ["care", "origin"]})");
    CHECK(syn.lookup("Origin") == Aspect::Causes);
    CHECK(syn.lookup("care") == Aspect::Treatment);
    CHECK_FALSE(syn.lookup("cause").has_value());
    CHECK_THROWS_AS(AspectSynonyms::from_json(R"({"Bogus": ["x"]})"), ValidationError);
    CHECK_THROWS_AS(AspectSynonyms::from_json("[1,2]"), ValidationError);
}

TEST_CASE("markup cleaner")
{
    CHECK(clean_markup("see [[Lung|lungs]] and [[fever]]") == "see lungs and fever");
    CHECK(clean_markup("a{{cite|x{{nested}}}}b") == "ab");
    CHECK(clean_markup("x<ref>Smith 2001</ref>y<ref name=\"a\"/>z") == "xyz");
}

TEST_CASE("extract_passages examples")
{
    auto vocab = vocab_of({"covid-19"});
    auto art = parse_sections(
        "COVID-19 is a disease.\n== Diagnosis ==\nPCR test.\n== Treatment ==\nRest.\n== History ==\nOld.",
        "COVID-19");
    auto ps = extract_passages(art, vocab);
    REQUIRE(ps.size() == 3);
    CHECK(ps[0].aspect == Aspect::Information);
    CHECK(ps[1].aspect == Aspect::Diagnosis);
    CHECK(ps[2].aspect == Aspect::Treatment);
    CHECK(ps[0].mentions_disease);
    CHECK_FALSE(ps[1].mentions_disease);
    CHECK(ps[1].disease == "COVID-19");

    auto paris = parse_sections("Capital.\n== Treatment ==\nNone.", "Paris");
    CHECK(extract_passages(paris, vocab).empty());

    auto sym = parse_sections("Lead.\n== Symptoms ==\nCough and fever.", "COVID-19");
    auto sp = extract_passages(sym, vocab);
    REQUIRE(sp.size() == 2);
    CHECK_FALSE(sp[1].mentions_disease);
    CHECK_FALSE(sp[1].mentions_aspect);
}

TEST_CASE("empty bodies produce no passage")
{
    auto art = parse_sections("== Treatment ==\n  \n== Prevention ==\nWash hands.", "Flu");
    auto ps = extract_passages(art, vocab_of({"flu"}));
    REQUIRE(ps.size() == 1);
    CHECK(ps[0].aspect == Aspect::Prevention);
}

TEST_CASE("corpus_stats examples")
{
    std::vector<KnowledgePassage> ps(4);
    ps[0].mentions_disease = ps[0].mentions_aspect = true;
    ps[1].mentions_disease = ps[1].mentions_aspect = true;
    ps[2].mentions_disease = true;
    ps[3].aspect = Aspect::Causes;
    auto s = corpus_stats(ps);
    CHECK(s.passage_count == 4);
    CHECK(s.both_mention_rate == 0.5);
    CHECK(s.per_aspect_counts.at(Aspect::Information) == 3);
    CHECK(s.per_aspect_counts.at(Aspect::Causes) == 1);

    auto e = corpus_stats({});
    CHECK(e.passage_count == 0);
    CHECK(e.both_mention_rate == 0.0);
}

TEST_CASE("fixture extraction invariants")
{
    const std::string dir = std::string(DKI_SOURCE_DIR) + "/data/fixtures/";
    auto records = mesh::parse_mesh_descriptors(text::read_file(dir + "mesh.json"));
    auto vocab = mesh::build_disease_vocabulary(records, mesh::BranchSpec::disease_default());
    auto syn = AspectSynonyms::from_json(text::read_file(dir + "aspects.json"));
    auto articles = load_articles(dir + "wiki");
    auto serial = extract_all(articles, vocab, syn, 1);
    auto parallel = extract_all(articles, vocab, syn, 4);
    CHECK(serial == parallel);
    CHECK(serial.size() == 46);
    std::size_t sum = 0;
    auto stats = corpus_stats(serial);
    for (const auto& [a, n] : stats.per_aspect_counts) {
        sum += n;
    }
    CHECK(sum == stats.passage_count);
    for (const auto& p : serial) {
        CHECK_FALSE(text::collapse_whitespace(p.text).empty());
        CHECK(p.mentions_disease == text::contains_ci(p.text, mesh::normalize_term(p.disease)));
        CHECK(p.mentions_aspect == text::contains_ci(p.text, surface_word(p.aspect)));
        bool reachable = p.aspect == Aspect::Information;
        for (const auto& [a, phrases] : syn.table()) {
            reachable = reachable || (a == p.aspect && !phrases.empty());
        }
        CHECK(reachable);
    }
}

TEST_CASE("passages jsonl round trip")
{
    KnowledgePassage p{"COVID-19", Aspect::Diagnosis, "PCR \"test\"\nline", false, true};
    auto back = read_passages(write_passages({p, p}));
    REQUIRE(back.size() == 2);
    CHECK(back[0] == p);
    CHECK(read_passages("").empty());
    CHECK_THROWS_AS(read_passages("{\"disease\": \"x\"}\n"), SchemaError);
}

TEST_CASE("url decoding of file names")
{
    CHECK(url_decode("Hospital%20care") == "Hospital care");
    CHECK(url_decode("Crohn%27s_disease") == "Crohn's disease");
}

TEST_CASE("jsonl article input")
{
    const auto path = std::string(DKI_SOURCE_DIR) + "/build_articles_tmp.jsonl";
    text::write_file_atomic(path, "{\"title\": \"Flu\", \"text\": \"Lead.\\n== Spread ==\\nCoughs.\"}\n");
    auto arts = load_articles(path);
    std::remove(path.c_str());
    REQUIRE(arts.size() == 1);
    CHECK(arts[0].title == "Flu");
    CHECK(extract_passages(arts[0], vocab_of({"flu"})).back().aspect == Aspect::Transmission);
    CHECK_THROWS_AS(load_articles("/nonexistent/path"), IoError);
}
