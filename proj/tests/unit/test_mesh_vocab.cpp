#include <doctest.h>

#include <algorithm>
#include <random>
#include <string>

#include "dki/error.hpp"
#include "dki/mesh_vocab.hpp"
#include "dki/text.hpp"

using namespace dki;
using namespace dki::mesh;

namespace {

DescriptorRecord rec(std::string id, std::string term, std::vector<std::string> trees)
{
    return {std::move(id), std::move(term), std::move(trees), {}};
}

} // namespace

TEST_CASE("parse json fixture layout")
{
    auto r = parse_mesh_descriptors(R"([{"id": "D000001", "term": "Fever", "tree_numbers": ["C23.888"]}])");
    REQUIRE(r.size() == 1);
    CHECK(r[0] == rec("D000001", "Fever", {"C23.888"}));
    CHECK(parse_mesh_descriptors("[]").empty());
}

TEST_CASE("parse xml layout")
{
    const std::string xml = R"(<?xml version="1.0"?>
<!DOCTYPE DescriptorRecordSet SYSTEM "desc.dtd">
<DescriptorRecordSet LanguageCode="eng">
  <DescriptorRecord DescriptorClass="1">
    <DescriptorUI>D000001</DescriptorUI>
    <DescriptorName><String>Fever &amp; Chills</String></DescriptorName>
    <TreeNumberList><TreeNumber>C23.888</TreeNumber><TreeNumber>C01.1</TreeNumber></TreeNumberList>
  </DescriptorRecord>
  <DescriptorRecord>
    <DescriptorUI>D000002</DescriptorUI>
    <DescriptorName><String>Femur</String></DescriptorName>
  </DescriptorRecord>
</DescriptorRecordSet>)";
    auto r = parse_mesh_descriptors(xml);
    REQUIRE(r.size() == 2);
    CHECK(r[0] == rec("D000001", "Fever & Chills", {"C23.888", "C01.1"}));
    CHECK(r[1].tree_numbers.empty());
    CHECK(parse_mesh_descriptors("<DescriptorRecordSet></DescriptorRecordSet>").empty());
}

TEST_CASE("truncated documents report an offset")
{
    const std::string json = R"([{"id": "D1", "term": "Fever", "tree)";
    CHECK_THROWS_AS(parse_mesh_descriptors(json), ParseError);
    const std::string xml = "<DescriptorRecordSet><DescriptorRecord><DescriptorUI>D1</Descr";
    try {
        parse_mesh_descriptors(xml);
        FAIL("accepted truncated xml");
    } catch (const ParseError& e) {
        CHECK(e.offset() <= xml.size());
    }
    CHECK_THROWS_AS(parse_mesh_descriptors("hello", InputLayout::Auto), FormatError);
}

TEST_CASE("json records are validated")
{
    CHECK_THROWS_AS(parse_mesh_descriptors(R"([{"id": "", "term": "x", "tree_numbers": []}])"), ValidationError);
    CHECK_THROWS_AS(parse_mesh_descriptors(R"([{"id": "D1", "term": "x", "tree_numbers": ["c01"]}])"),
                    ValidationError);
}

TEST_CASE("in_branch examples")
{
    auto spec = BranchSpec::disease_default();
    CHECK(in_branch("C01.252", spec));
    CHECK(in_branch("F01.145.126", spec));
    CHECK_FALSE(in_branch("F02.463", spec));
    CHECK_FALSE(in_branch("A01.111", spec));
    CHECK(in_branch("C26", spec));
    CHECK_FALSE(in_branch("C27.1", spec));
    CHECK_THROWS_AS(in_branch("C01..2", spec), ValidationError);
    CHECK_THROWS_AS(in_branch("", spec), ValidationError);
    CHECK_THROWS_AS(in_branch("01.2", spec), ValidationError);
}

TEST_CASE("tree number syntax")
{
    CHECK(is_valid_tree_number("C01.252.AB1"));
    CHECK(is_valid_tree_number("F01"));
    CHECK_FALSE(is_valid_tree_number("C"));
    CHECK_FALSE(is_valid_tree_number("C01."));
    CHECK_FALSE(is_valid_tree_number("c01.1"));
}

TEST_CASE("branch spec parsing")
{
    auto s = BranchSpec::parse("C01-C03,F01");
    CHECK(s.included_prefixes == std::vector<std::string>{"C01", "C02", "C03", "F01"});
    CHECK(BranchSpec::parse("C01-C26,F01").included_prefixes == BranchSpec::disease_default().included_prefixes);
    CHECK_THROWS_AS(BranchSpec::parse("C01-F02"), ValidationError);
    CHECK_THROWS_AS(BranchSpec::parse("C1"), ValidationError);
    CHECK_THROWS_AS(BranchSpec::parse("C01,C01"), ValidationError);
}

TEST_CASE("vocabulary examples")
{
    auto spec = BranchSpec::disease_default();
    auto v = build_disease_vocabulary(
        {rec("D1", "Fever", {"C23.888"}), rec("D2", "Anxiety", {"F01.145"}), rec("D3", "Femur", {"A01.378"})}, spec);
    CHECK(v.terms == std::set<std::string>{"anxiety", "fever"});
    CHECK(v.term_count == 2);
    CHECK(v.source_count == 3);

    auto dup = build_disease_vocabulary({rec("D1", "COVID-19", {"C01.1"}), rec("D2", "Covid-19", {"C01.2"})}, spec);
    CHECK(dup.terms == std::set<std::string>{"covid-19"});
}

TEST_CASE("entry terms are opt-in")
{
    DescriptorRecord r = rec("D1", "Influenza", {"C01.1"});
    r.entry_terms = {"Flu", "Grippe"};
    auto spec = BranchSpec::disease_default();
    CHECK(build_disease_vocabulary({r}, spec).term_count == 1);
    CHECK(build_disease_vocabulary({r}, spec, true).terms == std::set<std::string>{"flu", "grippe", "influenza"});
}

TEST_CASE("normalize_term examples")
{
    CHECK(normalize_term("COVID-19") == "covid-19");
    CHECK(normalize_term("  Myotonic   Dystrophy ") == "myotonic dystrophy");
    CHECK(normalize_term("") == "");
}

TEST_CASE("vocabulary is order-insensitive and sourced from in-branch records")
{
    std::mt19937_64 rng(3);
    const char* letters = "ACFZ";
    std::vector<DescriptorRecord> records;
    for (int i = 0; i < 200; ++i) {
        std::vector<std::string> trees;
        const int k = static_cast<int>(rng() % 3);
        for (int t = 0; t < k; ++t) {
            char buf[32];
            std::snprintf(buf, sizeof buf, "%c%02d.%03d", letters[rng() % 4], static_cast<int>(rng() % 30),
                          static_cast<int>(rng() % 1000));
            trees.emplace_back(buf);
        }
        records.push_back(rec("D" + std::to_string(i), "Term " + std::to_string(rng() % 120), trees));
    }
    auto spec = BranchSpec::disease_default();
    auto base = build_disease_vocabulary(records, spec);
    for (int trial = 0; trial < 5; ++trial) {
        std::shuffle(records.begin(), records.end(), rng);
        CHECK(build_disease_vocabulary(records, spec).terms == base.terms);
    }
    // brute-force re-scan: every term has an in-branch source record
    for (const auto& term : base.terms) {
        bool found = false;
        for (const auto& r : records) {
            if (normalize_term(r.preferred_term) != term) {
                continue;
            }
            for (const auto& tn : r.tree_numbers) {
                const auto head = tn.substr(0, tn.find('.'));
                found = found || ((head[0] == 'C' && head >= "C01" && head <= "C26") || head == "F01");
            }
        }
        CHECK_MESSAGE(found, term);
    }
    CHECK(base.term_count == base.terms.size());
}

TEST_CASE("in_branch depends only on the top-level prefix")
{
    std::mt19937_64 rng(5);
    auto spec = BranchSpec::disease_default();
    for (int i = 0; i < 500; ++i) {
        char head[8];
        std::snprintf(head, sizeof head, "%c%02d", "ACFD"[rng() % 4], static_cast<int>(rng() % 40));
        std::string a = head, b = head;
        for (int k = 0; k < static_cast<int>(rng() % 4); ++k) {
            a += "." + std::to_string(rng() % 1000);
            b += "." + std::to_string(rng() % 1000);
        }
        CHECK(in_branch(a, spec) == in_branch(b, spec));
        CHECK(in_branch(a, spec) == in_branch(head, spec));
    }
}

TEST_CASE("vocabulary file round trip")
{
    auto v = build_disease_vocabulary({rec("D1", "Fever", {"C23.888"}), rec("D2", "Anxiety", {"F01.145"})},
                                      BranchSpec::disease_default());
    const auto text = write_vocabulary(v);
    CHECK(text == "anxiety\nfever\n");
    CHECK(read_vocabulary(text).terms == v.terms);
}

TEST_CASE("bundled fixtures agree across layouts")
{
    const std::string dir = std::string(DKI_SOURCE_DIR) + "/data/fixtures/";
    auto j = parse_mesh_descriptors(text::read_file(dir + "mesh.json"), InputLayout::Json);
    auto x = parse_mesh_descriptors(text::read_file(dir + "mesh.xml"), InputLayout::Xml);
    CHECK(j == x);
    CHECK(build_disease_vocabulary(j, BranchSpec::disease_default()).term_count == 22);
}
