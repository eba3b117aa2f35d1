#pragma once

#include <cstddef>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace dki::mesh {

struct DescriptorRecord {
    std::string unique_id;
    std::string preferred_term; // original surface form
    std::vector<std::string> tree_numbers;
    std::vector<std::string> entry_terms; // only used when synonyms are enabled

    bool operator==(const DescriptorRecord&) const = default;
};

/// Top-level tree prefixes that make a descriptor count as a disease.
struct BranchSpec {
    std::vector<std::string> included_prefixes;

    /// C01..C26 plus F01 (mental disorders).
    static BranchSpec disease_default();

    /// Parses "C01-C26,F01": comma separated prefixes or same-letter ranges.
    static BranchSpec parse(std::string_view text);

    void validate() const;
};

struct DiseaseVocabulary {
    std::set<std::string> terms; // normalized, lexicographic
    std::size_t source_count = 0;
    std::size_t term_count = 0;

    bool contains(std::string_view term) const;
};

enum class InputLayout { Auto, Xml, Json };

InputLayout parse_layout(std::string_view name);

std::vector<DescriptorRecord> parse_mesh_descriptors(std::string_view input,
                                                     InputLayout layout = InputLayout::Auto);

bool is_valid_tree_number(std::string_view tree_number);

/// True iff the segment before the first dot is one of the included prefixes.
bool in_branch(std::string_view tree_number, const BranchSpec& spec);

DiseaseVocabulary build_disease_vocabulary(const std::vector<DescriptorRecord>& records,
                                           const BranchSpec& spec,
                                           bool include_entry_terms = false);

std::string normalize_term(std::string_view term);

/// One term per line, sorted.
std::string write_vocabulary(const DiseaseVocabulary& vocab);
DiseaseVocabulary read_vocabulary(std::string_view contents);

} // namespace dki::mesh
