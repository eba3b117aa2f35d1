#pragma once

#include <array>
#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "dki/mesh_vocab.hpp"

namespace dki::wiki {

enum class Aspect {
    Information,
    Causes,
    Symptoms,
    Diagnosis,
    Treatment,
    Prevention,
    Pathophysiology,
    Transmission,
};

inline constexpr std::size_t kAspectCount = 8;

inline constexpr std::array<Aspect, kAspectCount> kAllAspects = {
    Aspect::Information, Aspect::Causes,     Aspect::Symptoms,        Aspect::Diagnosis,
    Aspect::Treatment,   Aspect::Prevention, Aspect::Pathophysiology, Aspect::Transmission,
};

/// Capitalized aspect name, e.g. "Diagnosis".
std::string_view aspect_name(Aspect a);

/// Lowercase single word used in auxiliary sentences, e.g. "diagnosis".
std::string_view surface_word(Aspect a);

/// Accepts either the name or the surface word, case-insensitively.
std::optional<Aspect> parse_aspect(std::string_view name);

struct Section {
    std::string heading;
    std::string body;
    int level = 2;

    bool operator==(const Section&) const = default;
};

struct Article {
    std::string title;
    std::string lead;
    std::vector<Section> sections;
};

struct KnowledgePassage {
    std::string disease;
    Aspect aspect = Aspect::Information;
    std::string text;
    bool mentions_disease = false;
    bool mentions_aspect = false;

    bool operator==(const KnowledgePassage&) const = default;
};

struct CorpusStats {
    std::size_t passage_count = 0;
    std::map<Aspect, std::size_t> per_aspect_counts;
    double both_mention_rate = 0.0;
};

/// Heading synonyms per aspect. Lookup is exact on the normalized heading;
/// when a phrase is listed under several aspects the first aspect in
/// declaration order wins.
class AspectSynonyms {
   public:
    static AspectSynonyms defaults();

    /// {"Causes": ["cause", "etiology"], ...}; aspects may be omitted.
    static AspectSynonyms from_json(std::string_view json_text);

    std::optional<Aspect> lookup(std::string_view heading) const;
    const std::vector<std::pair<Aspect, std::vector<std::string>>>& table() const
    {
        return m_table;
    }

   private:
    std::vector<std::pair<Aspect, std::vector<std::string>>> m_table;
};

Article parse_sections(std::string_view raw_text, std::string title = {});

std::optional<Aspect> map_heading_to_aspect(std::string_view heading,
                                            const AspectSynonyms& synonyms = AspectSynonyms::defaults());

/// Removes links, templates and <ref> elements.
std::string clean_markup(std::string_view text);

std::vector<KnowledgePassage> extract_passages(const Article& article,
                                               const mesh::DiseaseVocabulary& vocab,
                                               const AspectSynonyms& synonyms = AspectSynonyms::defaults());

/// Extracts from many articles using up to `workers` threads. Output is sorted
/// by title then aspect and does not depend on the worker count.
std::vector<KnowledgePassage> extract_all(const std::vector<Article>& articles,
                                          const mesh::DiseaseVocabulary& vocab,
                                          const AspectSynonyms& synonyms, unsigned workers = 1);

CorpusStats corpus_stats(const std::vector<KnowledgePassage>& passages);

std::string passage_to_json(const KnowledgePassage& p);
std::string write_passages(const std::vector<KnowledgePassage>& passages);
std::vector<KnowledgePassage> read_passages(std::string_view jsonl);
std::string stats_to_json(const CorpusStats& stats);

/// Reads a directory of .wiki files (URL-encoded title as file stem) or a
/// JSONL stream of {"title", "text"} objects.
std::vector<Article> load_articles(const std::string& path);

std::string url_decode(std::string_view s);

} // namespace dki::wiki
