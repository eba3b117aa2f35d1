#include <sstream>

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "dki/cli.hpp"
#include "dki/corpus_builder.hpp"
#include "dki/downstream.hpp"
#include "dki/error.hpp"
#include "dki/infusion_trainer.hpp"
#include "dki/mesh_vocab.hpp"
#include "dki/tokenizer.hpp"
#include "dki/wiki_extract.hpp"

namespace py = pybind11;
using namespace dki;

namespace {

wiki::Aspect to_aspect(const std::string& name)
{
    auto a = wiki::parse_aspect(name);
    if (!a) {
        throw ValidationError("unknown aspect '" + name + "'");
    }
    return *a;
}

py::dict passage_dict(const wiki::KnowledgePassage& p)
{
    py::dict d;
    d["disease"] = p.disease;
    d["aspect"] = std::string(wiki::aspect_name(p.aspect));
    d["text"] = p.text;
    d["mentions_disease"] = p.mentions_disease;
    d["mentions_aspect"] = p.mentions_aspect;
    return d;
}

wiki::KnowledgePassage passage_from(const py::dict& d)
{
    wiki::KnowledgePassage p;
    p.disease = d["disease"].cast<std::string>();
    p.aspect = to_aspect(d["aspect"].cast<std::string>());
    p.text = d["text"].cast<std::string>();
    if (d.contains("mentions_disease")) {
        p.mentions_disease = d["mentions_disease"].cast<bool>();
    }
    if (d.contains("mentions_aspect")) {
        p.mentions_aspect = d["mentions_aspect"].cast<bool>();
    }
    return p;
}

mesh::DiseaseVocabulary vocab_from_terms(const std::vector<std::string>& terms)
{
    mesh::DiseaseVocabulary v;
    for (const auto& t : terms) {
        v.terms.insert(mesh::normalize_term(t));
    }
    v.term_count = v.terms.size();
    v.source_count = terms.size();
    return v;
}

} // namespace

PYBIND11_MODULE(_core, m)
{
    m.doc() = "Disease knowledge infusion toolkit";
    m.attr("__version__") = std::string(cli::kVersion);

    py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);
    py::register_exception<IoError>(m, "IoError", PyExc_OSError);

    m.def("normalize_term", &mesh::normalize_term);
    m.def(
        "in_branch",
        [](const std::string& tree, const std::string& branches) {
            return mesh::in_branch(tree, mesh::BranchSpec::parse(branches));
        },
        py::arg("tree_number"), py::arg("branches") = "C01-C26,F01");
    m.def(
        "disease_vocabulary",
        [](const std::string& document, const std::string& branches, bool entry_terms) {
            auto records = mesh::parse_mesh_descriptors(document);
            auto v = mesh::build_disease_vocabulary(records, mesh::BranchSpec::parse(branches), entry_terms);
            return std::vector<std::string>(v.terms.begin(), v.terms.end());
        },
        py::arg("document"), py::arg("branches") = "C01-C26,F01", py::arg("include_entry_terms") = false,
        "Sorted disease terms from a MeSH XML or JSON document.");

    m.def(
        "extract_passages",
        [](const std::string& path, const std::vector<std::string>& terms, const std::string& synonyms_json,
           unsigned workers) {
            auto syn = synonyms_json.empty() ? wiki::AspectSynonyms::defaults()
                                             : wiki::AspectSynonyms::from_json(synonyms_json);
            auto passages = wiki::extract_all(wiki::load_articles(path), vocab_from_terms(terms), syn, workers);
            py::list out;
            for (const auto& p : passages) {
                out.append(passage_dict(p));
            }
            return out;
        },
        py::arg("path"), py::arg("vocabulary"), py::arg("synonyms_json") = "", py::arg("workers") = 1,
        "Passages from a directory of .wiki files or a JSONL article stream.");
    m.def(
        "corpus_stats",
        [](const std::vector<py::dict>& passages) {
            std::vector<wiki::KnowledgePassage> ps;
            for (const auto& d : passages) {
                ps.push_back(passage_from(d));
            }
            auto s = wiki::corpus_stats(ps);
            py::dict per;
            for (const auto& [a, n] : s.per_aspect_counts) {
                per[py::str(std::string(wiki::aspect_name(a)))] = n;
            }
            py::dict d;
            d["passage_count"] = s.passage_count;
            d["per_aspect_counts"] = per;
            d["both_mention_rate"] = s.both_mention_rate;
            return d;
        },
        py::arg("passages"));
    m.def(
        "auxiliary_sentence",
        [](const std::string& disease, const std::string& aspect) {
            return corpus::make_auxiliary_sentence(disease, to_aspect(aspect));
        },
        py::arg("disease"), py::arg("aspect"));

    py::class_<tok::SubwordVocab>(m, "SubwordVocab")
        .def(py::init<>())
        .def(py::init<std::vector<std::string>>(), py::arg("tokens"))
        .def_static("from_text", &tok::SubwordVocab::from_file_contents)
        .def("to_text", &tok::SubwordVocab::to_file_contents)
        .def("__len__", &tok::SubwordVocab::size)
        .def("__contains__", &tok::SubwordVocab::contains)
        .def("id", &tok::SubwordVocab::id)
        .def("token", &tok::SubwordVocab::token)
        .def_property_readonly("tokens", &tok::SubwordVocab::tokens)
        .def(
            "tokenize",
            [](const tok::SubwordVocab& v, const std::string& text) {
                auto s = tok::wordpiece_tokenize(text, v);
                return py::make_tuple(s.ids, s.surface);
            },
            py::arg("text"), "Returns (ids, pieces).")
        .def(
            "decode", [](const tok::SubwordVocab& v, const std::vector<tok::TokenId>& ids) { return tok::decode(ids, v); },
            py::arg("ids"));
    m.def(
        "build_vocab",
        [](const std::vector<std::string>& corpus, std::size_t size, std::size_t min_freq,
           const std::vector<std::string>& seeds) { return tok::build_vocab(corpus, size, min_freq, seeds); },
        py::arg("corpus"), py::arg("target_size"), py::arg("min_freq") = 1,
        py::arg("seed_pieces") = std::vector<std::string>{});

    m.def(
        "build_examples",
        [](const std::vector<py::dict>& passages, const tok::SubwordVocab& vocab, const std::string& mode,
           std::size_t max_seq_len, std::uint64_t seed) {
            std::vector<wiki::KnowledgePassage> ps;
            for (const auto& d : passages) {
                ps.push_back(passage_from(d));
            }
            corpus::BuildConfig cfg;
            cfg.max_seq_len = max_seq_len;
            cfg.seed = seed;
            py::list out;
            for (const auto& ex : corpus::build_corpus(ps, vocab, cfg, corpus::parse_mode(mode))) {
                py::dict d;
                d["ids"] = ex.ids;
                d["mask_positions"] = ex.mask_positions;
                d["labels"] = ex.labels;
                d["aspect_positions"] = ex.aspect_positions;
                d["disease_positions"] = ex.disease_positions;
                d["truncated"] = ex.truncated;
                out.append(d);
            }
            return out;
        },
        py::arg("passages"), py::arg("vocab"), py::arg("mode") = "default", py::arg("max_seq_len") = 256,
        py::arg("seed") = 13);

    m.def(
        "disease_loss",
        [](const std::vector<std::vector<double>>& logits, const std::vector<std::size_t>& positions,
           const std::vector<tok::TokenId>& labels, double beta, double clamp_epsilon) {
            if (positions.size() != labels.size()) {
                throw ValidationError("positions and labels differ in length");
            }
            const std::size_t cols = logits.empty() ? 0 : logits[0].size();
            Matrix<double> z(logits.size(), cols);
            for (std::size_t i = 0; i < logits.size(); ++i) {
                if (logits[i].size() != cols) {
                    throw ValidationError("ragged logits");
                }
                std::copy(logits[i].begin(), logits[i].end(), z.row(i).begin());
            }
            model::ForwardTrace trace;
            trace.logits = std::move(z);
            corpus::InfusionExample ex;
            ex.ids.assign(logits.size(), tok::kMask);
            ex.mask_positions = positions;
            ex.disease_positions = positions;
            ex.labels = labels;
            train::TrainConfig cfg;
            cfg.beta = beta;
            cfg.clamp_epsilon = clamp_epsilon;
            cfg.use_aspect_loss = false;
            return train::infusion_loss(trace, ex, cfg).l_disease;
        },
        py::arg("logits"), py::arg("positions"), py::arg("labels"), py::arg("beta") = 10.0,
        py::arg("clamp_epsilon") = 0.1, "Disease loss of one example given per-position logits.");

    m.def("qa_target_score", &downstream::qa_target_score, py::arg("reference_score"), py::arg("reference_rank"),
          py::arg("m"));

    m.def(
        "run_cli",
        [](const std::vector<std::string>& args) {
            std::vector<const char*> argv = {"dki"};
            for (const auto& a : args) {
                argv.push_back(a.c_str());
            }
            std::ostringstream out, err;
            int code = 0;
            {
                py::gil_scoped_release release;
                code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
            }
            return py::make_tuple(code, out.str(), err.str());
        },
        py::arg("args"), "Runs a dki subcommand; returns (exit_code, stdout, stderr).");
}
