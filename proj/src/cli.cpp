#include "dki/cli.hpp"

#include <chrono>
#include <filesystem>
#include <iomanip>
#include <optional>
#include <ostream>

#include <CLI11.hpp>

#include "dki/error.hpp"
#include "dki/mesh_vocab.hpp"
#include "dki/text.hpp"
#include "dki/tokenizer.hpp"
#include "dki/wiki_extract.hpp"

namespace dki::cli {

namespace fs = std::filesystem;

PipelineConfig PipelineConfig::for_preset(std::string_view preset)
{
    PipelineConfig c;
    c.preset = std::string(preset);
    if (preset == "desk") {
        c.train = train::TrainConfig::desk();
        c.fine_tune.learning_rate = 1e-3;
    } else if (preset == "paper") {
        c.train = train::TrainConfig::paper();
        c.build.max_seq_len = 512;
        c.encoder.max_seq_len = 512;
    } else {
        throw ValidationError("unknown preset '" + std::string(preset) + "' (expected desk or paper)");
    }
    return c;
}

void PipelineConfig::apply_json(const nlohmann::json& j)
{
    if (!j.is_object()) {
        throw ValidationError("config must be a JSON object");
    }
    if (j.contains("build")) {
        const auto& b = j.at("build");
        build.max_seq_len = b.value("max_seq_len", build.max_seq_len);
        build.mask_rate = b.value("mask_rate", build.mask_rate);
        build.seed = b.value("seed", build.seed);
        if (b.contains("templates")) {
            for (const auto& [name, tmpl] : b.at("templates").items()) {
                auto a = wiki::parse_aspect(name);
                if (!a) {
                    throw ValidationError("unknown aspect '" + name + "' in templates");
                }
                build.templates[*a] = tmpl.get<std::string>();
            }
        }
    }
    if (j.contains("train")) {
        train = train::TrainConfig::from_json(j.at("train"), train);
    }
    if (j.contains("encoder")) {
        auto merged = encoder.to_json();
        merged.update(j.at("encoder"));
        encoder = model::EncoderConfig::from_json(merged);
    }
    if (j.contains("fine_tune")) {
        fine_tune = downstream::FineTuneConfig::from_json(j.at("fine_tune"), fine_tune);
    }
    if (j.contains("seed")) {
        set_seed(j.at("seed").get<std::uint64_t>());
    }
    workers = j.value("workers", workers);
}

void PipelineConfig::set_seed(std::uint64_t seed)
{
    build.seed = seed;
    train.seed = seed;
    encoder.seed = seed;
    fine_tune.seed = seed;
}

namespace {

void require_input(const std::string& path)
{
    if (!fs::exists(path)) {
        throw IoError("input not found: '" + path + "'");
    }
}

class StageTimer {
   public:
    StageTimer(std::ostream& err, std::string name)
        : m_err(err), m_name(std::move(name)), m_start(std::chrono::steady_clock::now())
    {
    }
    ~StageTimer()
    {
        const std::chrono::duration<double> dt = std::chrono::steady_clock::now() - m_start;
        m_err << "[dki] " << m_name << " finished in " << std::fixed << std::setprecision(3) << dt.count()
              << " s\n";
    }

   private:
    std::ostream& m_err;
    std::string m_name;
    std::chrono::steady_clock::time_point m_start;
};

nlohmann::json accuracy_json(const train::MaskedAccuracy& acc)
{
    auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
    nlohmann::json j;
    j["disease_acc"] = opt(acc.disease);
    j["aspect_acc"] = opt(acc.aspect);
    j["combined_acc"] = opt(acc.combined);
    j["mlm_acc"] = opt(acc.mlm);
    j["disease_positions"] = acc.disease_positions;
    j["aspect_positions"] = acc.aspect_positions;
    return j;
}

struct Common {
    std::string config_path;
    std::string preset;
    std::optional<std::uint64_t> seed;
    std::optional<unsigned> workers;

    void attach(CLI::App* sub)
    {
        sub->add_option("--config", config_path, "JSON config file; flags override it");
        sub->add_option("--preset", preset, "desk or paper")->check(CLI::IsMember({"desk", "paper"}));
        sub->add_option("--seed", seed, "Seed for all randomness");
        sub->add_option("--workers", workers, "Worker threads");
    }

    PipelineConfig resolve() const
    {
        nlohmann::json j = nlohmann::json::object();
        if (!config_path.empty()) {
            require_input(config_path);
            try {
                j = nlohmann::json::parse(text::read_file(config_path));
            } catch (const nlohmann::json::parse_error& e) {
                throw ValidationError("config '" + config_path + "': " + e.what());
            }
        }
        std::string name = !preset.empty() ? preset : j.value("preset", std::string("desk"));
        auto cfg = PipelineConfig::for_preset(name);
        cfg.apply_json(j);
        if (seed) {
            cfg.set_seed(*seed);
        }
        if (workers) {
            cfg.workers = *workers;
        }
        if (cfg.workers == 0) {
            throw ValidationError("--workers must be at least 1");
        }
        cfg.train.workers = cfg.workers;
        return cfg;
    }
};

void write_json(const std::string& path, const nlohmann::json& j, std::ostream& out)
{
    if (path.empty()) {
        out << j.dump(2) << '\n';
    } else {
        text::write_file_atomic(path, j.dump(2) + "\n");
    }
}

} // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err)
{
    CLI::App app{"Disease knowledge infusion toolkit", "dki"};
    app.require_subcommand(0, 1);
    bool show_version = false;
    app.add_flag("--version", show_version, "Print version and checkpoint format");

    // extract-mesh
    struct {
        std::string input, format = "auto", branches = "C01-C26,F01", output;
        bool entry_terms = false;
    } mesh_opts;
    auto* mesh_cmd = app.add_subcommand("extract-mesh", "Build the disease vocabulary from MeSH descriptors");
    mesh_cmd->add_option("--input", mesh_opts.input, "MeSH XML or JSON file")->required();
    mesh_cmd->add_option("--format", mesh_opts.format, "auto, xml or json")
        ->check(CLI::IsMember({"auto", "xml", "json"}));
    mesh_cmd->add_option("--branches", mesh_opts.branches, "Tree prefixes, e.g. C01-C26,F01");
    mesh_cmd->add_option("--output", mesh_opts.output, "Vocabulary file")->required();
    mesh_cmd->add_flag("--include-entry-terms", mesh_opts.entry_terms, "Also add entry terms");

    // extract-wiki
    struct {
        std::string vocab, input, synonyms, output, stats;
    } wiki_opts;
    Common wiki_common;
    auto* wiki_cmd = app.add_subcommand("extract-wiki", "Harvest aspect passages from disease articles");
    wiki_cmd->add_option("--vocab", wiki_opts.vocab, "Disease vocabulary file")->required();
    wiki_cmd->add_option("--input", wiki_opts.input, "Directory of .wiki files or JSONL")->required();
    wiki_cmd->add_option("--synonyms", wiki_opts.synonyms, "Heading synonym table (JSON)");
    wiki_cmd->add_option("--output", wiki_opts.output, "Passages JSONL")->required();
    wiki_cmd->add_option("--stats", wiki_opts.stats, "CorpusStats JSON");
    wiki_common.attach(wiki_cmd);

    // build-corpus
    struct {
        std::string passages, vocab, mode = "default", output;
        std::optional<std::size_t> max_seq_len, build_vocab;
        std::optional<double> mask_rate;
    } corpus_opts;
    Common corpus_common;
    auto* corpus_cmd = app.add_subcommand("build-corpus", "Build masked infusion examples");
    corpus_cmd->add_option("--passages", corpus_opts.passages, "Passages JSONL")->required();
    corpus_cmd->add_option("--vocab", corpus_opts.vocab, "Sub-word vocabulary file")->required();
    corpus_cmd->add_option("--mode", corpus_opts.mode, "default, no_aux, no_aspect, no_disease or mlm15")
        ->check(CLI::IsMember({"default", "no_aux", "no_aspect", "no_disease", "mlm15"}));
    corpus_cmd->add_option("--max-seq-len", corpus_opts.max_seq_len, "Maximum tokens per example");
    corpus_cmd->add_option("--mask-rate", corpus_opts.mask_rate, "Masking rate for mlm15");
    corpus_cmd->add_option("--build-vocab", corpus_opts.build_vocab,
                           "Build a sub-word vocabulary of this size from the passages and write it to --vocab");
    corpus_cmd->add_option("--output", corpus_opts.output, "Examples JSONL")->required();
    corpus_common.attach(corpus_cmd);

    // train-infuse
    struct {
        std::string corpus, eval, checkpoint_dir, vocab, init;
        std::optional<std::size_t> epochs, batch_size;
        std::optional<double> lr, beta, target_accuracy;
    } train_opts;
    Common train_common;
    auto* train_cmd = app.add_subcommand("train-infuse", "Train the encoder on an infusion corpus");
    train_cmd->add_option("--corpus", train_opts.corpus, "Training examples JSONL")->required();
    train_cmd->add_option("--eval", train_opts.eval, "Evaluation examples JSONL");
    train_cmd->add_option("--checkpoint-dir", train_opts.checkpoint_dir, "Output directory")->required();
    train_cmd->add_option("--vocab", train_opts.vocab, "Sub-word vocabulary (sets the vocabulary size)");
    train_cmd->add_option("--init", train_opts.init, "Start from this checkpoint");
    train_cmd->add_option("--epochs", train_opts.epochs, "Epochs");
    train_cmd->add_option("--batch-size", train_opts.batch_size, "Batch size");
    train_cmd->add_option("--lr", train_opts.lr, "Learning rate");
    train_cmd->add_option("--beta", train_opts.beta, "Weight of the reciprocal-logit term");
    train_cmd->add_option("--target-accuracy", train_opts.target_accuracy,
                          "Stop once masked disease+aspect accuracy reaches this value");
    train_common.attach(train_cmd);

    // evaluate
    struct {
        std::string checkpoint, corpus, out;
    } eval_opts;
    Common eval_common;
    auto* eval_cmd = app.add_subcommand("evaluate", "Masked prediction accuracy and losses of a checkpoint");
    eval_cmd->add_option("--checkpoint", eval_opts.checkpoint, "Checkpoint file")->required();
    eval_cmd->add_option("--corpus", eval_opts.corpus, "Examples JSONL")->required();
    eval_cmd->add_option("--out", eval_opts.out, "Metrics JSON (stdout when omitted)");
    eval_common.attach(eval_cmd);

    // fine-tune
    struct {
        std::string task, checkpoint, data, eval, vocab, out;
        std::optional<std::size_t> epochs, batch_size;
        std::optional<double> lr;
    } ft_opts;
    Common ft_common;
    auto* ft_cmd = app.add_subcommand("fine-tune", "Fine-tune on a QA, NLI or NER dataset");
    ft_cmd->add_option("--task", ft_opts.task, "qa, nli or ner")->required()->check(CLI::IsMember({"qa", "nli", "ner"}));
    ft_cmd->add_option("--checkpoint", ft_opts.checkpoint, "Encoder checkpoint (random encoder when omitted)");
    ft_cmd->add_option("--data", ft_opts.data, "Training JSONL")->required();
    ft_cmd->add_option("--eval", ft_opts.eval, "Evaluation JSONL (training data when omitted)");
    ft_cmd->add_option("--vocab", ft_opts.vocab, "Sub-word vocabulary file")->required();
    ft_cmd->add_option("--out", ft_opts.out, "Metrics JSON")->required();
    ft_cmd->add_option("--epochs", ft_opts.epochs, "Epochs");
    ft_cmd->add_option("--batch-size", ft_opts.batch_size, "Batch size");
    ft_cmd->add_option("--lr", ft_opts.lr, "Learning rate");
    ft_common.attach(ft_cmd);

    // stats
    struct {
        std::string passages, out;
    } stats_opts;
    auto* stats_cmd = app.add_subcommand("stats", "Print CorpusStats of a passages file");
    stats_cmd->add_option("--passages", stats_opts.passages, "Passages JSONL")->required();
    stats_cmd->add_option("--out", stats_opts.out, "Write the JSON here instead of stdout");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n\n" << app.help();
        return 1;
    }

    if (show_version) {
        out << "dki " << kVersion << " (checkpoint format 1." << model::kCheckpointMinorVersion << ")\n";
        return 0;
    }
    if (app.get_subcommands().empty()) {
        err << app.help();
        return 1;
    }

    try {
        if (mesh_cmd->parsed()) {
            StageTimer timer(err, "extract-mesh");
            require_input(mesh_opts.input);
            auto spec = mesh::BranchSpec::parse(mesh_opts.branches);
            auto records = mesh::parse_mesh_descriptors(text::read_file(mesh_opts.input),
                                                        mesh::parse_layout(mesh_opts.format));
            auto vocab = mesh::build_disease_vocabulary(records, spec, mesh_opts.entry_terms);
            text::write_file_atomic(mesh_opts.output, mesh::write_vocabulary(vocab));
            err << "[dki] " << records.size() << " descriptors, " << vocab.terms.size() << " disease terms\n";
        } else if (wiki_cmd->parsed()) {
            StageTimer timer(err, "extract-wiki");
            auto cfg = wiki_common.resolve();
            require_input(wiki_opts.vocab);
            require_input(wiki_opts.input);
            auto vocab = mesh::read_vocabulary(text::read_file(wiki_opts.vocab));
            auto synonyms = wiki::AspectSynonyms::defaults();
            if (!wiki_opts.synonyms.empty()) {
                require_input(wiki_opts.synonyms);
                synonyms = wiki::AspectSynonyms::from_json(text::read_file(wiki_opts.synonyms));
            }
            auto articles = wiki::load_articles(wiki_opts.input);
            auto passages = wiki::extract_all(articles, vocab, synonyms, cfg.workers);
            text::write_file_atomic(wiki_opts.output, wiki::write_passages(passages));
            if (!wiki_opts.stats.empty()) {
                text::write_file_atomic(wiki_opts.stats, wiki::stats_to_json(wiki::corpus_stats(passages)) + "\n");
            }
            err << "[dki] " << articles.size() << " articles, " << passages.size() << " passages\n";
        } else if (corpus_cmd->parsed()) {
            StageTimer timer(err, "build-corpus");
            auto cfg = corpus_common.resolve();
            if (corpus_opts.max_seq_len) {
                cfg.build.max_seq_len = *corpus_opts.max_seq_len;
            }
            if (corpus_opts.mask_rate) {
                cfg.build.mask_rate = *corpus_opts.mask_rate;
            }
            require_input(corpus_opts.passages);
            auto passages = wiki::read_passages(text::read_file(corpus_opts.passages));
            tok::SubwordVocab vocab;
            if (corpus_opts.build_vocab) {
                std::vector<std::string> lines;
                for (const auto& p : passages) {
                    auto t = cfg.build.templates.find(p.aspect);
                    lines.push_back(corpus::make_auxiliary_sentence(
                        p.disease, p.aspect, t == cfg.build.templates.end() ? corpus::kDefaultTemplate : t->second));
                    lines.push_back(p.text);
                }
                vocab = tok::build_vocab(lines, *corpus_opts.build_vocab);
                text::write_file_atomic(corpus_opts.vocab, vocab.to_file_contents());
            } else {
                require_input(corpus_opts.vocab);
                vocab = tok::SubwordVocab::from_file_contents(text::read_file(corpus_opts.vocab));
            }
            auto examples = corpus::build_corpus(passages, vocab, cfg.build, corpus::parse_mode(corpus_opts.mode));
            text::write_file_atomic(corpus_opts.output, corpus::write_examples(examples));
            err << "[dki] " << examples.size() << " examples, vocabulary " << vocab.size() << "\n";
        } else if (train_cmd->parsed()) {
            StageTimer timer(err, "train-infuse");
            auto cfg = train_common.resolve();
            if (train_opts.epochs) {
                cfg.train.epochs = *train_opts.epochs;
            }
            if (train_opts.batch_size) {
                cfg.train.batch_size = *train_opts.batch_size;
            }
            if (train_opts.lr) {
                cfg.train.learning_rate = *train_opts.lr;
            }
            if (train_opts.beta) {
                cfg.train.beta = *train_opts.beta;
            }
            require_input(train_opts.corpus);
            auto corpus = corpus::read_examples(text::read_file(train_opts.corpus));
            std::vector<corpus::InfusionExample> eval;
            if (!train_opts.eval.empty()) {
                require_input(train_opts.eval);
                eval = corpus::read_examples(text::read_file(train_opts.eval));
            }
            model::EncoderParams params;
            model::EncoderConfig ecfg = cfg.encoder;
            if (!train_opts.init.empty()) {
                require_input(train_opts.init);
                std::tie(params, ecfg) = model::load_checkpoint(train_opts.init);
            } else {
                if (!train_opts.vocab.empty()) {
                    require_input(train_opts.vocab);
                    ecfg.vocab_size = tok::SubwordVocab::from_file_contents(text::read_file(train_opts.vocab)).size();
                }
                params = model::init_params(ecfg);
            }
            train::TrainOptions options;
            options.checkpoint_dir = train_opts.checkpoint_dir;
            options.target_accuracy = train_opts.target_accuracy;
            options.on_epoch = [&](const train::EpochMetrics& m) {
                err << "[dki] epoch " << m.epoch << " l_total " << m.l_total << " combined_acc "
                    << (m.accuracy.combined ? std::to_string(*m.accuracy.combined) : std::string("n/a")) << "\n";
            };
            fs::create_directories(train_opts.checkpoint_dir);
            auto result = train::train(std::move(params), ecfg, corpus, cfg.train, eval, options);
            model::save_checkpoint(result.params, ecfg, (fs::path(train_opts.checkpoint_dir) / "final.dki").string());
            if (result.skipped_examples > 0) {
                err << "[dki] skipped " << result.skipped_examples << " examples with nothing masked\n";
            }
        } else if (eval_cmd->parsed()) {
            StageTimer timer(err, "evaluate");
            auto cfg = eval_common.resolve();
            require_input(eval_opts.checkpoint);
            require_input(eval_opts.corpus);
            auto [params, ecfg] = model::load_checkpoint(eval_opts.checkpoint);
            auto corpus = corpus::read_examples(text::read_file(eval_opts.corpus));
            if (corpus.empty()) {
                throw ValidationError("evaluation corpus is empty");
            }
            train::LossBreakdown total;
            std::size_t scored = 0;
            for (const auto& ex : corpus) {
                if (ex.mask_positions.empty()) {
                    continue;
                }
                total += train::infusion_loss(model::forward(params, ecfg, ex.ids), ex, cfg.train);
                ++scored;
            }
            auto j = accuracy_json(train::masked_prediction_accuracy(params, ecfg, corpus));
            const double n = scored == 0 ? 1.0 : static_cast<double>(scored);
            j["l_disease"] = total.l_disease / n;
            j["l_aspect"] = total.l_aspect / n;
            j["l_mlm"] = total.l_mlm / n;
            j["l_total"] = total.l_total / n;
            j["examples"] = corpus.size();
            write_json(eval_opts.out, j, out);
        } else if (ft_cmd->parsed()) {
            StageTimer timer(err, "fine-tune");
            auto cfg = ft_common.resolve();
            const auto kind = downstream::parse_head_kind(ft_opts.task);
            if (cfg.preset == "paper") {
                auto full = downstream::FineTuneConfig::paper(kind);
                cfg.fine_tune.batch_size = full.batch_size;
                cfg.fine_tune.learning_rate = full.learning_rate;
            }
            if (ft_opts.epochs) {
                cfg.fine_tune.epochs = *ft_opts.epochs;
            }
            if (ft_opts.batch_size) {
                cfg.fine_tune.batch_size = *ft_opts.batch_size;
            }
            if (ft_opts.lr) {
                cfg.fine_tune.learning_rate = *ft_opts.lr;
            }
            require_input(ft_opts.vocab);
            require_input(ft_opts.data);
            auto vocab = tok::SubwordVocab::from_file_contents(text::read_file(ft_opts.vocab));
            model::EncoderParams params;
            model::EncoderConfig ecfg = cfg.encoder;
            if (!ft_opts.checkpoint.empty()) {
                require_input(ft_opts.checkpoint);
                std::tie(params, ecfg) = model::load_checkpoint(ft_opts.checkpoint);
            } else {
                ecfg.vocab_size = vocab.size();
                params = model::init_params(ecfg);
            }
            if (ecfg.vocab_size < vocab.size()) {
                throw ValidationError("checkpoint vocabulary is smaller than --vocab");
            }
            cfg.fine_tune.max_len = std::min(cfg.fine_tune.max_len, ecfg.max_seq_len);
            auto data = downstream::read_dataset(kind, text::read_file(ft_opts.data));
            std::optional<downstream::Dataset> eval;
            if (!ft_opts.eval.empty()) {
                require_input(ft_opts.eval);
                eval = downstream::read_dataset(kind, text::read_file(ft_opts.eval));
            }
            auto task = downstream::attach_head(std::move(params), ecfg, kind, cfg.fine_tune.seed);
            auto report = downstream::fine_tune(task, data, vocab, cfg.fine_tune, eval ? &*eval : nullptr);
            nlohmann::ordered_json j;
            j["task"] = ft_opts.task;
            j["epoch_loss"] = report.epoch_loss;
            j["metrics"] = report.metrics;
            text::write_file_atomic(ft_opts.out, j.dump(2) + "\n");
        } else if (stats_cmd->parsed()) {
            StageTimer timer(err, "stats");
            require_input(stats_opts.passages);
            auto passages = wiki::read_passages(text::read_file(stats_opts.passages));
            auto json = wiki::stats_to_json(wiki::corpus_stats(passages)) + "\n";
            if (stats_opts.out.empty()) {
                out << json;
            } else {
                text::write_file_atomic(stats_opts.out, json);
            }
        }
    } catch (const IoError& e) {
        err << "error: " << e.what() << '\n';
        return 2;
    } catch (const fs::filesystem_error& e) {
        err << "error: " << e.what() << '\n';
        return 2;
    } catch (const ValidationError& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    } catch (const nlohmann::json::exception& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}

} // namespace dki::cli
