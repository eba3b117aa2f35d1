#include "dki/downstream.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>

#include <json.hpp>

#include "dki/error.hpp"
#include "dki/text.hpp"

namespace dki::downstream {

using model::EncoderParams;
using model::Gradients;
using tok::TokenId;

std::string_view nli_label_name(NliLabel l)
{
    switch (l) {
    case NliLabel::Entailment: return "entailment";
    case NliLabel::Contradiction: return "contradiction";
    case NliLabel::Neutral: return "neutral";
    }
    return "neutral";
}

NliLabel parse_nli_label(std::string_view s)
{
    auto l = text::to_lower(s);
    if (l == "entailment") {
        return NliLabel::Entailment;
    }
    if (l == "contradiction") {
        return NliLabel::Contradiction;
    }
    if (l == "neutral") {
        return NliLabel::Neutral;
    }
    throw ValidationError("unknown NLI label '" + std::string(s) + "'");
}

char tag_char(Tag t) { return t == Tag::B ? 'B' : t == Tag::I ? 'I' : 'O'; }

Tag parse_tag(std::string_view s)
{
    if (s == "B") {
        return Tag::B;
    }
    if (s == "I") {
        return Tag::I;
    }
    if (s == "O") {
        return Tag::O;
    }
    throw ValidationError("unknown tag '" + std::string(s) + "'");
}

double qa_target_score(int reference_score, int reference_rank, int m)
{
    if (m <= 0) {
        throw ValidationError("candidate count m must be positive");
    }
    if (reference_score < 1 || reference_score > 11) {
        throw ValidationError("reference score must lie in 1..11");
    }
    if (reference_rank < 1 || reference_rank > 4) {
        throw ValidationError("reference rank must lie in 1..4");
    }
    return static_cast<double>(reference_score)
           - static_cast<double>(reference_rank - 1) / static_cast<double>(m);
}

HeadKind parse_head_kind(std::string_view s)
{
    if (s == "regression" || s == "qa") {
        return HeadKind::Regression;
    }
    if (s == "classify3" || s == "nli") {
        return HeadKind::Classify3;
    }
    if (s == "tag3" || s == "ner") {
        return HeadKind::Tag3;
    }
    throw ValidationError("unknown head kind '" + std::string(s) + "'");
}

TaskModel attach_head(EncoderParams encoder, const model::EncoderConfig& cfg, HeadKind kind,
                      std::uint64_t seed)
{
    cfg.validate();
    TaskModel m;
    m.encoder = std::move(encoder);
    m.config = cfg;
    m.kind = kind;
    const std::size_t out = kind == HeadKind::Regression ? 1 : 3;
    m.head_weight = Matrix<float>(cfg.model_dim, out);
    m.head_bias = Matrix<float>(1, out);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 0.02);
    for (auto& w : m.head_weight.flat()) {
        w = static_cast<float>(normal(rng));
    }
    return m;
}

TaskOutput task_forward(const TaskModel& model, std::span<const TokenId> ids)
{
    TaskOutput out;
    out.trace = model::encode(model.encoder, model.config, ids);
    const auto& h = out.trace.hidden;
    const std::size_t rows = model.kind == HeadKind::Tag3 ? h.rows() : 1;
    out.values = Matrix<double>(rows, model.outputs());
    for (std::size_t i = 0; i < rows; ++i) {
        for (std::size_t k = 0; k < model.outputs(); ++k) {
            double s = model.head_bias(0, k);
            for (std::size_t j = 0; j < h.cols(); ++j) {
                s += h(i, j) * static_cast<double>(model.head_weight(j, k));
            }
            out.values(i, k) = model.kind == HeadKind::Regression ? s * model.target_scale + model.target_shift : s;
        }
    }
    return out;
}

tok::TokenSeq pack_pair(std::string_view text_a, std::string_view text_b,
                        const tok::SubwordVocab& vocab, std::size_t max_len)
{
    if (text::collapse_whitespace(text_a).empty()) {
        throw ValidationError("first text of a pair must be non-empty");
    }
    auto a = tok::wordpiece_tokenize(text_a, vocab);
    auto b = tok::wordpiece_tokenize(text_b, vocab);
    const std::size_t framing = b.size() == 0 ? 2 : 3;
    if (max_len < framing + 1) {
        throw ValidationError("max_len too small to pack a pair");
    }
    while (a.size() + b.size() + framing > max_len) {
        auto& longer = b.size() >= a.size() ? b : a;
        longer.ids.pop_back();
        longer.surface.pop_back();
    }
    tok::TokenSeq out;
    out.ids.push_back(tok::kCls);
    out.surface.emplace_back("[CLS]");
    out.append(a);
    out.ids.push_back(tok::kSep);
    out.surface.emplace_back("[SEP]");
    if (b.size() != 0) {
        out.append(b);
        out.ids.push_back(tok::kSep);
        out.surface.emplace_back("[SEP]");
    }
    return out;
}

FineTuneConfig FineTuneConfig::paper(HeadKind kind)
{
    FineTuneConfig c;
    switch (kind) {
    case HeadKind::Regression:
        c.batch_size = 16;
        c.learning_rate = 1e-5;
        break;
    case HeadKind::Classify3:
        c.batch_size = 32;
        c.learning_rate = 1e-5;
        break;
    case HeadKind::Tag3:
        c.batch_size = 32;
        c.learning_rate = 5e-5;
        break;
    }
    return c;
}

FineTuneConfig FineTuneConfig::from_json(const nlohmann::json& j, FineTuneConfig c)
{
    c.epochs = j.value("epochs", c.epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.seed = j.value("seed", c.seed);
    c.max_len = j.value("max_len", c.max_len);
    c.relevance_threshold = j.value("relevance_threshold", c.relevance_threshold);
    return c;
}

namespace {

struct Encoded {
    std::vector<TokenId> ids;
    double target = 0.0;           // regression
    int label = 0;                 // classify3
    std::vector<int> tag_labels;   // tag3; -1 = ignored position
    std::vector<std::size_t> word_heads; // tag3: position of each word's first piece
    std::size_t group = 0;         // QA question index
    bool relevant = false;
};

std::vector<Encoded> encode_dataset(const Dataset& data, const tok::SubwordVocab& vocab,
                                    const FineTuneConfig& cfg, HeadKind kind)
{
    std::vector<Encoded> out;
    if (const auto* qa = std::get_if<std::vector<QaPair>>(&data)) {
        if (kind != HeadKind::Regression) {
            throw ValidationError("QA data needs a regression head");
        }
        std::map<std::string, std::size_t> groups;
        for (const auto& p : *qa) {
            Encoded e;
            e.ids = pack_pair(p.question, p.answer, vocab, cfg.max_len).ids;
            e.target = qa_target_score(p.reference_score, p.reference_rank, p.m);
            e.group = groups.emplace(p.question, groups.size()).first->second;
            e.relevant = e.target >= cfg.relevance_threshold;
            out.push_back(std::move(e));
        }
    } else if (const auto* nli = std::get_if<std::vector<NliPair>>(&data)) {
        if (kind != HeadKind::Classify3) {
            throw ValidationError("NLI data needs a classify3 head");
        }
        for (const auto& p : *nli) {
            Encoded e;
            e.ids = pack_pair(p.premise, p.hypothesis, vocab, cfg.max_len).ids;
            e.label = static_cast<int>(p.label);
            out.push_back(std::move(e));
        }
    } else {
        if (kind != HeadKind::Tag3) {
            throw ValidationError("tagging data needs a tag3 head");
        }
        for (const auto& s : std::get<std::vector<TaggedSentence>>(data)) {
            if (s.tokens.size() != s.tags.size()) {
                throw ValidationError("tokens and tags differ in length");
            }
            Encoded e;
            e.ids.push_back(tok::kCls);
            e.tag_labels.push_back(-1);
            for (std::size_t w = 0; w < s.tokens.size(); ++w) {
                auto pieces = tok::wordpiece_tokenize(s.tokens[w], vocab);
                if (pieces.size() == 0) {
                    pieces.ids.push_back(tok::kUnk);
                }
                if (e.ids.size() + pieces.size() + 1 > cfg.max_len) {
                    break;
                }
                e.word_heads.push_back(e.ids.size());
                for (std::size_t k = 0; k < pieces.size(); ++k) {
                    e.ids.push_back(pieces.ids[k]);
                    e.tag_labels.push_back(k == 0 ? static_cast<int>(s.tags[w]) : -1);
                }
            }
            e.ids.push_back(tok::kSep);
            e.tag_labels.push_back(-1);
            out.push_back(std::move(e));
        }
    }
    if (out.empty()) {
        throw ValidationError("dataset is empty");
    }
    return out;
}

struct HeadGrads {
    Matrix<double> weight;
    Matrix<double> bias;
};

// Softmax cross-entropy on a row; writes scale * dL/dz into grad.
double cross_entropy(std::span<const double> z, int label, std::span<double> grad, double scale)
{
    auto p = model::softmax_probs(z);
    for (std::size_t k = 0; k < p.size(); ++k) {
        grad[k] += scale * p[k];
    }
    grad[static_cast<std::size_t>(label)] -= scale;
    return -std::log(std::max(p[static_cast<std::size_t>(label)], 1e-300));
}

double example_loss_grad(const TaskModel& m, const Encoded& e, Gradients& g, HeadGrads& hg, double scale)
{
    auto out = task_forward(m, e.ids);
    Matrix<double> d_values(out.values.rows(), out.values.cols());
    double loss = 0.0;
    switch (m.kind) {
    case HeadKind::Regression: {
        // squared error in standardized units
        const double diff = (out.values(0, 0) - e.target) / m.target_scale;
        loss = diff * diff;
        d_values(0, 0) = 2.0 * diff * scale;
        break;
    }
    case HeadKind::Classify3:
        loss = cross_entropy(out.values.row(0), e.label, d_values.row(0), scale);
        break;
    case HeadKind::Tag3: {
        std::size_t labeled = 0;
        for (int t : e.tag_labels) {
            labeled += t >= 0;
        }
        if (labeled == 0) {
            return 0.0;
        }
        const double w = scale / static_cast<double>(labeled);
        for (std::size_t i = 0; i < e.tag_labels.size(); ++i) {
            if (e.tag_labels[i] >= 0) {
                loss += cross_entropy(out.values.row(i), e.tag_labels[i], d_values.row(i), w)
                        / static_cast<double>(labeled);
            }
        }
        break;
    }
    }
    const auto& h = out.trace.hidden;
    Matrix<double> d_hidden(h.rows(), h.cols());
    for (std::size_t i = 0; i < d_values.rows(); ++i) {
        for (std::size_t k = 0; k < d_values.cols(); ++k) {
            const double gv = d_values(i, k);
            if (gv == 0.0) {
                continue;
            }
            hg.bias(0, k) += gv;
            for (std::size_t j = 0; j < h.cols(); ++j) {
                hg.weight(j, k) += gv * h(i, j);
                d_hidden(i, j) += gv * static_cast<double>(m.head_weight(j, k));
            }
        }
    }
    model::backward_encoder(out.trace, m.encoder, m.config, d_hidden, g);
    return loss;
}

std::vector<Matrix<double>> predict_all(const TaskModel& m, const std::vector<Encoded>& data)
{
    std::vector<Matrix<double>> out;
    out.reserve(data.size());
    for (const auto& e : data) {
        out.push_back(task_forward(m, e.ids).values);
    }
    return out;
}

int argmax(std::span<const double> row)
{
    return static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
}

std::map<std::string, double> compute_metrics(const TaskModel& m, const std::vector<Encoded>& data)
{
    std::map<std::string, double> metrics;
    auto preds = predict_all(m, data);
    switch (m.kind) {
    case HeadKind::Regression: {
        double se = 0.0;
        std::map<std::size_t, std::vector<std::size_t>> groups;
        for (std::size_t i = 0; i < data.size(); ++i) {
            const double diff = preds[i](0, 0) - data[i].target;
            se += diff * diff;
            groups[data[i].group].push_back(i);
        }
        std::vector<std::vector<bool>> ranked;
        for (auto& [gid, members] : groups) {
            std::stable_sort(members.begin(), members.end(), [&](std::size_t a, std::size_t b) {
                return preds[a](0, 0) > preds[b](0, 0);
            });
            std::vector<bool> flags;
            for (auto i : members) {
                flags.push_back(data[i].relevant);
            }
            ranked.push_back(std::move(flags));
        }
        metrics["mse"] = se / static_cast<double>(data.size());
        metrics["accuracy"] = precision_at_k(ranked, 1);
        metrics["mrr"] = mrr(ranked);
        metrics["precision_at_1"] = precision_at_k(ranked, 1);
        break;
    }
    case HeadKind::Classify3: {
        std::vector<int> p, g;
        for (std::size_t i = 0; i < data.size(); ++i) {
            p.push_back(argmax(preds[i].row(0)));
            g.push_back(data[i].label);
        }
        metrics["accuracy"] = accuracy(p, g);
        break;
    }
    case HeadKind::Tag3: {
        std::vector<std::vector<Tag>> ps, gs;
        std::size_t hit = 0, n = 0;
        for (std::size_t i = 0; i < data.size(); ++i) {
            std::vector<Tag> p, g;
            for (auto pos : data[i].word_heads) {
                p.push_back(static_cast<Tag>(argmax(preds[i].row(pos))));
                g.push_back(static_cast<Tag>(data[i].tag_labels[pos]));
                hit += p.back() == g.back();
                ++n;
            }
            ps.push_back(std::move(p));
            gs.push_back(std::move(g));
        }
        metrics["span_f1"] = span_f1(ps, gs);
        metrics["token_accuracy"] = n == 0 ? 0.0 : static_cast<double>(hit) / static_cast<double>(n);
        break;
    }
    }
    return metrics;
}

} // namespace

FineTuneReport fine_tune(TaskModel& model, const Dataset& data, const tok::SubwordVocab& vocab,
                         const FineTuneConfig& cfg, const Dataset* eval)
{
    if (cfg.batch_size == 0 || !(cfg.learning_rate > 0.0)) {
        throw ValidationError("fine-tuning needs a positive batch size and learning rate");
    }
    auto train_set = encode_dataset(data, vocab, cfg, model.kind);
    if (model.kind == HeadKind::Regression && !model.target_fitted) {
        double mean = 0.0, sq = 0.0;
        for (const auto& e : train_set) {
            mean += e.target;
        }
        mean /= static_cast<double>(train_set.size());
        for (const auto& e : train_set) {
            sq += (e.target - mean) * (e.target - mean);
        }
        const double sd = std::sqrt(sq / static_cast<double>(train_set.size()));
        model.target_shift = mean;
        model.target_scale = sd > 1e-9 ? sd : 1.0;
        model.target_fitted = true;
    }
    auto state = train::AdamState::for_config(model.config);
    HeadGrads head_m{Matrix<double>(model.head_weight.rows(), model.head_weight.cols()),
                     Matrix<double>(1, model.head_bias.cols())};
    HeadGrads head_v = head_m;
    auto grads = Gradients::zeros(model.config);
    auto scratch = Gradients::zeros(model.config);
    HeadGrads hg = head_m;

    FineTuneReport report;
    std::vector<std::size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        std::seed_seq seq{static_cast<std::uint32_t>(cfg.seed), static_cast<std::uint32_t>(epoch)};
        std::mt19937_64 rng(seq);
        std::shuffle(order.begin(), order.end(), rng);
        double loss_sum = 0.0;
        for (std::size_t b = 0; b < order.size(); b += cfg.batch_size) {
            const auto len = std::min(cfg.batch_size, order.size() - b);
            const double scale = 1.0 / static_cast<double>(len);
            grads.set_zero();
            hg.weight.fill(0.0);
            hg.bias.fill(0.0);
            for (std::size_t k = 0; k < len; ++k) {
                scratch.set_zero();
                loss_sum += example_loss_grad(model, train_set[order[b + k]], scratch, hg, scale);
                auto d = grads.named_tensors();
                auto s = scratch.named_tensors();
                for (std::size_t t = 0; t < d.size(); ++t) {
                    auto df = d[t].second->flat();
                    auto sf = s[t].second->flat();
                    for (std::size_t i = 0; i < df.size(); ++i) {
                        df[i] += sf[i];
                    }
                }
            }
            train::check_finite("head_weight", hg.weight.flat());
            train::check_finite("head_bias", hg.bias.flat());
            train::adam_step(model.encoder, grads, state, cfg.learning_rate, cfg.adam);
            train::adam_update(model.head_weight.flat(), hg.weight.flat(), head_m.weight.flat(),
                               head_v.weight.flat(), cfg.learning_rate, cfg.adam, state.step);
            train::adam_update(model.head_bias.flat(), hg.bias.flat(), head_m.bias.flat(),
                               head_v.bias.flat(), cfg.learning_rate, cfg.adam, state.step);
        }
        report.epoch_loss.push_back(loss_sum / static_cast<double>(order.size()));
    }
    report.metrics = eval ? evaluate_task(model, *eval, vocab, cfg) : compute_metrics(model, train_set);
    return report;
}

std::map<std::string, double> evaluate_task(const TaskModel& model, const Dataset& data,
                                            const tok::SubwordVocab& vocab, const FineTuneConfig& cfg)
{
    return compute_metrics(model, encode_dataset(data, vocab, cfg, model.kind));
}

template <typename T>
double accuracy(const std::vector<T>& preds, const std::vector<T>& golds)
{
    if (preds.size() != golds.size()) {
        throw ValidationError("prediction and gold lengths differ");
    }
    if (preds.empty()) {
        return 0.0;
    }
    std::size_t hit = 0;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        hit += preds[i] == golds[i];
    }
    return static_cast<double>(hit) / static_cast<double>(preds.size());
}

template double accuracy<int>(const std::vector<int>&, const std::vector<int>&);
template double accuracy<NliLabel>(const std::vector<NliLabel>&, const std::vector<NliLabel>&);
template double accuracy<Tag>(const std::vector<Tag>&, const std::vector<Tag>&);

double mrr(const std::vector<std::vector<bool>>& ranked)
{
    if (ranked.empty()) {
        return 0.0;
    }
    double sum = 0.0;
    for (const auto& list : ranked) {
        auto it = std::find(list.begin(), list.end(), true);
        if (it != list.end()) {
            sum += 1.0 / static_cast<double>(it - list.begin() + 1);
        }
    }
    return sum / static_cast<double>(ranked.size());
}

double precision_at_k(const std::vector<std::vector<bool>>& ranked, std::size_t k)
{
    if (k == 0) {
        throw ValidationError("precision cutoff k must be positive");
    }
    if (ranked.empty()) {
        return 0.0;
    }
    double sum = 0.0;
    for (const auto& list : ranked) {
        auto top = std::min(k, list.size());
        sum += static_cast<double>(std::count(list.begin(), list.begin() + static_cast<std::ptrdiff_t>(top), true))
               / static_cast<double>(k);
    }
    return sum / static_cast<double>(ranked.size());
}

std::vector<std::pair<std::size_t, std::size_t>> bio_decode(const std::vector<Tag>& tags)
{
    std::vector<std::pair<std::size_t, std::size_t>> spans;
    std::optional<std::size_t> open;
    for (std::size_t i = 0; i < tags.size(); ++i) {
        if (tags[i] == Tag::B || (tags[i] == Tag::I && !open)) {
            if (open) {
                spans.emplace_back(*open, i);
            }
            open = i;
        } else if (tags[i] == Tag::O && open) {
            spans.emplace_back(*open, i);
            open.reset();
        }
    }
    if (open) {
        spans.emplace_back(*open, tags.size());
    }
    return spans;
}

std::vector<Tag> bio_encode(const std::vector<std::pair<std::size_t, std::size_t>>& spans, std::size_t length)
{
    std::vector<Tag> tags(length, Tag::O);
    for (const auto& [s, e] : spans) {
        if (s >= e || e > length) {
            throw ValidationError("span out of range");
        }
        tags[s] = Tag::B;
        for (auto i = s + 1; i < e; ++i) {
            tags[i] = Tag::I;
        }
    }
    return tags;
}

double span_f1(const std::vector<std::vector<Tag>>& pred, const std::vector<std::vector<Tag>>& gold)
{
    if (pred.size() != gold.size()) {
        throw ValidationError("prediction and gold sentence counts differ");
    }
    std::size_t tp = 0, np = 0, ng = 0;
    for (std::size_t s = 0; s < pred.size(); ++s) {
        if (pred[s].size() != gold[s].size()) {
            throw ValidationError("prediction and gold tag lengths differ");
        }
        auto ps = bio_decode(pred[s]);
        auto gs = bio_decode(gold[s]);
        std::set<std::pair<std::size_t, std::size_t>> gset(gs.begin(), gs.end());
        for (const auto& sp : ps) {
            tp += gset.count(sp);
        }
        np += ps.size();
        ng += gs.size();
    }
    if (np + ng == 0) {
        return 1.0;
    }
    return 2.0 * static_cast<double>(tp) / static_cast<double>(np + ng);
}

double span_f1(const std::vector<Tag>& pred, const std::vector<Tag>& gold)
{
    return span_f1(std::vector<std::vector<Tag>>{pred}, std::vector<std::vector<Tag>>{gold});
}

Dataset read_dataset(HeadKind kind, std::string_view jsonl)
{
    std::vector<QaPair> qa;
    std::vector<NliPair> nli;
    std::vector<TaggedSentence> ner;
    std::size_t line_no = 0;
    for (const auto& line : text::split(jsonl, '\n')) {
        ++line_no;
        if (text::collapse_whitespace(line).empty()) {
            continue;
        }
        try {
            auto j = nlohmann::json::parse(line);
            switch (kind) {
            case HeadKind::Regression: {
                QaPair p{j.at("question").get<std::string>(), j.at("answer").get<std::string>(),
                         j.at("reference_score").get<int>(), j.at("reference_rank").get<int>(),
                         j.at("m").get<int>()};
                qa_target_score(p.reference_score, p.reference_rank, p.m);
                qa.push_back(std::move(p));
                break;
            }
            case HeadKind::Classify3:
                nli.push_back({j.at("premise").get<std::string>(), j.at("hypothesis").get<std::string>(),
                               parse_nli_label(j.at("label").get<std::string>())});
                break;
            case HeadKind::Tag3: {
                TaggedSentence s;
                s.tokens = j.at("tokens").get<std::vector<std::string>>();
                for (const auto& t : j.at("tags").get<std::vector<std::string>>()) {
                    s.tags.push_back(parse_tag(t));
                }
                if (s.tokens.size() != s.tags.size()) {
                    throw ValidationError("tokens and tags differ in length");
                }
                for (std::size_t i = 0; i < s.tags.size(); ++i) {
                    if (s.tags[i] == Tag::I && (i == 0 || s.tags[i - 1] == Tag::O)) {
                        throw ValidationError("I tag without a preceding B or I");
                    }
                }
                ner.push_back(std::move(s));
                break;
            }
            }
        } catch (const nlohmann::json::exception& e) {
            throw SchemaError(e.what(), line_no);
        } catch (const SchemaError&) {
            throw;
        } catch (const ValidationError& e) {
            throw SchemaError(e.what(), line_no);
        }
    }
    switch (kind) {
    case HeadKind::Regression: return qa;
    case HeadKind::Classify3: return nli;
    case HeadKind::Tag3: return ner;
    }
    return qa;
}

std::string write_dataset(const Dataset& data)
{
    std::string out;
    auto emit = [&](const nlohmann::ordered_json& j) {
        out += j.dump();
        out += '\n';
    };
    if (const auto* qa = std::get_if<std::vector<QaPair>>(&data)) {
        for (const auto& p : *qa) {
            nlohmann::ordered_json j;
            j["question"] = p.question;
            j["answer"] = p.answer;
            j["reference_score"] = p.reference_score;
            j["reference_rank"] = p.reference_rank;
            j["m"] = p.m;
            emit(j);
        }
    } else if (const auto* nli = std::get_if<std::vector<NliPair>>(&data)) {
        for (const auto& p : *nli) {
            nlohmann::ordered_json j;
            j["premise"] = p.premise;
            j["hypothesis"] = p.hypothesis;
            j["label"] = std::string(nli_label_name(p.label));
            emit(j);
        }
    } else {
        for (const auto& s : std::get<std::vector<TaggedSentence>>(data)) {
            nlohmann::ordered_json j;
            j["tokens"] = s.tokens;
            std::vector<std::string> tags;
            for (auto t : s.tags) {
                tags.emplace_back(1, tag_char(t));
            }
            j["tags"] = tags;
            emit(j);
        }
    }
    return out;
}

} // namespace dki::downstream
