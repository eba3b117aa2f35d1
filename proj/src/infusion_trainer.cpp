#include "dki/infusion_trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numeric>
#include <random>
#include <thread>

#include "dki/error.hpp"
#include "dki/text.hpp"

namespace dki::train {

using corpus::InfusionExample;
using corpus::MaskMode;
using model::EncoderConfig;
using model::EncoderParams;
using model::ForwardTrace;
using model::Gradients;

TrainConfig TrainConfig::desk()
{
    TrainConfig c;
    c.learning_rate = 1e-3;
    return c;
}

TrainConfig TrainConfig::paper()
{
    TrainConfig c;
    c.learning_rate = 1e-5;
    c.batch_size = 16;
    c.beta = 10.0;
    return c;
}

void TrainConfig::validate() const
{
    if (!(beta >= 0.0)) {
        throw ValidationError("beta must be non-negative");
    }
    if (!(learning_rate > 0.0)) {
        throw ValidationError("learning_rate must be positive");
    }
    if (!(clamp_epsilon > 0.0)) {
        throw ValidationError("clamp_epsilon must be positive");
    }
    if (batch_size == 0) {
        throw ValidationError("batch_size must be positive");
    }
}

nlohmann::json TrainConfig::to_json() const
{
    return {{"beta", beta},
            {"learning_rate", learning_rate},
            {"batch_size", batch_size},
            {"epochs", epochs},
            {"adam_beta1", adam.beta1},
            {"adam_beta2", adam.beta2},
            {"adam_epsilon", adam.epsilon},
            {"clamp_epsilon", clamp_epsilon},
            {"seed", seed},
            {"use_aspect_loss", use_aspect_loss},
            {"use_disease_loss", use_disease_loss},
            {"use_reciprocal_term", use_reciprocal_term},
            {"workers", workers}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j, TrainConfig c)
{
    c.beta = j.value("beta", c.beta);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.epochs = j.value("epochs", c.epochs);
    c.adam.beta1 = j.value("adam_beta1", c.adam.beta1);
    c.adam.beta2 = j.value("adam_beta2", c.adam.beta2);
    c.adam.epsilon = j.value("adam_epsilon", c.adam.epsilon);
    c.clamp_epsilon = j.value("clamp_epsilon", c.clamp_epsilon);
    c.seed = j.value("seed", c.seed);
    c.use_aspect_loss = j.value("use_aspect_loss", c.use_aspect_loss);
    c.use_disease_loss = j.value("use_disease_loss", c.use_disease_loss);
    c.use_reciprocal_term = j.value("use_reciprocal_term", c.use_reciprocal_term);
    c.workers = j.value("workers", c.workers);
    return c;
}

LossBreakdown& LossBreakdown::operator+=(const LossBreakdown& o)
{
    l_disease += o.l_disease;
    l_aspect += o.l_aspect;
    l_mlm += o.l_mlm;
    l_total += o.l_total;
    sum_disease_logits += o.sum_disease_logits;
    return *this;
}

namespace {

struct PositionTerm {
    std::size_t position;
    tok::TokenId label;
};

std::vector<PositionTerm> terms_for(const InfusionExample& ex, const std::vector<std::size_t>& positions)
{
    std::vector<PositionTerm> out;
    out.reserve(positions.size());
    for (auto p : positions) {
        out.push_back({p, ex.label_at(p)});
    }
    return out;
}

LossBreakdown compute(const ForwardTrace& trace, const InfusionExample& ex, const TrainConfig& cfg,
                      Matrix<double>* d_logits, double scale)
{
    const auto& logits = trace.logits;
    if (logits.rows() < ex.ids.size()) {
        throw ValidationError("forward trace is shorter than the example");
    }
    const bool random_masking = ex.mode == MaskMode::RandomMLM15;
    if (ex.mask_positions.empty() && (random_masking || (cfg.use_disease_loss && cfg.use_aspect_loss))) {
        throw ValidationError("example has no masked positions");
    }

    LossBreakdown out;
    out.position_nll.assign(ex.mask_positions.size(), 0.0);
    auto nll_at = [&](std::size_t position, tok::TokenId label, double weight) {
        auto row = logits.row(position);
        const double mx = *std::max_element(row.begin(), row.end());
        double sum = 0.0;
        for (double z : row) {
            sum += std::exp(z - mx);
        }
        const double log_norm = mx + std::log(sum);
        const double nll = log_norm - row[static_cast<std::size_t>(label)];
        if (d_logits != nullptr && weight != 0.0) {
            auto g = d_logits->row(position);
            for (std::size_t v = 0; v < row.size(); ++v) {
                g[v] += weight * std::exp(row[v] - log_norm);
            }
            g[static_cast<std::size_t>(label)] -= weight;
        }
        auto idx = static_cast<std::size_t>(
            std::lower_bound(ex.mask_positions.begin(), ex.mask_positions.end(), position)
            - ex.mask_positions.begin());
        out.position_nll[idx] = nll;
        return nll;
    };

    if (random_masking) {
        for (std::size_t i = 0; i < ex.mask_positions.size(); ++i) {
            out.l_mlm += nll_at(ex.mask_positions[i], ex.labels[i], scale);
        }
        out.l_total = out.l_mlm;
        return out;
    }

    const double wd = cfg.use_disease_loss ? scale : 0.0;
    const double wa = cfg.use_aspect_loss ? scale : 0.0;
    auto disease = terms_for(ex, ex.disease_positions);
    for (const auto& t : disease) {
        out.l_disease += nll_at(t.position, t.label, wd);
        out.sum_disease_logits += logits(t.position, static_cast<std::size_t>(t.label));
    }
    if (cfg.use_reciprocal_term && !disease.empty()) {
        const double s = out.sum_disease_logits;
        out.reciprocal_clamped = !(s > cfg.clamp_epsilon);
        out.l_disease += cfg.beta / std::max(s, cfg.clamp_epsilon);
        if (d_logits != nullptr && wd != 0.0 && !out.reciprocal_clamped) {
            const double g = -cfg.beta / (s * s) * wd;
            for (const auto& t : disease) {
                (*d_logits)(t.position, static_cast<std::size_t>(t.label)) += g;
            }
        }
    }
    for (const auto& t : terms_for(ex, ex.aspect_positions)) {
        out.l_aspect += nll_at(t.position, t.label, wa);
    }
    out.l_total = (cfg.use_disease_loss ? out.l_disease : 0.0) + (cfg.use_aspect_loss ? out.l_aspect : 0.0);
    return out;
}

bool usable(const InfusionExample& ex) { return !ex.mask_positions.empty(); }

} // namespace

LossBreakdown infusion_loss(const ForwardTrace& trace, const InfusionExample& ex, const TrainConfig& cfg)
{
    return compute(trace, ex, cfg, nullptr, 1.0);
}

LossBreakdown infusion_loss_grad(const ForwardTrace& trace, const InfusionExample& ex,
                                 const TrainConfig& cfg, Matrix<double>& d_logits, double scale)
{
    if (d_logits.rows() != trace.logits.rows() || d_logits.cols() != trace.logits.cols()) {
        d_logits = Matrix<double>(trace.logits.rows(), trace.logits.cols());
    }
    return compute(trace, ex, cfg, &d_logits, scale);
}

void check_finite(const std::string& name, std::span<const double> grad)
{
    for (std::size_t i = 0; i < grad.size(); ++i) {
        if (!std::isfinite(grad[i])) {
            throw NonFiniteGradient(name, i);
        }
    }
}

void adam_update(std::span<float> param, std::span<const double> grad, std::span<double> m,
                 std::span<double> v, double learning_rate, const AdamConfig& cfg, std::size_t step)
{
    const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
    const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
    for (std::size_t i = 0; i < param.size(); ++i) {
        m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * grad[i];
        v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
        const double m_hat = m[i] / c1;
        const double v_hat = v[i] / c2;
        param[i] = static_cast<float>(static_cast<double>(param[i])
                                      - learning_rate * m_hat / (std::sqrt(v_hat) + cfg.epsilon));
    }
}

AdamState AdamState::for_config(const EncoderConfig& cfg)
{
    return AdamState{Gradients::zeros(cfg), Gradients::zeros(cfg), 0};
}

void adam_step(EncoderParams& params, const Gradients& grads, AdamState& state, double learning_rate,
               const AdamConfig& cfg)
{
    auto gt = grads.named_tensors();
    for (const auto& [name, g] : gt) {
        check_finite(name, g->flat());
    }
    ++state.step;
    auto pt = params.named_tensors();
    auto mt = state.m.named_tensors();
    auto vt = state.v.named_tensors();
    if (pt.size() != gt.size() || mt.size() != gt.size() || vt.size() != gt.size()) {
        throw ValidationError("optimizer state does not match parameter layout");
    }
    for (std::size_t t = 0; t < pt.size(); ++t) {
        if (pt[t].second->size() != gt[t].second->size()) {
            throw ValidationError("gradient shape mismatch for '" + pt[t].first + "'");
        }
        adam_update(pt[t].second->flat(), gt[t].second->flat(), mt[t].second->flat(),
                    vt[t].second->flat(), learning_rate, cfg, state.step);
    }
}

namespace {

void add_into(Gradients& dst, const Gradients& src)
{
    auto d = dst.named_tensors();
    auto s = src.named_tensors();
    for (std::size_t t = 0; t < d.size(); ++t) {
        auto df = d[t].second->flat();
        auto sf = s[t].second->flat();
        for (std::size_t i = 0; i < df.size(); ++i) {
            df[i] += sf[i];
        }
    }
}

} // namespace

LossBreakdown batch_gradient(const EncoderParams& params, const EncoderConfig& ecfg,
                             const std::vector<InfusionExample>& corpus,
                             std::span<const std::size_t> batch, const TrainConfig& cfg,
                             Gradients& grads)
{
    grads.set_zero();
    LossBreakdown total;
    if (batch.empty()) {
        return total;
    }
    const double scale = 1.0 / static_cast<double>(batch.size());
    auto one = [&](std::size_t idx, Gradients& g) {
        const auto& ex = corpus[idx];
        auto trace = model::forward(params, ecfg, ex.ids);
        Matrix<double> d_logits;
        auto loss = infusion_loss_grad(trace, ex, cfg, d_logits, scale);
        model::accumulate_backward(trace, params, ecfg, d_logits, g);
        return loss;
    };

    const unsigned workers = std::max(1u, std::min<unsigned>(cfg.workers, static_cast<unsigned>(batch.size())));
    if (workers == 1) {
        auto scratch = Gradients::zeros(ecfg);
        for (auto idx : batch) {
            scratch.set_zero();
            total += one(idx, scratch);
            add_into(grads, scratch);
        }
    } else {
        std::vector<Gradients> per(batch.size());
        std::vector<LossBreakdown> losses(batch.size());
        {
            std::vector<std::jthread> pool;
            for (unsigned w = 0; w < workers; ++w) {
                pool.emplace_back([&, w] {
                    for (std::size_t b = w; b < batch.size(); b += workers) {
                        per[b] = Gradients::zeros(ecfg);
                        losses[b] = one(batch[b], per[b]);
                    }
                });
            }
        }
        for (std::size_t b = 0; b < batch.size(); ++b) {
            total += losses[b];
            add_into(grads, per[b]);
        }
    }
    total.l_disease *= scale;
    total.l_aspect *= scale;
    total.l_mlm *= scale;
    total.l_total *= scale;
    total.sum_disease_logits *= scale;
    return total;
}

MaskedAccuracy masked_prediction_accuracy(const EncoderParams& params, const EncoderConfig& cfg,
                                          const std::vector<InfusionExample>& corpus)
{
    std::size_t d_hit = 0, d_n = 0, a_hit = 0, a_n = 0, m_hit = 0, m_n = 0;
    for (const auto& ex : corpus) {
        if (ex.mask_positions.empty()) {
            continue;
        }
        auto trace = model::forward(params, cfg, ex.ids);
        auto correct = [&](std::size_t pos) {
            auto row = trace.logits.row(pos);
            auto best = static_cast<tok::TokenId>(std::max_element(row.begin(), row.end()) - row.begin());
            return best == ex.label_at(pos);
        };
        if (ex.mode == MaskMode::RandomMLM15) {
            for (auto p : ex.mask_positions) {
                m_hit += correct(p);
                ++m_n;
            }
            continue;
        }
        for (auto p : ex.disease_positions) {
            d_hit += correct(p);
            ++d_n;
        }
        for (auto p : ex.aspect_positions) {
            a_hit += correct(p);
            ++a_n;
        }
    }
    auto ratio = [](std::size_t hit, std::size_t n) -> std::optional<double> {
        if (n == 0) {
            return std::nullopt;
        }
        return static_cast<double>(hit) / static_cast<double>(n);
    };
    MaskedAccuracy acc;
    acc.disease = ratio(d_hit, d_n);
    acc.aspect = ratio(a_hit, a_n);
    acc.combined = ratio(d_hit + a_hit, d_n + a_n);
    acc.mlm = ratio(m_hit, m_n);
    acc.disease_positions = d_n;
    acc.aspect_positions = a_n;
    return acc;
}

TrainResult train(EncoderParams params, const EncoderConfig& ecfg,
                  const std::vector<InfusionExample>& corpus, const TrainConfig& cfg,
                  const std::vector<InfusionExample>& eval_corpus, const TrainOptions& options)
{
    cfg.validate();
    ecfg.validate();
    if (corpus.empty()) {
        throw ValidationError("training corpus is empty");
    }
    TrainResult result;
    std::vector<std::size_t> order;
    for (std::size_t i = 0; i < corpus.size(); ++i) {
        if (usable(corpus[i])) {
            order.push_back(i);
        } else {
            ++result.skipped_examples;
        }
    }
    if (order.empty()) {
        throw ValidationError("no training example has a masked position");
    }
    const auto& eval = eval_corpus.empty() ? corpus : eval_corpus;
    if (!options.checkpoint_dir.empty()) {
        std::filesystem::create_directories(options.checkpoint_dir);
    }

    auto state = AdamState::for_config(ecfg);
    auto grads = Gradients::zeros(ecfg);
    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        auto start = std::chrono::steady_clock::now();
        std::seed_seq seq{static_cast<std::uint32_t>(cfg.seed), static_cast<std::uint32_t>(cfg.seed >> 32),
                          static_cast<std::uint32_t>(epoch)};
        std::mt19937_64 rng(seq);
        std::shuffle(order.begin(), order.end(), rng);

        LossBreakdown sum;
        for (std::size_t b = 0; b < order.size(); b += cfg.batch_size) {
            auto len = std::min(cfg.batch_size, order.size() - b);
            std::span<const std::size_t> batch(order.data() + b, len);
            auto loss = batch_gradient(params, ecfg, corpus, batch, cfg, grads);
            const double w = static_cast<double>(len);
            sum.l_disease += loss.l_disease * w;
            sum.l_aspect += loss.l_aspect * w;
            sum.l_mlm += loss.l_mlm * w;
            sum.l_total += loss.l_total * w;
            adam_step(params, grads, state, cfg.learning_rate, cfg.adam);
        }
        EpochMetrics m;
        m.epoch = epoch;
        const double n = static_cast<double>(order.size());
        m.l_disease = sum.l_disease / n;
        m.l_aspect = sum.l_aspect / n;
        m.l_mlm = sum.l_mlm / n;
        m.l_total = sum.l_total / n;
        m.accuracy = masked_prediction_accuracy(params, ecfg, eval);
        m.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        result.curve.push_back(m);

        if (!options.checkpoint_dir.empty()) {
            char name[32];
            std::snprintf(name, sizeof name, "epoch-%03zu.dki", epoch);
            model::save_checkpoint(params, ecfg, (std::filesystem::path(options.checkpoint_dir) / name).string());
            text::write_file_atomic((std::filesystem::path(options.checkpoint_dir) / "learning_curve.csv").string(),
                                    learning_curve_csv(result.curve));
        }
        if (options.on_epoch) {
            options.on_epoch(m);
        }
        if (options.target_accuracy && m.accuracy.combined
            && *m.accuracy.combined >= *options.target_accuracy) {
            break;
        }
    }
    result.params = std::move(params);
    return result;
}

std::string learning_curve_csv(const std::vector<EpochMetrics>& curve)
{
    std::string out = "epoch,l_disease,l_aspect,l_total,disease_acc,aspect_acc,seconds\n";
    auto fmt_opt = [](const std::optional<double>& v) {
        if (!v) {
            return std::string("nan");
        }
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.6f", *v);
        return std::string(buf);
    };
    for (const auto& m : curve) {
        char buf[160];
        std::snprintf(buf, sizeof buf, "%zu,%.6f,%.6f,%.6f,", m.epoch, m.l_disease, m.l_aspect,
                      m.l_total);
        out += buf;
        out += fmt_opt(m.accuracy.disease) + "," + fmt_opt(m.accuracy.aspect) + ",";
        std::snprintf(buf, sizeof buf, "%.3f\n", m.seconds);
        out += buf;
    }
    return out;
}

} // namespace dki::train
