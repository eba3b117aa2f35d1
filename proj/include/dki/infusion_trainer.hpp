#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "dki/corpus_builder.hpp"
#include "dki/encoder_model.hpp"

namespace dki::train {

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

struct TrainConfig {
    double beta = 10.0;
    double learning_rate = 1e-5;
    std::size_t batch_size = 16;
    std::size_t epochs = 4;
    AdamConfig adam;
    /// Lower bound on the summed gold disease logits in the reciprocal term.
    double clamp_epsilon = 0.1;
    std::uint64_t seed = 13;
    bool use_aspect_loss = true;
    bool use_disease_loss = true;
    bool use_reciprocal_term = true;
    /// Threads for per-example forward/backward; results do not depend on it.
    unsigned workers = 1;

    /// Small-model overfitting preset (lr 1e-3).
    static TrainConfig desk();
    /// Full-scale values: lr 1e-5, batch 16, beta 10.
    static TrainConfig paper();

    void validate() const;
    nlohmann::json to_json() const;
    /// Applies the keys present in `j` on top of `base`.
    static TrainConfig from_json(const nlohmann::json& j, TrainConfig base);
};

struct LossBreakdown {
    double l_disease = 0.0;
    double l_aspect = 0.0;
    double l_mlm = 0.0; // random-masking examples only
    double l_total = 0.0;
    double sum_disease_logits = 0.0;
    bool reciprocal_clamped = false;
    std::vector<double> position_nll; // aligned with mask_positions

    LossBreakdown& operator+=(const LossBreakdown& o);
};

/// Disease loss: summed cross-entropy over disease positions plus
/// beta / max(sum of gold logits, clamp_epsilon). Aspect loss: summed
/// cross-entropy. Random-masking examples use plain cross-entropy.
LossBreakdown infusion_loss(const model::ForwardTrace& trace, const corpus::InfusionExample& ex,
                            const TrainConfig& cfg);

/// Same as infusion_loss and also writes scale * dLoss/dLogits into `d_logits`.
LossBreakdown infusion_loss_grad(const model::ForwardTrace& trace,
                                 const corpus::InfusionExample& ex, const TrainConfig& cfg,
                                 Matrix<double>& d_logits, double scale = 1.0);

/// One bias-corrected Adam update on a flat tensor; `step` starts at 1.
void adam_update(std::span<float> param, std::span<const double> grad, std::span<double> m,
                 std::span<double> v, double learning_rate, const AdamConfig& cfg, std::size_t step);

/// Throws NonFiniteGradient naming the first offending tensor.
void check_finite(const std::string& name, std::span<const double> grad);

struct AdamState {
    model::Gradients m;
    model::Gradients v;
    std::size_t step = 0;

    static AdamState for_config(const model::EncoderConfig& cfg);
};

/// Validates every gradient before touching any parameter.
void adam_step(model::EncoderParams& params, const model::Gradients& grads, AdamState& state,
               double learning_rate, const AdamConfig& cfg);

/// Mean loss over `batch` (indices into `corpus`) with gradients summed in
/// index order, so the result is the same for any worker count.
LossBreakdown batch_gradient(const model::EncoderParams& params, const model::EncoderConfig& ecfg,
                             const std::vector<corpus::InfusionExample>& corpus,
                             std::span<const std::size_t> batch, const TrainConfig& cfg,
                             model::Gradients& grads);

struct MaskedAccuracy {
    std::optional<double> disease;  // absent when no disease positions
    std::optional<double> aspect;
    std::optional<double> combined; // disease and aspect positions pooled
    std::optional<double> mlm;      // random-masking positions
    std::size_t disease_positions = 0;
    std::size_t aspect_positions = 0;
};

MaskedAccuracy masked_prediction_accuracy(const model::EncoderParams& params,
                                          const model::EncoderConfig& cfg,
                                          const std::vector<corpus::InfusionExample>& corpus);

struct EpochMetrics {
    std::size_t epoch = 0; // 1-based
    double l_disease = 0.0;
    double l_aspect = 0.0;
    double l_mlm = 0.0;
    double l_total = 0.0;
    MaskedAccuracy accuracy;
    double seconds = 0.0;
};

struct TrainOptions {
    /// When set, writes epoch-NNN.dki checkpoints and learning_curve.csv here.
    std::string checkpoint_dir;
    /// Stop once pooled disease+aspect eval accuracy reaches this value.
    std::optional<double> target_accuracy;
    std::function<void(const EpochMetrics&)> on_epoch;
};

struct TrainResult {
    model::EncoderParams params;
    std::vector<EpochMetrics> curve;
    std::size_t skipped_examples = 0; // examples with nothing masked
};

TrainResult train(model::EncoderParams params, const model::EncoderConfig& ecfg,
                  const std::vector<corpus::InfusionExample>& corpus, const TrainConfig& cfg,
                  const std::vector<corpus::InfusionExample>& eval_corpus,
                  const TrainOptions& options = {});

/// Columns: epoch,l_disease,l_aspect,l_total,disease_acc,aspect_acc,seconds.
std::string learning_curve_csv(const std::vector<EpochMetrics>& curve);

} // namespace dki::train
