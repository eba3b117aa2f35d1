#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "dki/tensor.hpp"
#include "dki/tokenizer.hpp"

namespace dki::model {

struct EncoderConfig {
    std::size_t vocab_size = 2000;
    std::size_t layers = 2;
    std::size_t heads = 4;
    std::size_t model_dim = 64;
    std::size_t ffn_dim = 256;
    std::size_t max_seq_len = 256;
    double layernorm_epsilon = 1e-12;
    std::uint64_t seed = 13;
    /// Reuse the token embedding as the MLM output matrix.
    bool tie_embeddings = false;

    void validate() const;
    std::size_t head_dim() const { return model_dim / heads; }

    nlohmann::json to_json() const;
    /// Missing keys keep their defaults.
    static EncoderConfig from_json(const nlohmann::json& j);

    bool operator==(const EncoderConfig&) const = default;
};

template <typename T>
struct LayerParams {
    Matrix<T> wq, wk, wv, wo; // d x d, applied as x * W
    Matrix<T> bq, bk, bv, bo; // 1 x d
    Matrix<T> ln1_gain, ln1_bias;
    Matrix<T> w1, b1; // d x ffn, 1 x ffn
    Matrix<T> w2, b2; // ffn x d, 1 x d
    Matrix<T> ln2_gain, ln2_bias;

    bool operator==(const LayerParams&) const = default;
};

/// Every learnable tensor of the encoder plus MLM head. Instantiated with
/// float for parameters and double for gradients and optimizer moments.
template <typename T>
struct ParamSet {
    Matrix<T> token_embedding;    // V x d
    Matrix<T> position_embedding; // max_seq_len x d
    std::vector<LayerParams<T>> layers;
    Matrix<T> mlm_weight; // V x d; empty when tied
    Matrix<T> mlm_bias;   // 1 x V

    /// Shapes from the config, all values zero.
    static ParamSet zeros(const EncoderConfig& cfg);

    std::vector<std::pair<std::string, Matrix<T>*>> named_tensors();
    std::vector<std::pair<std::string, const Matrix<T>*>> named_tensors() const;

    std::size_t parameter_count() const;
    void set_zero();

    bool operator==(const ParamSet&) const = default;
};

using EncoderParams = ParamSet<float>;
using Gradients = ParamSet<double>;

EncoderParams init_params(const EncoderConfig& cfg);

struct LayerCache {
    Matrix<double> input; // n x d
    Matrix<double> q, k, v;
    std::vector<Matrix<double>> attention; // per head, n x n, rows sum to 1
    Matrix<double> context;
    Matrix<double> ln1_xhat;
    std::vector<double> ln1_rstd;
    Matrix<double> ln1_out;
    Matrix<double> ffn_pre;
    Matrix<double> ffn_act;
    Matrix<double> ln2_xhat;
    std::vector<double> ln2_rstd;
};

struct EncoderTrace {
    std::vector<tok::TokenId> ids;
    std::vector<bool> attention_mask;
    std::vector<LayerCache> layers;
    Matrix<double> hidden; // n x d final hidden states
};

struct ForwardTrace {
    EncoderTrace encoder;
    Matrix<double> logits; // n x V

    const Matrix<double>& hidden() const { return encoder.hidden; }
};

/// Runs the encoder stack. An empty mask means every position is real.
EncoderTrace encode(const EncoderParams& params, const EncoderConfig& cfg,
                    std::span<const tok::TokenId> ids, std::vector<bool> attention_mask = {});

ForwardTrace forward(const EncoderParams& params, const EncoderConfig& cfg,
                     std::span<const tok::TokenId> ids, std::vector<bool> attention_mask = {});

/// Max-subtracted softmax.
std::vector<double> softmax_probs(std::span<const double> logits);

double gelu(double x);
double gelu_grad(double x);

/// Accumulates parameter gradients given dLoss/dHidden.
void backward_encoder(const EncoderTrace& trace, const EncoderParams& params,
                      const EncoderConfig& cfg, const Matrix<double>& d_hidden, Gradients& grads);

/// Accumulates parameter gradients given dLoss/dLogits. All-zero rows are skipped.
void accumulate_backward(const ForwardTrace& trace, const EncoderParams& params,
                         const EncoderConfig& cfg, const Matrix<double>& d_logits,
                         Gradients& grads);

Gradients backward(const ForwardTrace& trace, const EncoderParams& params,
                   const EncoderConfig& cfg, const Matrix<double>& d_logits);

// Checkpoint: "DKI1", u32 LE header length, JSON header, float32 LE tensors.
inline constexpr std::string_view kCheckpointMagic = "DKI1";
inline constexpr int kCheckpointMinorVersion = 1;

std::string serialize_checkpoint(const EncoderParams& params, const EncoderConfig& cfg);
std::pair<EncoderParams, EncoderConfig> deserialize_checkpoint(std::string_view bytes);

void save_checkpoint(const EncoderParams& params, const EncoderConfig& cfg, const std::string& path);
std::pair<EncoderParams, EncoderConfig> load_checkpoint(const std::string& path);

} // namespace dki::model
