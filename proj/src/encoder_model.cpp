#include "dki/encoder_model.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include "dki/error.hpp"

namespace dki::model {

void EncoderConfig::validate() const
{
    if (vocab_size <= tok::kSpecialCount || layers == 0 || heads == 0 || model_dim == 0
        || ffn_dim == 0 || max_seq_len == 0) {
        throw ValidationError("encoder dimensions must be positive (vocab above the specials)");
    }
    if (model_dim % heads != 0) {
        throw ValidationError("model_dim must be divisible by heads");
    }
    if (!(layernorm_epsilon > 0.0)) {
        throw ValidationError("layernorm_epsilon must be positive");
    }
}

nlohmann::json EncoderConfig::to_json() const
{
    return {{"vocab_size", vocab_size},   {"layers", layers},
            {"heads", heads},             {"model_dim", model_dim},
            {"ffn_dim", ffn_dim},         {"max_seq_len", max_seq_len},
            {"layernorm_epsilon", layernorm_epsilon}, {"seed", seed},
            {"tie_embeddings", tie_embeddings}};
}

EncoderConfig EncoderConfig::from_json(const nlohmann::json& j)
{
    EncoderConfig c;
    c.vocab_size = j.value("vocab_size", c.vocab_size);
    c.layers = j.value("layers", c.layers);
    c.heads = j.value("heads", c.heads);
    c.model_dim = j.value("model_dim", c.model_dim);
    c.ffn_dim = j.value("ffn_dim", c.ffn_dim);
    c.max_seq_len = j.value("max_seq_len", c.max_seq_len);
    c.layernorm_epsilon = j.value("layernorm_epsilon", c.layernorm_epsilon);
    c.seed = j.value("seed", c.seed);
    c.tie_embeddings = j.value("tie_embeddings", c.tie_embeddings);
    return c;
}

template <typename T>
ParamSet<T> ParamSet<T>::zeros(const EncoderConfig& cfg)
{
    cfg.validate();
    const auto V = cfg.vocab_size, d = cfg.model_dim, f = cfg.ffn_dim;
    ParamSet<T> p;
    p.token_embedding = Matrix<T>(V, d);
    p.position_embedding = Matrix<T>(cfg.max_seq_len, d);
    p.layers.resize(cfg.layers);
    for (auto& l : p.layers) {
        l.wq = l.wk = l.wv = l.wo = Matrix<T>(d, d);
        l.bq = l.bk = l.bv = l.bo = Matrix<T>(1, d);
        l.ln1_gain = l.ln1_bias = l.ln2_gain = l.ln2_bias = Matrix<T>(1, d);
        l.w1 = Matrix<T>(d, f);
        l.b1 = Matrix<T>(1, f);
        l.w2 = Matrix<T>(f, d);
        l.b2 = Matrix<T>(1, d);
    }
    if (!cfg.tie_embeddings) {
        p.mlm_weight = Matrix<T>(V, d);
    }
    p.mlm_bias = Matrix<T>(1, V);
    return p;
}

namespace {

template <typename PS, typename M>
std::vector<std::pair<std::string, M*>> collect(PS& p)
{
    std::vector<std::pair<std::string, M*>> out;
    out.emplace_back("token_embedding", &p.token_embedding);
    out.emplace_back("position_embedding", &p.position_embedding);
    for (std::size_t i = 0; i < p.layers.size(); ++i) {
        auto& l = p.layers[i];
        auto pre = "layer" + std::to_string(i) + ".";
        out.emplace_back(pre + "wq", &l.wq);
        out.emplace_back(pre + "bq", &l.bq);
        out.emplace_back(pre + "wk", &l.wk);
        out.emplace_back(pre + "bk", &l.bk);
        out.emplace_back(pre + "wv", &l.wv);
        out.emplace_back(pre + "bv", &l.bv);
        out.emplace_back(pre + "wo", &l.wo);
        out.emplace_back(pre + "bo", &l.bo);
        out.emplace_back(pre + "ln1_gain", &l.ln1_gain);
        out.emplace_back(pre + "ln1_bias", &l.ln1_bias);
        out.emplace_back(pre + "w1", &l.w1);
        out.emplace_back(pre + "b1", &l.b1);
        out.emplace_back(pre + "w2", &l.w2);
        out.emplace_back(pre + "b2", &l.b2);
        out.emplace_back(pre + "ln2_gain", &l.ln2_gain);
        out.emplace_back(pre + "ln2_bias", &l.ln2_bias);
    }
    if (!p.mlm_weight.empty()) {
        out.emplace_back("mlm_weight", &p.mlm_weight);
    }
    out.emplace_back("mlm_bias", &p.mlm_bias);
    return out;
}

} // namespace

template <typename T>
std::vector<std::pair<std::string, Matrix<T>*>> ParamSet<T>::named_tensors()
{
    return collect<ParamSet<T>, Matrix<T>>(*this);
}

template <typename T>
std::vector<std::pair<std::string, const Matrix<T>*>> ParamSet<T>::named_tensors() const
{
    return collect<const ParamSet<T>, const Matrix<T>>(*this);
}

template <typename T>
std::size_t ParamSet<T>::parameter_count() const
{
    std::size_t n = 0;
    for (const auto& [name, m] : named_tensors()) {
        n += m->size();
    }
    return n;
}

template <typename T>
void ParamSet<T>::set_zero()
{
    for (auto& [name, m] : named_tensors()) {
        m->fill(T{});
    }
}

template struct ParamSet<float>;
template struct ParamSet<double>;

EncoderParams init_params(const EncoderConfig& cfg)
{
    auto p = EncoderParams::zeros(cfg);
    std::mt19937_64 rng(cfg.seed);
    std::normal_distribution<double> normal(0.0, 0.02);
    for (auto& [name, m] : p.named_tensors()) {
        bool is_gain = name.ends_with("_gain");
        bool is_bias = name.ends_with("_bias") || name.ends_with(".bq") || name.ends_with(".bk")
                       || name.ends_with(".bv") || name.ends_with(".bo") || name.ends_with(".b1")
                       || name.ends_with(".b2");
        if (is_gain) {
            m->fill(1.0f);
        } else if (!is_bias) {
            for (auto& x : m->flat()) {
                x = static_cast<float>(normal(rng));
            }
        }
    }
    return p;
}

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x / std::numbers::sqrt2)); }

double gelu_grad(double x)
{
    const double cdf = 0.5 * (1.0 + std::erf(x / std::numbers::sqrt2));
    const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
    return cdf + x * pdf;
}

std::vector<double> softmax_probs(std::span<const double> logits)
{
    std::vector<double> p(logits.size());
    if (logits.empty()) {
        return p;
    }
    double mx = -std::numeric_limits<double>::infinity();
    for (double z : logits) {
        mx = std::max(mx, z);
    }
    double sum = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        p[i] = std::exp(logits[i] - mx);
        sum += p[i];
    }
    for (auto& x : p) {
        x /= sum;
    }
    return p;
}

namespace {

Matrix<double> linear(const Matrix<double>& x, const Matrix<float>& w, const Matrix<float>& b)
{
    Matrix<double> out(x.rows(), w.cols());
    matmul_add(x, w, out);
    add_row_bias(out, b);
    return out;
}

void layer_norm(const Matrix<double>& x, const Matrix<float>& gain, const Matrix<float>& bias,
                double eps, Matrix<double>& xhat, std::vector<double>& rstd, Matrix<double>& out)
{
    const std::size_t n = x.rows(), d = x.cols();
    xhat = Matrix<double>(n, d);
    out = Matrix<double>(n, d);
    rstd.assign(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        auto r = x.row(i);
        double mean = 0.0;
        for (double v : r) {
            mean += v;
        }
        mean /= static_cast<double>(d);
        double var = 0.0;
        for (double v : r) {
            var += (v - mean) * (v - mean);
        }
        var /= static_cast<double>(d);
        rstd[i] = 1.0 / std::sqrt(var + eps);
        for (std::size_t j = 0; j < d; ++j) {
            xhat(i, j) = (r[j] - mean) * rstd[i];
            out(i, j) = xhat(i, j) * gain(0, j) + bias(0, j);
        }
    }
}

Matrix<double> layer_norm_backward(const Matrix<double>& dy, const Matrix<double>& xhat,
                                   const std::vector<double>& rstd, const Matrix<float>& gain,
                                   Matrix<double>& d_gain, Matrix<double>& d_bias)
{
    const std::size_t n = dy.rows(), d = dy.cols();
    Matrix<double> dx(n, d);
    std::vector<double> dxhat(d);
    for (std::size_t i = 0; i < n; ++i) {
        double m1 = 0.0, m2 = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            d_gain(0, j) += dy(i, j) * xhat(i, j);
            d_bias(0, j) += dy(i, j);
            dxhat[j] = dy(i, j) * gain(0, j);
            m1 += dxhat[j];
            m2 += dxhat[j] * xhat(i, j);
        }
        m1 /= static_cast<double>(d);
        m2 /= static_cast<double>(d);
        for (std::size_t j = 0; j < d; ++j) {
            dx(i, j) = rstd[i] * (dxhat[j] - m1 - xhat(i, j) * m2);
        }
    }
    return dx;
}

const Matrix<float>& output_matrix(const EncoderParams& p, const EncoderConfig& cfg)
{
    return cfg.tie_embeddings ? p.token_embedding : p.mlm_weight;
}

} // namespace

EncoderTrace encode(const EncoderParams& params, const EncoderConfig& cfg,
                    std::span<const tok::TokenId> ids, std::vector<bool> attention_mask)
{
    const std::size_t n = ids.size(), d = cfg.model_dim, H = cfg.heads, dh = cfg.head_dim();
    if (n == 0) {
        throw ValidationError("empty input sequence");
    }
    if (n > cfg.max_seq_len) {
        throw ValidationError("sequence length " + std::to_string(n) + " exceeds max_seq_len "
                              + std::to_string(cfg.max_seq_len));
    }
    if (attention_mask.empty()) {
        attention_mask.assign(n, true);
    }
    if (attention_mask.size() != n) {
        throw ValidationError("attention mask length differs from input length");
    }
    if (std::find(attention_mask.begin(), attention_mask.end(), true) == attention_mask.end()) {
        throw ValidationError("attention mask hides every position");
    }

    EncoderTrace trace;
    trace.ids.assign(ids.begin(), ids.end());
    trace.attention_mask = attention_mask;

    Matrix<double> x(n, d);
    for (std::size_t i = 0; i < n; ++i) {
        auto id = ids[i];
        if (id < 0 || static_cast<std::size_t>(id) >= cfg.vocab_size) {
            throw ValidationError("token id " + std::to_string(id) + " out of range");
        }
        for (std::size_t j = 0; j < d; ++j) {
            x(i, j) = static_cast<double>(params.token_embedding(static_cast<std::size_t>(id), j))
                      + static_cast<double>(params.position_embedding(i, j));
        }
    }

    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    trace.layers.resize(cfg.layers);
    for (std::size_t l = 0; l < cfg.layers; ++l) {
        const auto& L = params.layers[l];
        auto& C = trace.layers[l];
        C.input = x;
        C.q = linear(x, L.wq, L.bq);
        C.k = linear(x, L.wk, L.bk);
        C.v = linear(x, L.wv, L.bv);
        C.context = Matrix<double>(n, d);
        C.attention.assign(H, Matrix<double>(n, n));
        for (std::size_t h = 0; h < H; ++h) {
            const std::size_t off = h * dh;
            auto& A = C.attention[h];
            for (std::size_t i = 0; i < n; ++i) {
                double mx = -std::numeric_limits<double>::infinity();
                for (std::size_t j = 0; j < n; ++j) {
                    if (!attention_mask[j]) {
                        continue;
                    }
                    double s = 0.0;
                    for (std::size_t c = 0; c < dh; ++c) {
                        s += C.q(i, off + c) * C.k(j, off + c);
                    }
                    A(i, j) = s * scale;
                    mx = std::max(mx, A(i, j));
                }
                double sum = 0.0;
                for (std::size_t j = 0; j < n; ++j) {
                    A(i, j) = attention_mask[j] ? std::exp(A(i, j) - mx) : 0.0;
                    sum += A(i, j);
                }
                for (std::size_t j = 0; j < n; ++j) {
                    A(i, j) /= sum;
                    if (A(i, j) == 0.0) {
                        continue;
                    }
                    for (std::size_t c = 0; c < dh; ++c) {
                        C.context(i, off + c) += A(i, j) * C.v(j, off + c);
                    }
                }
            }
        }
        auto r1 = linear(C.context, L.wo, L.bo);
        for (std::size_t i = 0; i < r1.size(); ++i) {
            r1.flat()[i] += x.flat()[i];
        }
        layer_norm(r1, L.ln1_gain, L.ln1_bias, cfg.layernorm_epsilon, C.ln1_xhat, C.ln1_rstd, C.ln1_out);

        C.ffn_pre = linear(C.ln1_out, L.w1, L.b1);
        C.ffn_act = Matrix<double>(n, cfg.ffn_dim);
        for (std::size_t i = 0; i < C.ffn_pre.size(); ++i) {
            C.ffn_act.flat()[i] = gelu(C.ffn_pre.flat()[i]);
        }
        auto r2 = linear(C.ffn_act, L.w2, L.b2);
        for (std::size_t i = 0; i < r2.size(); ++i) {
            r2.flat()[i] += C.ln1_out.flat()[i];
        }
        Matrix<double> out;
        layer_norm(r2, L.ln2_gain, L.ln2_bias, cfg.layernorm_epsilon, C.ln2_xhat, C.ln2_rstd, out);
        x = std::move(out);
    }
    trace.hidden = std::move(x);
    return trace;
}

ForwardTrace forward(const EncoderParams& params, const EncoderConfig& cfg,
                     std::span<const tok::TokenId> ids, std::vector<bool> attention_mask)
{
    ForwardTrace trace;
    trace.encoder = encode(params, cfg, ids, std::move(attention_mask));
    const auto& W = output_matrix(params, cfg);
    trace.logits = Matrix<double>(ids.size(), cfg.vocab_size);
    matmul_bt_add(trace.encoder.hidden, W, trace.logits);
    add_row_bias(trace.logits, params.mlm_bias);
    return trace;
}

void backward_encoder(const EncoderTrace& trace, const EncoderParams& params,
                      const EncoderConfig& cfg, const Matrix<double>& d_hidden, Gradients& grads)
{
    const std::size_t n = trace.ids.size(), d = cfg.model_dim, H = cfg.heads, dh = cfg.head_dim();
    if (d_hidden.rows() != n || d_hidden.cols() != d || trace.layers.size() != cfg.layers) {
        throw ValidationError("gradient shape does not match the forward trace");
    }
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    Matrix<double> dx = d_hidden;
    for (std::size_t li = cfg.layers; li-- > 0;) {
        const auto& L = params.layers[li];
        auto& G = grads.layers[li];
        const auto& C = trace.layers[li];

        auto dr2 = layer_norm_backward(dx, C.ln2_xhat, C.ln2_rstd, L.ln2_gain, G.ln2_gain, G.ln2_bias);
        Matrix<double> d_ln1 = dr2;
        matmul_at_add(C.ffn_act, dr2, G.w2);
        add_column_sums(dr2, G.b2);
        Matrix<double> d_pre(n, cfg.ffn_dim);
        matmul_bt_add(dr2, L.w2, d_pre);
        for (std::size_t i = 0; i < d_pre.size(); ++i) {
            d_pre.flat()[i] *= gelu_grad(C.ffn_pre.flat()[i]);
        }
        matmul_at_add(C.ln1_out, d_pre, G.w1);
        add_column_sums(d_pre, G.b1);
        matmul_bt_add(d_pre, L.w1, d_ln1);

        auto dr1 = layer_norm_backward(d_ln1, C.ln1_xhat, C.ln1_rstd, L.ln1_gain, G.ln1_gain, G.ln1_bias);
        Matrix<double> d_in = dr1;
        matmul_at_add(C.context, dr1, G.wo);
        add_column_sums(dr1, G.bo);
        Matrix<double> d_ctx(n, d);
        matmul_bt_add(dr1, L.wo, d_ctx);

        Matrix<double> dq(n, d), dk(n, d), dv(n, d);
        std::vector<double> dA(n);
        for (std::size_t h = 0; h < H; ++h) {
            const std::size_t off = h * dh;
            const auto& A = C.attention[h];
            for (std::size_t i = 0; i < n; ++i) {
                double dot = 0.0;
                for (std::size_t j = 0; j < n; ++j) {
                    double s = 0.0;
                    if (A(i, j) != 0.0) {
                        for (std::size_t c = 0; c < dh; ++c) {
                            s += d_ctx(i, off + c) * C.v(j, off + c);
                            dv(j, off + c) += A(i, j) * d_ctx(i, off + c);
                        }
                    }
                    dA[j] = s;
                    dot += A(i, j) * s;
                }
                for (std::size_t j = 0; j < n; ++j) {
                    if (A(i, j) == 0.0) {
                        continue;
                    }
                    const double ds = A(i, j) * (dA[j] - dot) * scale;
                    for (std::size_t c = 0; c < dh; ++c) {
                        dq(i, off + c) += ds * C.k(j, off + c);
                        dk(j, off + c) += ds * C.q(i, off + c);
                    }
                }
            }
        }
        matmul_at_add(C.input, dq, G.wq);
        add_column_sums(dq, G.bq);
        matmul_bt_add(dq, L.wq, d_in);
        matmul_at_add(C.input, dk, G.wk);
        add_column_sums(dk, G.bk);
        matmul_bt_add(dk, L.wk, d_in);
        matmul_at_add(C.input, dv, G.wv);
        add_column_sums(dv, G.bv);
        matmul_bt_add(dv, L.wv, d_in);
        dx = std::move(d_in);
    }
    for (std::size_t i = 0; i < n; ++i) {
        auto tok_row = grads.token_embedding.row(static_cast<std::size_t>(trace.ids[i]));
        auto pos_row = grads.position_embedding.row(i);
        auto g = dx.row(i);
        for (std::size_t j = 0; j < d; ++j) {
            tok_row[j] += g[j];
            pos_row[j] += g[j];
        }
    }
}

void accumulate_backward(const ForwardTrace& trace, const EncoderParams& params,
                         const EncoderConfig& cfg, const Matrix<double>& d_logits, Gradients& grads)
{
    const auto& hidden = trace.hidden();
    const std::size_t n = hidden.rows(), d = cfg.model_dim, V = cfg.vocab_size;
    if (d_logits.rows() != n || d_logits.cols() != V) {
        throw ValidationError("logit gradient shape does not match the forward trace");
    }
    const auto& W = output_matrix(params, cfg);
    auto& GW = cfg.tie_embeddings ? grads.token_embedding : grads.mlm_weight;
    Matrix<double> d_hidden(n, d);
    for (std::size_t i = 0; i < n; ++i) {
        auto g = d_logits.row(i);
        if (std::all_of(g.begin(), g.end(), [](double v) { return v == 0.0; })) {
            continue;
        }
        auto h = hidden.row(i);
        auto dh = d_hidden.row(i);
        for (std::size_t v = 0; v < V; ++v) {
            const double gv = g[v];
            if (gv == 0.0) {
                continue;
            }
            grads.mlm_bias(0, v) += gv;
            auto w = W.row(v);
            auto gw = GW.row(v);
            for (std::size_t j = 0; j < d; ++j) {
                gw[j] += gv * h[j];
                dh[j] += gv * static_cast<double>(w[j]);
            }
        }
    }
    backward_encoder(trace.encoder, params, cfg, d_hidden, grads);
}

Gradients backward(const ForwardTrace& trace, const EncoderParams& params,
                   const EncoderConfig& cfg, const Matrix<double>& d_logits)
{
    auto grads = Gradients::zeros(cfg);
    accumulate_backward(trace, params, cfg, d_logits, grads);
    return grads;
}

} // namespace dki::model
