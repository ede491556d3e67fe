#pragma once

#include <cstddef>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "stvsa/matrix.hpp"
#include "stvsa/tensor.hpp"

namespace stvsa::nn {

/// Fully connected layer. Parameters live as detached tensors; training code
/// re-attaches them to a per-step tape via named_parameters.
struct LinearLayer {
    ad::Tensor weight;  // {out, in}
    ad::Tensor bias;    // {out}

    /// x: {n, in} -> {n, out}
    ad::Tensor forward(const ad::Tensor& x) const;
};

LinearLayer make_linear(std::size_t in, std::size_t out, std::mt19937_64& rng);

struct LayerNorm {
    ad::Tensor gamma;  // {d}
    ad::Tensor beta;   // {d}
    double eps = 1e-5;

    /// Row-wise normalization of {n, d}.
    ad::Tensor forward(const ad::Tensor& x) const;
};

LayerNorm make_layer_norm(std::size_t d);

/// Inverted dropout: scales kept activations by 1/(1-rate). Identity when
/// train is false or rate is 0.
ad::Tensor dropout(const ad::Tensor& x, double rate, bool train,
                   std::mt19937_64& rng);

/// Row-stochastic attention weights softmax(Q K^T / sqrt(d_k)).
ad::Tensor attention_weights(const ad::Tensor& q, const ad::Tensor& k);

/// softmax(Q K^T / sqrt(d_k)) V for Q {sq, dk}, K {sk, dk}, V {sk, dv}.
ad::Tensor scaled_dot_product_attention(const ad::Tensor& q, const ad::Tensor& k,
                                        const ad::Tensor& v);

/// Multi-head attention with per-head projections packed column-wise into
/// single d_model x d_model matrices (head h owns columns [h*d_k, (h+1)*d_k)).
struct MultiHeadAttention {
    std::size_t heads = 1;
    std::size_t d_k = 0;  // per-head key dim; heads * d_k == d_model
    ad::Tensor wq, wk, wv;  // {d_model, d_model}
    ad::Tensor wo;          // {d_model, d_model}
};

MultiHeadAttention make_multi_head(std::size_t d_model, std::size_t heads,
                                   std::mt19937_64& rng);

/// x: {seq, d_model} -> {seq, d_model}
ad::Tensor multi_head_forward(const MultiHeadAttention& mha, const ad::Tensor& x);

/// Sinusoidal table: PE(pos, 2i) = sin(pos / 10000^(2i/d)), odd columns the
/// matching cosine. Detached constant.
ad::Tensor positional_encoding(std::size_t seq_len, std::size_t d_model);

struct StaaTConfig {
    std::size_t input_dim = 0;  // features per timestep
    std::size_t seq_len = 0;
    std::size_t d_model = 64;
    std::size_t heads = 8;
    std::size_t encoder_layers = 2;
    std::size_t ffn_hidden = 128;
    double dropout = 0.5;
};

struct EncoderLayer {
    MultiHeadAttention mha;
    LinearLayer ff1, ff2;
    LayerNorm ln1, ln2;
};

/// Encoder-only classifier: input projection + positional encoding, a stack
/// of self-attention encoder layers, temporal mean pooling, 2-class head.
struct StaaTModel {
    StaaTConfig cfg;
    LinearLayer input_proj;
    ad::Tensor pe;  // {seq_len, d_model}, constant
    std::vector<EncoderLayer> layers;
    LinearLayer head;
};

StaaTModel make_staat(const StaaTConfig& cfg, std::mt19937_64& rng);

/// Stable parameter enumeration order shared by training, checkpointing and
/// gradient checks. Pointers stay valid while the model does.
std::vector<std::pair<std::string, ad::Tensor*>> named_parameters(StaaTModel& m);

/// Pre-softmax class scores. Batch is {b, seq*input_dim} (or {b, seq,
/// input_dim}); rows are time-major flattened samples.
ad::Tensor staat_logits(const StaaTModel& m, const ad::Tensor& batch, bool train,
                        std::mt19937_64& rng);

/// Per-sample 2-class probabilities {b, 2}, rows summing to 1.
ad::Tensor staat_forward(const StaaTModel& m, const ad::Tensor& batch, bool train,
                         std::mt19937_64& rng);

/// Convenience for inference without dropout state.
ad::Tensor staat_forward(const StaaTModel& m, const ad::Tensor& batch);

/// Mean negative log-likelihood of the labels under softmax(logits), built
/// from tape ops via the shifted log-sum-exp form.
ad::Tensor cross_entropy_loss(const ad::Tensor& logits,
                              const std::vector<int>& labels);

struct AdamConfig {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// Bias-corrected Adam. Moment buffers are keyed by position in the first
/// step's parameter list, which must stay stable across steps.
class Adam {
public:
    explicit Adam(AdamConfig cfg) : cfg_(cfg) {}

    /// Applies one update in place; grads[i] pairs with params[i].
    void step(const std::vector<std::pair<std::string, ad::Tensor*>>& params,
              const std::vector<ad::Tensor>& grads);

    std::size_t steps_taken() const { return step_; }
    const AdamConfig& config() const { return cfg_; }

private:
    AdamConfig cfg_;
    std::size_t step_ = 0;
    std::vector<std::vector<double>> m_, v_;
};

struct TrainConfig {
    std::size_t epochs = 200;
    std::size_t batch = 64;
    double lr = 1e-4;
    std::uint64_t seed = 0;
};

/// Cross-entropy training of a StaaT classifier on rows of x (one flattened
/// sample per row) with labels in {0, 1}. Returns per-epoch mean loss;
/// deterministic given the seed. The model ends in eval mode state.
std::vector<double> train_classifier(StaaTModel& m, const Matrix& x,
                                     const std::vector<int>& y,
                                     const TrainConfig& cfg);

/// Argmax class predictions for rows of x.
std::vector<int> predict(const StaaTModel& m, const Matrix& x);

}  // namespace stvsa::nn
