#include "stvsa/nn.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace stvsa::nn {

using ad::Shape;
using ad::Tensor;

namespace {

Tensor xavier_uniform(std::size_t out, std::size_t in, std::mt19937_64& rng) {
    const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
    std::uniform_real_distribution<double> u(-limit, limit);
    std::vector<double> w(out * in);
    for (auto& x : w) x = u(rng);
    return Tensor({out, in}, std::move(w));
}

void check_finite(const Tensor& t, const std::string& where) {
    for (double v : t.values())
        if (!std::isfinite(v))
            throw NumericFault("staat: non-finite activation in " + where);
}

}  // namespace

Tensor LinearLayer::forward(const Tensor& x) const {
    return ad::add(ad::matmul(x, ad::transpose(weight)), bias);
}

LinearLayer make_linear(std::size_t in, std::size_t out, std::mt19937_64& rng) {
    return {xavier_uniform(out, in, rng), Tensor::zeros({out})};
}

Tensor LayerNorm::forward(const Tensor& x) const {
    auto centered = ad::sub(x, ad::mean(x, 1));
    auto var = ad::mean(ad::mul(centered, centered), 1);
    auto norm = ad::div(centered, ad::sqrt(ad::add(var, Tensor::scalar(eps))));
    return ad::add(ad::mul(norm, gamma), beta);
}

LayerNorm make_layer_norm(std::size_t d) {
    return {Tensor::ones({d}), Tensor::zeros({d}), 1e-5};
}

Tensor dropout(const Tensor& x, double rate, bool train, std::mt19937_64& rng) {
    if (rate < 0.0 || rate >= 1.0)
        throw ConfigError("dropout: rate " + std::to_string(rate) +
                          " outside [0, 1)");
    if (!train || rate == 0.0) return x;
    std::bernoulli_distribution keep(1.0 - rate);
    std::vector<double> mask(x.numel());
    const double scale = 1.0 / (1.0 - rate);
    for (auto& m : mask) m = keep(rng) ? scale : 0.0;
    return ad::mul(x, Tensor(x.shape(), std::move(mask)));
}

Tensor attention_weights(const Tensor& q, const Tensor& k) {
    if (q.cols() != k.cols())
        throw ShapeError("attention: key dim mismatch, " +
                         std::to_string(q.cols()) + " vs " +
                         std::to_string(k.cols()));
    const double scale = 1.0 / std::sqrt(static_cast<double>(q.cols()));
    auto scores = ad::mul(ad::matmul(q, ad::transpose(k)), Tensor::scalar(scale));
    return ad::softmax(scores, 1);
}

Tensor scaled_dot_product_attention(const Tensor& q, const Tensor& k,
                                    const Tensor& v) {
    if (k.rows() != v.rows())
        throw ShapeError("attention: K has " + std::to_string(k.rows()) +
                         " rows, V has " + std::to_string(v.rows()));
    return ad::matmul(attention_weights(q, k), v);
}

MultiHeadAttention make_multi_head(std::size_t d_model, std::size_t heads,
                                   std::mt19937_64& rng) {
    if (heads == 0 || d_model % heads != 0)
        throw ConfigError("multi_head: model dim " + std::to_string(d_model) +
                          " not divisible by " + std::to_string(heads) + " heads");
    MultiHeadAttention m;
    m.heads = heads;
    m.d_k = d_model / heads;
    m.wq = xavier_uniform(d_model, d_model, rng);
    m.wk = xavier_uniform(d_model, d_model, rng);
    m.wv = xavier_uniform(d_model, d_model, rng);
    m.wo = xavier_uniform(d_model, d_model, rng);
    return m;
}

Tensor multi_head_forward(const MultiHeadAttention& mha, const Tensor& x) {
    const std::size_t d_model = mha.heads * mha.d_k;
    if (x.cols() != d_model)
        throw ShapeError("multi_head: input dim " + std::to_string(x.cols()) +
                         ", model dim " + std::to_string(d_model));
    auto q = ad::matmul(x, mha.wq);
    auto k = ad::matmul(x, mha.wk);
    auto v = ad::matmul(x, mha.wv);
    std::vector<Tensor> heads;
    heads.reserve(mha.heads);
    for (std::size_t h = 0; h < mha.heads; ++h) {
        const std::size_t c0 = h * mha.d_k;
        heads.push_back(scaled_dot_product_attention(
            ad::slice_cols(q, c0, mha.d_k), ad::slice_cols(k, c0, mha.d_k),
            ad::slice_cols(v, c0, mha.d_k)));
    }
    return ad::matmul(ad::concat_cols(heads), mha.wo);
}

Tensor positional_encoding(std::size_t seq_len, std::size_t d_model) {
    if (seq_len == 0 || d_model == 0)
        throw ConfigError("positional_encoding: zero dimension");
    std::vector<double> pe(seq_len * d_model);
    for (std::size_t pos = 0; pos < seq_len; ++pos) {
        for (std::size_t i = 0; i < d_model; ++i) {
            const double pair_index = static_cast<double>(i / 2 * 2);
            const double rate =
                std::pow(10000.0, pair_index / static_cast<double>(d_model));
            const double angle = static_cast<double>(pos) / rate;
            pe[pos * d_model + i] = (i % 2 == 0) ? std::sin(angle) : std::cos(angle);
        }
    }
    return Tensor({seq_len, d_model}, std::move(pe));
}

StaaTModel make_staat(const StaaTConfig& cfg, std::mt19937_64& rng) {
    if (cfg.input_dim == 0 || cfg.seq_len == 0)
        throw ConfigError("staat: input_dim and seq_len must be positive");
    if (cfg.encoder_layers == 0)
        throw ConfigError("staat: needs at least one encoder layer");
    if (cfg.dropout < 0.0 || cfg.dropout >= 1.0)
        throw ConfigError("staat: dropout outside [0, 1)");
    StaaTModel m;
    m.cfg = cfg;
    m.input_proj = make_linear(cfg.input_dim, cfg.d_model, rng);
    m.pe = positional_encoding(cfg.seq_len, cfg.d_model);
    for (std::size_t l = 0; l < cfg.encoder_layers; ++l) {
        EncoderLayer enc;
        enc.mha = make_multi_head(cfg.d_model, cfg.heads, rng);
        enc.ff1 = make_linear(cfg.d_model, cfg.ffn_hidden, rng);
        enc.ff2 = make_linear(cfg.ffn_hidden, cfg.d_model, rng);
        enc.ln1 = make_layer_norm(cfg.d_model);
        enc.ln2 = make_layer_norm(cfg.d_model);
        m.layers.push_back(std::move(enc));
    }
    m.head = make_linear(cfg.d_model, 2, rng);
    return m;
}

std::vector<std::pair<std::string, Tensor*>> named_parameters(StaaTModel& m) {
    std::vector<std::pair<std::string, Tensor*>> out;
    out.emplace_back("input_proj.weight", &m.input_proj.weight);
    out.emplace_back("input_proj.bias", &m.input_proj.bias);
    for (std::size_t l = 0; l < m.layers.size(); ++l) {
        const std::string p = "enc" + std::to_string(l) + ".";
        auto& enc = m.layers[l];
        out.emplace_back(p + "mha.wq", &enc.mha.wq);
        out.emplace_back(p + "mha.wk", &enc.mha.wk);
        out.emplace_back(p + "mha.wv", &enc.mha.wv);
        out.emplace_back(p + "mha.wo", &enc.mha.wo);
        out.emplace_back(p + "ff1.weight", &enc.ff1.weight);
        out.emplace_back(p + "ff1.bias", &enc.ff1.bias);
        out.emplace_back(p + "ff2.weight", &enc.ff2.weight);
        out.emplace_back(p + "ff2.bias", &enc.ff2.bias);
        out.emplace_back(p + "ln1.gamma", &enc.ln1.gamma);
        out.emplace_back(p + "ln1.beta", &enc.ln1.beta);
        out.emplace_back(p + "ln2.gamma", &enc.ln2.gamma);
        out.emplace_back(p + "ln2.beta", &enc.ln2.beta);
    }
    out.emplace_back("head.weight", &m.head.weight);
    out.emplace_back("head.bias", &m.head.bias);
    return out;
}

namespace {

/// {b, b*s} row-block averaging matrix for temporal mean pooling.
Tensor pooling_matrix(std::size_t b, std::size_t s) {
    std::vector<double> p(b * b * s, 0.0);
    const double w = 1.0 / static_cast<double>(s);
    for (std::size_t i = 0; i < b; ++i)
        for (std::size_t t = 0; t < s; ++t) p[i * b * s + i * s + t] = w;
    return Tensor({b, b * s}, std::move(p));
}

/// PE rows tiled across the batch: {b*s, d}.
Tensor tiled_pe(const Tensor& pe, std::size_t b) {
    const auto v = pe.values();
    std::vector<double> out;
    out.reserve(v.size() * b);
    for (std::size_t i = 0; i < b; ++i) out.insert(out.end(), v.begin(), v.end());
    return Tensor({b * pe.rows(), pe.cols()}, std::move(out));
}

}  // namespace

Tensor staat_logits(const StaaTModel& m, const Tensor& batch, bool train,
                    std::mt19937_64& rng) {
    const std::size_t s = m.cfg.seq_len;
    const std::size_t in = m.cfg.input_dim;
    if (batch.numel() == 0 || batch.numel() % (s * in) != 0)
        throw ShapeError("staat: batch of " + std::to_string(batch.numel()) +
                         " values does not tile " + std::to_string(s) + "x" +
                         std::to_string(in) + " samples");
    const std::size_t b = batch.numel() / (s * in);
    auto x = ad::reshape(batch, {b * s, in});

    auto h = ad::add(m.input_proj.forward(x), tiled_pe(m.pe, b));
    for (std::size_t l = 0; l < m.layers.size(); ++l) {
        const auto& enc = m.layers[l];
        std::vector<Tensor> per_sample;
        per_sample.reserve(b);
        for (std::size_t i = 0; i < b; ++i)
            per_sample.push_back(
                multi_head_forward(enc.mha, ad::slice_rows(h, i * s, s)));
        auto sa = dropout(ad::concat_rows(per_sample), m.cfg.dropout, train, rng);
        h = enc.ln1.forward(ad::add(h, sa));
        auto ff = enc.ff2.forward(ad::leaky_relu(enc.ff1.forward(h), 0.0));
        ff = dropout(ff, m.cfg.dropout, train, rng);
        h = enc.ln2.forward(ad::add(h, ff));
        check_finite(h, "encoder layer " + std::to_string(l));
    }
    auto pooled = ad::matmul(pooling_matrix(b, s), h);
    return m.head.forward(pooled);
}

Tensor staat_forward(const StaaTModel& m, const Tensor& batch, bool train,
                     std::mt19937_64& rng) {
    return ad::softmax(staat_logits(m, batch, train, rng), 1);
}

Tensor staat_forward(const StaaTModel& m, const Tensor& batch) {
    std::mt19937_64 unused(0);
    return staat_forward(m, batch, false, unused);
}

Tensor cross_entropy_loss(const Tensor& logits, const std::vector<int>& labels) {
    const std::size_t b = logits.rows(), c = logits.cols();
    if (labels.size() != b)
        throw ShapeError("cross_entropy: " + std::to_string(labels.size()) +
                         " labels for " + std::to_string(b) + " rows");
    // constant row-max shift keeps exp in range without touching gradients
    std::vector<double> mx(b);
    std::vector<double> onehot(b * c, 0.0);
    for (std::size_t i = 0; i < b; ++i) {
        double m = logits.values()[i * c];
        for (std::size_t j = 1; j < c; ++j)
            m = std::max(m, logits.values()[i * c + j]);
        mx[i] = m;
        const auto lab = static_cast<std::size_t>(labels[i]);
        if (lab >= c) throw DomainError("cross_entropy: label out of range");
        onehot[i * c + lab] = 1.0;
    }
    auto shifted = ad::sub(logits, Tensor({b, 1}, std::move(mx)));
    auto lse = ad::log(ad::sum(ad::exp(shifted), 1));
    auto picked = ad::sum(ad::mul(shifted, Tensor({b, c}, std::move(onehot))), 1);
    return ad::mean(ad::sub(lse, picked));
}

void Adam::step(const std::vector<std::pair<std::string, Tensor*>>& params,
                const std::vector<ad::Tensor>& grads) {
    if (params.size() != grads.size())
        throw ContractError("adam: " + std::to_string(grads.size()) +
                            " gradients for " + std::to_string(params.size()) +
                            " parameters");
    if (m_.empty()) {
        m_.resize(params.size());
        v_.resize(params.size());
        for (std::size_t i = 0; i < params.size(); ++i) {
            m_[i].assign(params[i].second->numel(), 0.0);
            v_[i].assign(params[i].second->numel(), 0.0);
        }
    }
    ++step_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto& [name, p] = params[i];
        const auto g = grads[i].values();
        if (g.size() != p->numel())
            throw ContractError("adam: gradient shape mismatch for " + name);
        for (double gv : g)
            if (!std::isfinite(gv))
                throw NumericFault("adam: non-finite gradient for " + name);
        std::vector<double> next(p->values().begin(), p->values().end());
        for (std::size_t j = 0; j < next.size(); ++j) {
            m_[i][j] = cfg_.beta1 * m_[i][j] + (1.0 - cfg_.beta1) * g[j];
            v_[i][j] = cfg_.beta2 * v_[i][j] + (1.0 - cfg_.beta2) * g[j] * g[j];
            const double mhat = m_[i][j] / bc1;
            const double vhat = v_[i][j] / bc2;
            next[j] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
        }
        *p = Tensor(p->shape(), std::move(next));
    }
}

std::vector<double> train_classifier(StaaTModel& m, const Matrix& x,
                                     const std::vector<int>& y,
                                     const TrainConfig& cfg) {
    if (x.rows == 0) throw ConfigError("train: empty dataset");
    if (y.size() != x.rows)
        throw ShapeError("train: " + std::to_string(y.size()) + " labels for " +
                         std::to_string(x.rows) + " rows");
    for (int lab : y)
        if (lab != 0 && lab != 1)
            throw DomainError("train: label " + std::to_string(lab) +
                              " outside {0, 1}");
    if (cfg.epochs == 0 || cfg.batch == 0)
        throw ConfigError("train: epochs and batch must be positive");

    std::mt19937_64 rng(cfg.seed);
    Adam opt(AdamConfig{cfg.lr, 0.9, 0.999, 1e-8});
    std::vector<std::size_t> order(x.rows);
    std::iota(order.begin(), order.end(), 0);

    std::vector<double> history;
    history.reserve(cfg.epochs);
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double epoch_loss = 0.0;
        std::size_t batches = 0;
        for (std::size_t start = 0; start < x.rows; start += cfg.batch) {
            const std::size_t bs = std::min(cfg.batch, x.rows - start);
            std::vector<double> bx(bs * x.cols);
            std::vector<int> by(bs);
            for (std::size_t i = 0; i < bs; ++i) {
                const std::size_t src = order[start + i];
                std::copy_n(x.v.begin() + static_cast<std::ptrdiff_t>(src * x.cols),
                            x.cols, bx.begin() + static_cast<std::ptrdiff_t>(i * x.cols));
                by[i] = y[src];
            }

            ad::Tape tape;
            auto step_model = m;
            auto named = named_parameters(step_model);
            std::vector<Tensor> leaves;
            leaves.reserve(named.size());
            for (auto& [name, p] : named) {
                *p = tape.leaf(*p);
                leaves.push_back(*p);
            }
            auto logits =
                staat_logits(step_model, Tensor({bs, x.cols}, std::move(bx)),
                             true, rng);
            auto loss = cross_entropy_loss(logits, by);
            epoch_loss += loss.value();
            ++batches;

            auto grads = tape.gradients(loss, leaves);
            auto live = named_parameters(m);
            opt.step(live, grads);
        }
        history.push_back(epoch_loss / static_cast<double>(batches));
    }
    return history;
}

std::vector<int> predict(const StaaTModel& m, const Matrix& x) {
    std::vector<int> out(x.rows);
    if (x.rows == 0) return out;
    // batched to bound tape-free allocation spikes
    const std::size_t chunk = 256;
    for (std::size_t start = 0; start < x.rows; start += chunk) {
        const std::size_t bs = std::min(chunk, x.rows - start);
        std::vector<double> bx(x.v.begin() + static_cast<std::ptrdiff_t>(start * x.cols),
                               x.v.begin() + static_cast<std::ptrdiff_t>((start + bs) * x.cols));
        auto p = staat_forward(m, Tensor({bs, x.cols}, std::move(bx)));
        for (std::size_t i = 0; i < bs; ++i)
            out[start + i] = p.values()[i * 2 + 1] > p.values()[i * 2] ? 1 : 0;
    }
    return out;
}

}  // namespace stvsa::nn
