#include "stvsa/gan.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "stvsa/errors.hpp"

namespace stvsa::gan {

namespace {

constexpr double kLeakySlope = 0.2;

ad::Tensor one_hot_rows(const std::vector<int>& labels) {
    std::vector<double> v(labels.size() * 2, 0.0);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] != 0 && labels[i] != 1)
            throw DomainError("cwgan: label " + std::to_string(labels[i]) +
                              " outside {0, 1}");
        v[i * 2 + static_cast<std::size_t>(labels[i])] = 1.0;
    }
    return ad::Tensor({labels.size(), 2}, std::move(v));
}

/// Single tape shared by every parameter of the net; null when detached.
template <typename Net>
ad::Tape* common_param_tape(const Net& net) {
    ad::Tape* tape = nullptr;
    for (const auto& l : net.layers) {
        for (const ad::Tensor* t : {&l.weight, &l.bias}) {
            if (!t->attached()) continue;
            if (tape != nullptr && tape != t->tape())
                throw ContractError("cwgan: parameters span different tapes");
            tape = t->tape();
        }
    }
    return tape;
}

std::vector<std::pair<std::string, ad::Tensor*>> layer_params(
    std::vector<nn::LinearLayer>& layers) {
    std::vector<std::pair<std::string, ad::Tensor*>> out;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        out.emplace_back("fc" + std::to_string(i) + ".weight", &layers[i].weight);
        out.emplace_back("fc" + std::to_string(i) + ".bias", &layers[i].bias);
    }
    return out;
}

}  // namespace

Generator make_generator(std::size_t noise_dim, std::size_t label_dim,
                         std::size_t out_dim, std::mt19937_64& rng) {
    if (noise_dim == 0 || label_dim == 0 || out_dim == 0)
        throw ConfigError("cwgan: generator dims must be positive");
    Generator g;
    g.noise_dim = noise_dim;
    g.label_dim = label_dim;
    g.out_dim = out_dim;
    const std::size_t in = noise_dim + label_dim;
    g.layers.push_back(nn::make_linear(in, 128, rng));
    g.layers.push_back(nn::make_linear(128, 256, rng));
    g.layers.push_back(nn::make_linear(256, 512, rng));
    g.layers.push_back(nn::make_linear(512, out_dim, rng));
    return g;
}

Critic make_critic(std::size_t in_dim, std::size_t label_dim,
                   std::mt19937_64& rng) {
    if (in_dim == 0 || label_dim == 0)
        throw ConfigError("cwgan: critic dims must be positive");
    Critic d;
    d.layers.push_back(nn::make_linear(in_dim + label_dim, 512, rng));
    d.layers.push_back(nn::make_linear(512, 256, rng));
    d.layers.push_back(nn::make_linear(256, 1, rng));
    return d;
}

std::vector<std::pair<std::string, ad::Tensor*>> named_parameters(Generator& g) {
    return layer_params(g.layers);
}

std::vector<std::pair<std::string, ad::Tensor*>> named_parameters(Critic& d) {
    return layer_params(d.layers);
}

ad::Tensor generator_forward(const Generator& g, const ad::Tensor& z,
                             const ad::Tensor& y) {
    if (g.layers.empty()) throw ContractError("cwgan: generator has no layers");
    if (z.cols() != g.noise_dim || y.cols() != g.label_dim)
        throw ShapeError("cwgan: generator expects {b, " +
                         std::to_string(g.noise_dim) + "} noise and {b, " +
                         std::to_string(g.label_dim) + "} labels");
    if (z.rows() != y.rows())
        throw ShapeError("cwgan: noise and label batches disagree (" +
                         std::to_string(z.rows()) + " vs " +
                         std::to_string(y.rows()) + ")");
    const std::array<ad::Tensor, 2> zy = {z, y};
    auto h = ad::concat_cols(zy);
    for (std::size_t l = 0; l < g.layers.size(); ++l) {
        h = g.layers[l].forward(h);
        if (l + 1 < g.layers.size()) h = ad::leaky_relu(h, kLeakySlope);
    }
    if (h.cols() != g.out_dim)
        throw ContractError("cwgan: generator chain produces dim " +
                            std::to_string(h.cols()) + ", declared " +
                            std::to_string(g.out_dim));
    // No output squashing: a hard clamp here has zero gradient once a unit
    // saturates, which lets the whole generator die against the critic.
    // Emitted samples are clamped at sampling time instead.
    return h;
}

ad::Tensor critic_score(const Critic& d, const ad::Tensor& xy) {
    if (d.layers.empty()) throw ContractError("cwgan: critic has no layers");
    if (xy.cols() != d.layers[0].weight.cols())
        throw ShapeError("cwgan: critic expects input dim " +
                         std::to_string(d.layers[0].weight.cols()) + ", got " +
                         std::to_string(xy.cols()));
    auto h = xy;
    for (std::size_t l = 0; l < d.layers.size(); ++l) {
        h = d.layers[l].forward(h);
        if (l + 1 < d.layers.size()) h = ad::leaky_relu(h, kLeakySlope);
    }
    if (h.cols() != 1)
        throw ContractError("cwgan: critic must end in a single score per sample");
    return h;
}

ad::Tensor critic_forward(const Critic& d, const ad::Tensor& x,
                          const ad::Tensor& y) {
    if (x.rows() != y.rows())
        throw ShapeError("cwgan: data and label batches disagree (" +
                         std::to_string(x.rows()) + " vs " +
                         std::to_string(y.rows()) + ")");
    const std::array<ad::Tensor, 2> xy = {x, y};
    return critic_score(d, ad::concat_cols(xy));
}

ad::Tensor critic_loss(const Critic& d, const Generator& g, const ad::Tensor& x,
                       const ad::Tensor& y, const ad::Tensor& z,
                       const ad::Tensor& eps, double lambda) {
    if (!std::isfinite(lambda) || lambda < 0.0)
        throw ConfigError("cwgan: lambda must be finite and >= 0");
    const std::size_t b = x.rows();
    if (y.rows() != b || z.rows() != b || eps.rows() != b)
        throw ShapeError("cwgan: batch rows disagree (x " + std::to_string(b) +
                         ", y " + std::to_string(y.rows()) + ", z " +
                         std::to_string(z.rows()) + ", eps " +
                         std::to_string(eps.rows()) + ")");
    if (eps.cols() != 1)
        throw ShapeError("cwgan: eps must be one U(0,1) draw per sample, {b, 1}");
    ad::Tape* tape = common_param_tape(d);
    if (tape == nullptr)
        throw ContractError(
            "cwgan: critic parameters must be attached to a tape "
            "(the penalty differentiates the critic)");

    // the critic never trains the generator: generated rows enter detached
    auto x_gen = generator_forward(g, z, y).detached();
    auto term_gen = ad::mean(critic_forward(d, x_gen, y));
    auto term_real = ad::mean(critic_forward(d, x, y));

    // interpolate data rows only; each pair shares its label row
    auto mix = ad::add(ad::mul(eps, x),
                       ad::mul(ad::sub(ad::Tensor::scalar(1.0), eps), x_gen))
                   .detached();
    const std::array<ad::Tensor, 2> hat_parts = {mix, y.detached()};
    auto xy_hat = tape->leaf(ad::concat_cols(hat_parts));
    auto grad = tape->gradient(ad::sum(critic_score(d, xy_hat)), xy_hat,
                               /*create_graph=*/true);
    auto dev = ad::sub(ad::l2_norm(grad, 1), ad::Tensor::scalar(1.0));
    auto penalty = ad::mean(ad::mul(dev, dev));

    auto loss = ad::add(ad::sub(term_gen, term_real),
                        ad::mul(ad::Tensor::scalar(lambda), penalty));
    if (!std::isfinite(loss.value()))
        throw NumericFault("cwgan: non-finite critic loss on a batch of " +
                           std::to_string(b));
    return loss;
}

ad::Tensor generator_loss(const Critic& d, const Generator& g,
                          const ad::Tensor& z, const ad::Tensor& y) {
    auto scores = critic_forward(d, generator_forward(g, z, y), y);
    auto loss = ad::neg(ad::mean(scores));
    if (!std::isfinite(loss.value()))
        throw NumericFault("cwgan: non-finite generator loss on a batch of " +
                           std::to_string(z.rows()));
    return loss;
}

Matrix sample_generator(const Generator& g, std::size_t n, int label,
                        std::mt19937_64& rng) {
    if (label != 0 && label != 1)
        throw DomainError("cwgan: sample label must be 0 or 1");
    Matrix out(n, g.out_dim);
    if (n == 0) return out;
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<double> zv(n * g.noise_dim);
    for (auto& v : zv) v = normal(rng);
    auto x = generator_forward(
        g, ad::Tensor({n, g.noise_dim}, std::move(zv)),
        one_hot_rows(std::vector<int>(n, label)));
    std::transform(x.values().begin(), x.values().end(), out.v.begin(),
                   [](double v) { return std::clamp(v, 0.0, 1.0); });
    return out;
}

namespace {

struct ClassView {
    int minority_label = data::label_unstable;
    std::size_t minority = 0;
    std::size_t majority = 0;
};

ClassView classes_or_throw(const data::Dataset& d, const char* who) {
    const auto stable = data::count_label(d, data::label_stable);
    const auto unstable = data::count_label(d, data::label_unstable);
    if (stable + unstable != d.samples.size())
        throw ConfigError(std::string(who) + ": dataset contains unlabeled samples");
    if (stable == 0 || unstable == 0)
        throw ConfigError(std::string(who) + ": both classes must be present");
    ClassView cv;
    if (unstable <= stable) {
        cv.minority_label = data::label_unstable;
        cv.minority = unstable;
        cv.majority = stable;
    } else {
        cv.minority_label = data::label_stable;
        cv.minority = stable;
        cv.majority = unstable;
    }
    return cv;
}

}  // namespace

GanTrainResult train_cwgan_gp(const data::Dataset& train,
                              const GanTrainConfig& cfg) {
    if (train.samples.empty()) throw ConfigError("cwgan: empty training set");
    if (cfg.batch == 0 || cfg.epochs == 0 || cfg.n_critic == 0 ||
        cfg.noise_dim == 0)
        throw ConfigError("cwgan: batch, epochs, n_critic and noise_dim must be positive");
    if (cfg.lambda <= 0.0 || cfg.lr <= 0.0)
        throw ConfigError("cwgan: lambda and lr must be positive");
    classes_or_throw(train, "cwgan");
    for (const auto& s : train.samples)
        for (double v : s.features)
            if (!(v >= -1e-9 && v <= 1.0 + 1e-9))
                throw ConfigError(
                    "cwgan: features must be min-max normalized to [0, 1] "
                    "(sample " + std::to_string(s.id) + ")");

    std::mt19937_64 rng(cfg.seed);
    GanTrainResult res;
    res.generator = make_generator(cfg.noise_dim, 2, train.feature_dim, rng);
    res.critic = make_critic(train.feature_dim, 2, rng);
    nn::Adam opt_d(nn::AdamConfig{cfg.lr, 0.9, 0.999, 1e-8});
    nn::Adam opt_g(nn::AdamConfig{cfg.lr, 0.9, 0.999, 1e-8});

    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const std::size_t n = train.samples.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});

    auto draw_noise = [&](std::size_t bs) {
        std::vector<double> zv(bs * cfg.noise_dim);
        for (auto& v : zv) v = normal(rng);
        return ad::Tensor({bs, cfg.noise_dim}, std::move(zv));
    };

    auto generator_step = [&](const std::vector<int>& labels) {
        ad::Tape tape;
        auto step_g = res.generator;
        std::vector<ad::Tensor> leaves;
        for (auto& [name, p] : named_parameters(step_g)) {
            *p = tape.leaf(*p);
            leaves.push_back(*p);
        }
        auto loss = generator_loss(res.critic, step_g, draw_noise(labels.size()),
                                   one_hot_rows(labels));
        auto grads = tape.gradients(loss, leaves);
        auto live = named_parameters(res.generator);
        opt_g.step(live, grads);
        return loss.value();
    };

    std::size_t critic_steps = 0;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double d_sum = 0.0, g_sum = 0.0;
        std::size_t d_count = 0, g_count = 0;
        std::vector<int> last_labels;
        try {
            for (std::size_t start = 0; start < n; start += cfg.batch) {
                const std::size_t bs = std::min(cfg.batch, n - start);
                std::vector<double> bx(bs * train.feature_dim);
                std::vector<int> by(bs);
                for (std::size_t i = 0; i < bs; ++i) {
                    const auto& s = train.samples[order[start + i]];
                    std::copy(s.features.begin(), s.features.end(),
                              bx.begin() + static_cast<std::ptrdiff_t>(i * train.feature_dim));
                    by[i] = s.label;
                }
                last_labels = by;

                ad::Tape tape;
                auto step_d = res.critic;
                std::vector<ad::Tensor> leaves;
                for (auto& [name, p] : named_parameters(step_d)) {
                    *p = tape.leaf(*p);
                    leaves.push_back(*p);
                }
                auto z = draw_noise(bs);
                std::vector<double> ev(bs);
                for (auto& v : ev) v = unit(rng);
                auto loss = critic_loss(step_d, res.generator,
                                        ad::Tensor({bs, train.feature_dim}, std::move(bx)),
                                        one_hot_rows(by), z,
                                        ad::Tensor({bs, 1}, std::move(ev)),
                                        cfg.lambda);
                d_sum += loss.value();
                ++d_count;

                auto grads = tape.gradients(loss, leaves);
                auto live = named_parameters(res.critic);
                opt_d.step(live, grads);

                if (++critic_steps % cfg.n_critic == 0) {
                    g_sum += generator_step(by);
                    ++g_count;
                }
            }
            if (g_count == 0) {
                // short epochs still advance the generator once
                g_sum += generator_step(last_labels);
                ++g_count;
            }
        } catch (const NumericFault& e) {
            throw NumericFault("cwgan: epoch " + std::to_string(epoch) + ": " +
                               e.what());
        }
        res.critic_curve.push_back(d_sum / static_cast<double>(d_count));
        res.generator_curve.push_back(g_sum / static_cast<double>(g_count));
    }
    return res;
}

data::Dataset balance_dataset(const Generator& g, const data::Dataset& train,
                              double target_ratio, std::uint64_t seed) {
    if (!std::isfinite(target_ratio) || target_ratio <= 0.0)
        throw ConfigError("cwgan: target ratio must be positive");
    if (g.out_dim != train.feature_dim)
        throw ShapeError("cwgan: generator emits dim " +
                         std::to_string(g.out_dim) + ", dataset has " +
                         std::to_string(train.feature_dim));
    auto cv = classes_or_throw(train, "cwgan");
    const auto target = static_cast<long long>(
        std::llround(target_ratio * static_cast<double>(cv.majority)));
    const long long missing = target - static_cast<long long>(cv.minority);
    data::Dataset out = train;
    if (missing <= 0) return out;

    std::mt19937_64 rng(seed);
    std::int64_t id = data::next_id(train);
    std::size_t left = static_cast<std::size_t>(missing);
    while (left > 0) {
        const std::size_t chunk = std::min<std::size_t>(left, 256);
        auto x = sample_generator(g, chunk, cv.minority_label, rng);
        for (std::size_t i = 0; i < chunk; ++i) {
            data::Sample s;
            s.id = id++;
            s.scenario_id = -1;  // born from noise, no simulator scenario
            s.split = "train";
            s.label = cv.minority_label;
            s.provenance = "cwgan_gp";
            s.synthetic = true;
            s.features.assign(x.row(i).begin(), x.row(i).end());
            out.samples.push_back(std::move(s));
        }
        left -= chunk;
    }
    return out;
}

io::Checkpoint generator_checkpoint(const Generator& g) {
    io::Checkpoint c;
    c.kind = "stvsa-cwgan-generator";
    c.meta = {{"noise_dim", g.noise_dim},
              {"label_dim", g.label_dim},
              {"out_dim", g.out_dim}};
    for (std::size_t i = 0; i < g.layers.size(); ++i) {
        c.params.emplace_back("fc" + std::to_string(i) + ".weight",
                              g.layers[i].weight.detached());
        c.params.emplace_back("fc" + std::to_string(i) + ".bias",
                              g.layers[i].bias.detached());
    }
    return c;
}

Generator load_generator(const io::Checkpoint& c) {
    if (c.kind != "stvsa-cwgan-generator")
        throw ConfigError("cwgan: checkpoint kind '" + c.kind +
                          "' is not a generator");
    Generator g;
    g.noise_dim = c.meta.at("noise_dim").get<std::size_t>();
    g.label_dim = c.meta.at("label_dim").get<std::size_t>();
    g.out_dim = c.meta.at("out_dim").get<std::size_t>();
    if (c.params.empty() || c.params.size() % 2 != 0)
        throw ConfigError("cwgan: generator checkpoint must hold weight/bias pairs");

    std::size_t prev = g.noise_dim + g.label_dim;
    for (std::size_t i = 0; 2 * i < c.params.size(); ++i) {
        const auto& [wn, wt] = c.params[2 * i];
        const auto& [bn, bt] = c.params[2 * i + 1];
        const std::string stem = "fc" + std::to_string(i);
        if (wn != stem + ".weight" || bn != stem + ".bias")
            throw ConfigError("cwgan: unexpected parameter order at '" + wn + "'");
        if (wt.cols() != prev || bt.values().size() != wt.rows())
            throw ShapeError("cwgan: layer " + std::to_string(i) +
                             " shapes break the chain");
        nn::LinearLayer l;
        l.weight = wt.detached();
        l.bias = bt.detached();
        g.layers.push_back(std::move(l));
        prev = wt.rows();
    }
    if (prev != g.out_dim)
        throw ShapeError("cwgan: final layer width " + std::to_string(prev) +
                         " does not match out_dim " + std::to_string(g.out_dim));
    return g;
}

}  // namespace stvsa::gan
