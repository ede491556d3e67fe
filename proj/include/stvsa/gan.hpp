#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "stvsa/checkpoint.hpp"
#include "stvsa/dataset.hpp"
#include "stvsa/nn.hpp"
#include "stvsa/tensor.hpp"

namespace stvsa::gan {

/// Fully connected conditional generator: concat(z, y) through the layer
/// chain, LeakyReLU(0.2) between layers, linear last layer. The forward is
/// unbounded so training gradients never die; sampled rows are clamped to
/// [0, 1] on emission to match min-max normalized features.
struct Generator {
    std::size_t noise_dim = 0;
    std::size_t label_dim = 0;
    std::size_t out_dim = 0;
    std::vector<nn::LinearLayer> layers;
};

/// Conditional critic: concat(x, y) through the chain, LeakyReLU(0.2) between
/// layers, no output nonlinearity; final width must be 1 (a score, not a
/// probability).
struct Critic {
    std::vector<nn::LinearLayer> layers;
};

/// Canonical shapes: generator hidden 128/256/512, critic hidden 512/256.
Generator make_generator(std::size_t noise_dim, std::size_t label_dim,
                         std::size_t out_dim, std::mt19937_64& rng);
Critic make_critic(std::size_t in_dim, std::size_t label_dim,
                   std::mt19937_64& rng);

std::vector<std::pair<std::string, ad::Tensor*>> named_parameters(Generator& g);
std::vector<std::pair<std::string, ad::Tensor*>> named_parameters(Critic& d);

ad::Tensor generator_forward(const Generator& g, const ad::Tensor& z,
                             const ad::Tensor& y);
/// Critic score {b, 1} from a pre-concatenated (data, label) batch.
ad::Tensor critic_score(const Critic& d, const ad::Tensor& xy);
ad::Tensor critic_forward(const Critic& d, const ad::Tensor& x,
                          const ad::Tensor& y);

/// E[D(x_gen|y)] - E[D(x|y)] + lambda * E[(||grad D at interpolate|| - 1)^2].
/// eps is one U(0,1) draw per sample {b, 1}; the interpolate mixes data rows
/// only (labels shared within a pair) and the penalty norm runs over the full
/// concatenated input gradient. Generated samples are detached, so this loss
/// never trains the generator. Critic parameters must be tape-attached.
ad::Tensor critic_loss(const Critic& d, const Generator& g, const ad::Tensor& x,
                       const ad::Tensor& y, const ad::Tensor& z,
                       const ad::Tensor& eps, double lambda);

/// -E[D(G(z|y)|y)], the descent form of the generator objective.
ad::Tensor generator_loss(const Critic& d, const Generator& g,
                          const ad::Tensor& z, const ad::Tensor& y);

struct GanTrainConfig {
    double lambda = 10.0;
    double lr = 1e-4;
    std::size_t batch = 64;
    std::size_t n_critic = 5;
    std::size_t epochs = 500;
    std::size_t noise_dim = 100;
    std::uint64_t seed = 0;
};

struct GanTrainResult {
    Generator generator;
    Critic critic;
    std::vector<double> critic_curve;     // per-epoch mean critic loss
    std::vector<double> generator_curve;  // per-epoch mean generator loss
};

/// Alternating training: n_critic critic steps per generator step (at least
/// one generator step per epoch), Adam for both nets, deterministic per seed.
/// Expects features min-max normalized to [0, 1] and both classes present.
GanTrainResult train_cwgan_gp(const data::Dataset& train,
                              const GanTrainConfig& cfg);

/// n generated feature rows conditioned on the given class label.
Matrix sample_generator(const Generator& g, std::size_t n, int label,
                        std::mt19937_64& rng);

/// Appends generated minority samples until minority/majority reaches the
/// target ratio. Real rows are never touched; already satisfied -> unchanged.
data::Dataset balance_dataset(const Generator& g, const data::Dataset& train,
                              double target_ratio = 1.0, std::uint64_t seed = 0);

io::Checkpoint generator_checkpoint(const Generator& g);
Generator load_generator(const io::Checkpoint& c);

}  // namespace stvsa::gan
