#pragma once

#include <cstdint>
#include <vector>

#include "stvsa/dataset.hpp"

namespace stvsa::resample {

enum class Method { ros, smote, adasyn };

struct ResamplePlan {
    Method method = Method::ros;
    std::size_t k = 5;          // neighbor count for smote/adasyn
    std::uint64_t seed = 0;
    double target_ratio = 1.0;  // desired minority:majority count ratio
};

/// Appends synthetic minority samples to reach the target ratio. Real samples
/// are never touched; synthetics carry the minority label, the method name as
/// provenance, and the synthetic flag.
data::Dataset resample(const data::Dataset& train, const ResamplePlan& plan);

/// Per-minority-point difficulty: fraction of majority points among the k
/// nearest neighbors in the whole set (self excluded).
std::vector<double> adasyn_weights(const data::Dataset& train, std::size_t k);

/// Integer split of `total` proportional to `weights`, remainders assigned to
/// the largest fractional parts (ties to the lower index). All-zero weights
/// fall back to a uniform split.
std::vector<std::size_t> largest_remainder_allocation(
    const std::vector<double>& weights, std::size_t total);

}  // namespace stvsa::resample
