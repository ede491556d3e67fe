#pragma once

#include <cstddef>
#include <vector>

#include "stvsa/matrix.hpp"

namespace stvsa::sfcm {

/// Class convention across the project: 0 = stable, 1 = unstable.
enum class SeedLabel { stable = 0, unstable = 1, unlabeled = -1 };

struct LabelRules {
    double stable_floor = 0.9;     // pu: no bus may ever drop below
    double unstable_ceiling = 0.7; // pu: every bus ends below, no recovery
};

/// Engineering-criterion label for one sample's full post-clearing voltage
/// record (rows = time steps, cols = buses). Stable when no bus ever drops
/// below stable_floor; unstable when every bus finishes below
/// unstable_ceiling and never re-crosses it after first going under;
/// everything else is unlabeled.
SeedLabel rule_label(const Matrix& bus_voltages, const LabelRules& rules = {});

std::vector<SeedLabel> seed_labels(const std::vector<Matrix>& trajectories,
                                   const LabelRules& rules = {});

struct SfcmParams {
    std::size_t clusters = 2;      // fixed to 2 for the stability task
    double fuzziness = 2.0;        // exponent weight l
    double tolerance = 1e-5;       // max |u_next - u| convergence threshold
    std::size_t max_iterations = 300;
};

struct SfcmResult {
    Matrix u;        // m x C, rows sum to 1; labeled rows stay one-hot
    Matrix centers;  // C x N
    std::vector<double> objective;  // J after each iteration, non-increasing
    std::size_t iterations = 0;
    bool converged = false;
};

/// Semi-supervised fuzzy C-means: labeled rows are locked to one-hot
/// memberships, centers start from the labeled class means, and the
/// membership/center updates alternate on the unlabeled rows until the
/// membership change falls under tolerance. Cluster j corresponds to
/// SeedLabel value j. Call on normalized features.
SfcmResult sfcm_fit(const Matrix& x, const std::vector<SeedLabel>& labels,
                    const SfcmParams& params = {});

/// Crisp per-row argmax; exact ties resolve to the unstable cluster.
std::vector<int> harden(const Matrix& u);

}  // namespace stvsa::sfcm
