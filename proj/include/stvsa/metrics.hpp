#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "stvsa/matrix.hpp"

namespace stvsa::metrics {

/// Two-class confusion counts; first index letter is the prediction, second
/// the ground truth (s = stable, u = unstable).
struct ConfusionMatrix {
    std::size_t n_ss = 0;  // predicted stable, actually stable
    std::size_t n_su = 0;  // predicted stable, actually unstable (misdetection)
    std::size_t n_us = 0;  // predicted unstable, actually stable (false alarm)
    std::size_t n_uu = 0;  // predicted unstable, actually unstable

    std::size_t total() const { return n_ss + n_su + n_us + n_uu; }
};

/// Scalar classification indicators, all as fractions in [0,1] (callers scale
/// to percent for display). Indicators whose denominator vanishes on the
/// given matrix are left empty rather than forced to 0.
struct ClassificationMetrics {
    double acc = 0.0;
    double mis = 0.0;  // unstable cases predicted stable, over ALL samples
    double fal = 0.0;  // stable cases predicted unstable, over ALL samples
    std::optional<double> mcc;    // unstable as positive class
    std::optional<double> f1;     // stable as positive class
    std::optional<double> gmean;  // sqrt(TPR * TNR), unstable as positive
};

ClassificationMetrics classification_metrics(const ConfusionMatrix& cm);

/// Mean silhouette over all samples, Euclidean distances. Labels are cluster
/// ids; every id present must own >= 1 point and >= 2 distinct ids must
/// appear. Singleton clusters contribute score 0.
double silhouette(const Matrix& x, const std::vector<int>& labels);

/// Exact empirical 1-Wasserstein distance: minimum-cost perfect matching on
/// Euclidean costs divided by the sample count. Requires equal counts
/// (subsample the larger set before calling) and equal dimension.
double wasserstein_empirical(const Matrix& a, const Matrix& b);

/// Unbiased U-statistic estimate of squared MMD with an RBF kernel
/// exp(-||x-y||^2 / (2 bandwidth^2)). May be slightly negative by design.
double mmd_rbf(const Matrix& a, const Matrix& b, double bandwidth);

/// Median pairwise Euclidean distance over the pooled samples; the standard
/// bandwidth heuristic for mmd_rbf.
double median_pairwise_bandwidth(const Matrix& a, const Matrix& b);

/// Frechet distance between Gaussians fitted to the two sample sets on the
/// raw feature space: ||mu_A-mu_B||^2 + Tr(S_A + S_B - 2(S_A S_B)^{1/2}).
/// Covariances are the unbiased estimates plus 1e-6 I regularization.
double fid_gaussian(const Matrix& a, const Matrix& b);

/// Same distance evaluated from explicit moments (row-major covariance).
double fid_from_moments(const std::vector<double>& mu_a, const Matrix& cov_a,
                        const std::vector<double>& mu_b, const Matrix& cov_b);

}  // namespace stvsa::metrics
