#include "stvsa/metrics.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <unordered_map>

namespace stvsa::metrics {

namespace {

double euclidean(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return std::sqrt(s);
}

double sq_dist(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

void require_same_dim(const char* op, const Matrix& a, const Matrix& b) {
    if (a.empty() || b.empty())
        throw DomainError(std::string(op) + ": empty sample set");
    if (a.cols != b.cols)
        throw ShapeError(std::string(op) + ": dimension mismatch " +
                         std::to_string(a.cols) + " vs " + std::to_string(b.cols));
}

}  // namespace

ClassificationMetrics classification_metrics(const ConfusionMatrix& cm) {
    const double total = static_cast<double>(cm.total());
    if (total == 0.0) throw DomainError("classification_metrics: empty matrix");

    // unstable is the positive class here
    const double tp = static_cast<double>(cm.n_uu);
    const double tn = static_cast<double>(cm.n_ss);
    const double fp = static_cast<double>(cm.n_us);
    const double fn = static_cast<double>(cm.n_su);

    ClassificationMetrics m;
    m.acc = (tp + tn) / total;
    m.mis = fn / total;
    m.fal = fp / total;

    const double mcc_den =
        (tp + fp) * (tp + fn) * (tn + fp) * (tn + fn);
    if (mcc_den > 0.0) m.mcc = (tp * tn - fp * fn) / std::sqrt(mcc_den);

    if (tp + fn > 0.0 && tn + fp > 0.0) {
        const double tpr = tp / (tp + fn);
        const double tnr = tn / (tn + fp);
        m.gmean = std::sqrt(tpr * tnr);
    }

    // F1 takes stable as positive
    const double sp = cm.n_ss + cm.n_su > 0
                          ? tn / static_cast<double>(cm.n_ss + cm.n_su)
                          : -1.0;
    const double sr = cm.n_ss + cm.n_us > 0
                          ? tn / static_cast<double>(cm.n_ss + cm.n_us)
                          : -1.0;
    if (sp >= 0.0 && sr >= 0.0 && sp + sr > 0.0)
        m.f1 = 2.0 * sp * sr / (sp + sr);

    return m;
}

double silhouette(const Matrix& x, const std::vector<int>& labels) {
    if (x.empty()) throw DomainError("silhouette: empty sample set");
    if (labels.size() != x.rows)
        throw ShapeError("silhouette: " + std::to_string(labels.size()) +
                         " labels for " + std::to_string(x.rows) + " rows");

    std::unordered_map<int, std::size_t> cluster_of;
    for (int l : labels)
        cluster_of.emplace(l, cluster_of.size());
    const std::size_t k = cluster_of.size();
    if (k < 2) throw ConfigError("silhouette: needs at least 2 clusters");

    std::vector<std::size_t> counts(k, 0);
    std::vector<std::size_t> cid(x.rows);
    for (std::size_t i = 0; i < x.rows; ++i) {
        cid[i] = cluster_of.at(labels[i]);
        ++counts[cid[i]];
    }

    double total = 0.0;
    std::vector<double> mean_dist(k);
    for (std::size_t i = 0; i < x.rows; ++i) {
        std::fill(mean_dist.begin(), mean_dist.end(), 0.0);
        for (std::size_t j = 0; j < x.rows; ++j) {
            if (j == i) continue;
            mean_dist[cid[j]] += euclidean(x.row(i), x.row(j));
        }
        const std::size_t own = cid[i];
        if (counts[own] == 1) continue;  // singleton scores 0
        const double a = mean_dist[own] / static_cast<double>(counts[own] - 1);
        double b = std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < k; ++c)
            if (c != own)
                b = std::min(b, mean_dist[c] / static_cast<double>(counts[c]));
        const double denom = std::max(a, b);
        if (denom > 0.0) total += (b - a) / denom;
    }
    return total / static_cast<double>(x.rows);
}

namespace {

/// Exact minimum-cost perfect matching on a dense n x n cost matrix by
/// shortest augmenting paths with potentials. Returns, for each column, the
/// matched row. O(n^3), deterministic.
std::vector<std::size_t> min_cost_assignment(const std::vector<double>& cost,
                                             std::size_t n) {
    constexpr double kInf = std::numeric_limits<double>::infinity();
    std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
    std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
    for (std::size_t i = 1; i <= n; ++i) {
        p[0] = i;
        std::size_t j0 = 0;
        std::fill(minv.begin(), minv.end(), kInf);
        std::vector<char> used(n + 1, 0);
        do {
            used[j0] = 1;
            const std::size_t i0 = p[j0];
            double delta = kInf;
            std::size_t j1 = 0;
            for (std::size_t j = 1; j <= n; ++j) {
                if (used[j]) continue;
                const double cur = cost[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (std::size_t j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            const std::size_t j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0 != 0);
    }
    std::vector<std::size_t> row_of_col(n);
    for (std::size_t j = 1; j <= n; ++j) row_of_col[j - 1] = p[j] - 1;
    return row_of_col;
}

}  // namespace

double wasserstein_empirical(const Matrix& a, const Matrix& b) {
    require_same_dim("wasserstein", a, b);
    if (a.rows != b.rows)
        throw ShapeError("wasserstein: sample counts differ, " +
                         std::to_string(a.rows) + " vs " + std::to_string(b.rows) +
                         " (subsample before calling)");
    const std::size_t n = a.rows;
    std::vector<double> cost(n * n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            cost[i * n + j] = euclidean(a.row(i), b.row(j));
    const auto row_of_col = min_cost_assignment(cost, n);
    double total = 0.0;
    for (std::size_t j = 0; j < n; ++j) total += cost[row_of_col[j] * n + j];
    return total / static_cast<double>(n);
}

namespace {

/// Canonical ordering of the two sets so that mmd(A,B) and mmd(B,A) run the
/// identical float schedule.
bool canonical_before(const Matrix& a, const Matrix& b) {
    if (a.rows != b.rows) return a.rows < b.rows;
    return std::lexicographical_compare(a.v.begin(), a.v.end(), b.v.begin(),
                                        b.v.end());
}

}  // namespace

double mmd_rbf(const Matrix& a, const Matrix& b, double bandwidth) {
    require_same_dim("mmd", a, b);
    if (a.rows < 2 || b.rows < 2)
        throw DomainError("mmd: need at least 2 samples per set");
    if (!(bandwidth > 0.0)) throw DomainError("mmd: bandwidth must be positive");

    const Matrix& x = canonical_before(b, a) ? b : a;
    const Matrix& y = canonical_before(b, a) ? a : b;
    const double gamma = 1.0 / (2.0 * bandwidth * bandwidth);
    const auto m = static_cast<double>(x.rows);
    const auto n = static_cast<double>(y.rows);

    double kxx = 0.0, kyy = 0.0, kxy = 0.0;
    for (std::size_t i = 0; i < x.rows; ++i)
        for (std::size_t j = i + 1; j < x.rows; ++j)
            kxx += std::exp(-gamma * sq_dist(x.row(i), x.row(j)));
    for (std::size_t i = 0; i < y.rows; ++i)
        for (std::size_t j = i + 1; j < y.rows; ++j)
            kyy += std::exp(-gamma * sq_dist(y.row(i), y.row(j)));
    for (std::size_t i = 0; i < x.rows; ++i)
        for (std::size_t j = 0; j < y.rows; ++j)
            kxy += std::exp(-gamma * sq_dist(x.row(i), y.row(j)));

    return 2.0 * kxx / (m * (m - 1.0)) + 2.0 * kyy / (n * (n - 1.0)) -
           2.0 * kxy / (m * n);
}

double median_pairwise_bandwidth(const Matrix& a, const Matrix& b) {
    require_same_dim("bandwidth", a, b);
    Matrix pooled(a.rows + b.rows, a.cols);
    std::copy(a.v.begin(), a.v.end(), pooled.v.begin());
    std::copy(b.v.begin(), b.v.end(), pooled.v.begin() + static_cast<std::ptrdiff_t>(a.v.size()));
    std::vector<double> dists;
    dists.reserve(pooled.rows * (pooled.rows - 1) / 2);
    for (std::size_t i = 0; i < pooled.rows; ++i)
        for (std::size_t j = i + 1; j < pooled.rows; ++j)
            dists.push_back(euclidean(pooled.row(i), pooled.row(j)));
    if (dists.empty()) throw DomainError("bandwidth: not enough samples");
    const std::size_t mid = dists.size() / 2;
    std::nth_element(dists.begin(), dists.begin() + static_cast<std::ptrdiff_t>(mid),
                     dists.end());
    return dists[mid];
}

namespace {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

Mat psd_sqrt(const Mat& s, const char* what) {
    Eigen::SelfAdjointEigenSolver<Mat> es(s);
    if (es.info() != Eigen::Success)
        throw NumericFault(std::string("fid: eigendecomposition failed for ") + what);
    Vec ev = es.eigenvalues();
    const double tol = 1e-9 * std::max(1.0, std::abs(ev.maxCoeff()));
    for (Eigen::Index i = 0; i < ev.size(); ++i) {
        if (ev[i] < -tol)
            throw NumericFault(std::string("fid: ") + what +
                               " not PSD after regularization");
        ev[i] = std::sqrt(std::max(ev[i], 0.0));
    }
    return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

double fid_impl(const Vec& mu_a, const Mat& cov_a, const Vec& mu_b,
                const Mat& cov_b) {
    const Mat sqrt_a = psd_sqrt(cov_a, "first covariance");
    const Mat inner = sqrt_a * cov_b * sqrt_a;
    // symmetrize against roundoff before the second decomposition
    const Mat cross = psd_sqrt((inner + inner.transpose()) / 2.0, "cross term");
    const double mean_term = (mu_a - mu_b).squaredNorm();
    return mean_term + cov_a.trace() + cov_b.trace() - 2.0 * cross.trace();
}

void moments(const Matrix& x, Vec& mu, Mat& cov) {
    const auto n = static_cast<Eigen::Index>(x.rows);
    const auto d = static_cast<Eigen::Index>(x.cols);
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                   Eigen::RowMajor>>
        m(x.v.data(), n, d);
    mu = m.colwise().mean();
    const Mat centered = m.rowwise() - mu.transpose();
    cov = centered.transpose() * centered / static_cast<double>(n - 1);
    cov += 1e-6 * Mat::Identity(d, d);
}

}  // namespace

double fid_gaussian(const Matrix& a, const Matrix& b) {
    require_same_dim("fid", a, b);
    if (a.rows < 2 || b.rows < 2)
        throw DomainError("fid: need at least 2 samples per set for covariance");
    Vec mu_a, mu_b;
    Mat cov_a, cov_b;
    moments(a, mu_a, cov_a);
    moments(b, mu_b, cov_b);
    return fid_impl(mu_a, cov_a, mu_b, cov_b);
}

double fid_from_moments(const std::vector<double>& mu_a, const Matrix& cov_a,
                        const std::vector<double>& mu_b, const Matrix& cov_b) {
    const std::size_t d = mu_a.size();
    if (mu_b.size() != d || cov_a.rows != d || cov_a.cols != d ||
        cov_b.rows != d || cov_b.cols != d)
        throw ShapeError("fid: moment dimensions disagree");
    Vec va = Eigen::Map<const Vec>(mu_a.data(), static_cast<Eigen::Index>(d));
    Vec vb = Eigen::Map<const Vec>(mu_b.data(), static_cast<Eigen::Index>(d));
    const auto di = static_cast<Eigen::Index>(d);
    Mat ca(di, di), cb(di, di);
    for (Eigen::Index i = 0; i < di; ++i)
        for (Eigen::Index j = 0; j < di; ++j) {
            ca(i, j) = cov_a.at(static_cast<std::size_t>(i), static_cast<std::size_t>(j));
            cb(i, j) = cov_b.at(static_cast<std::size_t>(i), static_cast<std::size_t>(j));
        }
    return fid_impl(va, ca, vb, cb);
}

}  // namespace stvsa::metrics
