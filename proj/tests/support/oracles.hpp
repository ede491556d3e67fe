#pragma once

// Test-only oracles. Everything here is deliberately independent of the
// stvsa::ad implementation path: plain loops, no tapes, no Eigen.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <random>
#include <span>
#include <vector>

namespace oracles {

/// Central finite differences of a scalar function at x.
inline std::vector<double> fd_gradient(
    const std::function<double(std::span<const double>)>& f,
    std::vector<double> x, double step = 1e-4) {
    std::vector<double> g(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double saved = x[i];
        x[i] = saved + step;
        const double fp = f(x);
        x[i] = saved - step;
        const double fm = f(x);
        x[i] = saved;
        g[i] = (fp - fm) / (2.0 * step);
    }
    return g;
}

/// Max relative error between two gradient vectors with a floor that keeps
/// near-zero entries from blowing the ratio up.
inline double max_rel_err(std::span<const double> a, std::span<const double> b,
                          double floor = 1e-6) {
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double denom = std::max({std::abs(a[i]), std::abs(b[i]), floor});
        worst = std::max(worst, std::abs(a[i] - b[i]) / denom);
    }
    return worst;
}

inline std::vector<double> random_vec(std::mt19937_64& rng, std::size_t n,
                                      double lo = -2.0, double hi = 2.0) {
    std::uniform_real_distribution<double> d(lo, hi);
    std::vector<double> v(n);
    for (auto& x : v) x = d(rng);
    return v;
}

/// Naive two-loop scaled dot-product attention: softmax(QK^T/sqrt(dk))V.
/// Row-major seq x dk (Q,K) and seq x dv (V).
inline std::vector<double> naive_attention(std::span<const double> q,
                                           std::span<const double> k,
                                           std::span<const double> v,
                                           std::size_t seq_q, std::size_t seq_k,
                                           std::size_t dk, std::size_t dv) {
    std::vector<double> out(seq_q * dv, 0.0);
    const double scale = 1.0 / std::sqrt(static_cast<double>(dk));
    for (std::size_t i = 0; i < seq_q; ++i) {
        std::vector<double> scores(seq_k);
        double mx = -1e300;
        for (std::size_t j = 0; j < seq_k; ++j) {
            double s = 0.0;
            for (std::size_t t = 0; t < dk; ++t) s += q[i * dk + t] * k[j * dk + t];
            scores[j] = s * scale;
            mx = std::max(mx, scores[j]);
        }
        double z = 0.0;
        for (std::size_t j = 0; j < seq_k; ++j) {
            scores[j] = std::exp(scores[j] - mx);
            z += scores[j];
        }
        for (std::size_t j = 0; j < seq_k; ++j)
            for (std::size_t t = 0; t < dv; ++t)
                out[i * dv + t] += scores[j] / z * v[j * dv + t];
    }
    return out;
}

/// 1-D empirical 1-Wasserstein distance: mean absolute difference of the
/// sorted samples (requires equal counts).
inline double wd_1d_sorted(std::vector<double> a, std::vector<double> b) {
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
    return s / static_cast<double>(a.size());
}

}  // namespace oracles
