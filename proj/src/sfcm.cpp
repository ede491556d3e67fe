#include "stvsa/sfcm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace stvsa::sfcm {

namespace {

bool bus_collapses(const Matrix& v, std::size_t bus, double ceiling) {
    // once under the ceiling the bus must stay under it for the rest of the run
    bool under = false;
    for (std::size_t t = 0; t < v.rows; ++t) {
        const double x = v.at(t, bus);
        if (under && x >= ceiling) return false;
        if (x < ceiling) under = true;
    }
    return under;
}

}  // namespace

SeedLabel rule_label(const Matrix& bus_voltages, const LabelRules& rules) {
    if (bus_voltages.empty())
        throw ShapeError("rule_label: empty voltage trajectory");
    bool always_above_floor = true;
    for (double v : bus_voltages.v)
        if (v < rules.stable_floor) {
            always_above_floor = false;
            break;
        }
    if (always_above_floor) return SeedLabel::stable;

    bool all_collapse = true;
    for (std::size_t b = 0; b < bus_voltages.cols && all_collapse; ++b)
        all_collapse = bus_collapses(bus_voltages, b, rules.unstable_ceiling);
    if (all_collapse) return SeedLabel::unstable;
    return SeedLabel::unlabeled;
}

std::vector<SeedLabel> seed_labels(const std::vector<Matrix>& trajectories,
                                   const LabelRules& rules) {
    std::vector<SeedLabel> out;
    out.reserve(trajectories.size());
    for (const auto& t : trajectories) out.push_back(rule_label(t, rules));
    return out;
}

namespace {

double sq_dist(const Matrix& x, std::size_t i, const Matrix& c, std::size_t j) {
    double s = 0.0;
    for (std::size_t k = 0; k < x.cols; ++k) {
        const double d = x.at(i, k) - c.at(j, k);
        s += d * d;
    }
    return s;
}

/// Memberships for one sample from squared distances to every center.
/// Zero distances short-circuit: a unique coincident center takes the full
/// membership, several coincident centers share it evenly.
void membership_row(const std::vector<double>& d2, double fuzziness,
                    Matrix& u, std::size_t i) {
    const std::size_t c = d2.size();
    std::size_t zero_count = 0;
    for (double d : d2) zero_count += d == 0.0;
    if (zero_count > 0) {
        for (std::size_t j = 0; j < c; ++j)
            u.at(i, j) = d2[j] == 0.0 ? 1.0 / static_cast<double>(zero_count) : 0.0;
        return;
    }
    const double expo = 1.0 / (fuzziness - 1.0);
    for (std::size_t j = 0; j < c; ++j) {
        double denom = 0.0;
        for (std::size_t s = 0; s < c; ++s)
            denom += std::pow(d2[j] / d2[s], expo);
        u.at(i, j) = 1.0 / denom;
    }
}

}  // namespace

SfcmResult sfcm_fit(const Matrix& x, const std::vector<SeedLabel>& labels,
                    const SfcmParams& params) {
    if (x.empty()) throw ShapeError("sfcm_fit: empty data matrix");
    if (labels.size() != x.rows)
        throw ShapeError("sfcm_fit: expected one label per row, got " +
                         std::to_string(labels.size()) + " labels for " +
                         std::to_string(x.rows) + " rows");
    if (params.clusters != 2)
        throw ConfigError("sfcm_fit: seeded fit requires exactly 2 clusters");
    if (params.fuzziness <= 1.0)
        throw ConfigError("sfcm_fit: fuzziness must exceed 1");
    if (params.tolerance <= 0.0 || params.max_iterations == 0)
        throw ConfigError("sfcm_fit: tolerance and max_iterations must be positive");

    const std::size_t n = x.rows, dim = x.cols, c = params.clusters;

    // centers start at the labeled class means; both classes must be seeded
    Matrix centers(c, dim, 0.0);
    std::vector<double> seed_count(c, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        if (labels[i] == SeedLabel::unlabeled) continue;
        const auto j = static_cast<std::size_t>(labels[i]);
        seed_count[j] += 1.0;
        for (std::size_t k = 0; k < dim; ++k) centers.at(j, k) += x.at(i, k);
    }
    for (std::size_t j = 0; j < c; ++j) {
        if (seed_count[j] == 0.0)
            throw ConfigError("sfcm_fit: cluster " + std::to_string(j) +
                              " has no seed labels");
        for (std::size_t k = 0; k < dim; ++k) centers.at(j, k) /= seed_count[j];
    }

    SfcmResult res;
    res.u = Matrix(n, c, 0.0);
    Matrix u_prev(n, c, 0.0);
    std::vector<double> d2(c);

    res.converged = false;
    res.iterations = 0;
    while (res.iterations < params.max_iterations) {
        ++res.iterations;

        // membership update given current centers; seeded rows stay one-hot
        for (std::size_t i = 0; i < n; ++i) {
            if (labels[i] != SeedLabel::unlabeled) {
                const auto cls = static_cast<std::size_t>(labels[i]);
                for (std::size_t j = 0; j < c; ++j)
                    res.u.at(i, j) = j == cls ? 1.0 : 0.0;
                continue;
            }
            for (std::size_t j = 0; j < c; ++j) d2[j] = sq_dist(x, i, centers, j);
            membership_row(d2, params.fuzziness, res.u, i);
        }

        double delta = 0.0;
        for (std::size_t i = 0; i < n * c; ++i)
            delta = std::max(delta, std::abs(res.u.v[i] - u_prev.v[i]));

        // center update over every row, seeded rows included
        for (std::size_t j = 0; j < c; ++j) {
            double wsum = 0.0;
            std::vector<double> acc(dim, 0.0);
            for (std::size_t i = 0; i < n; ++i) {
                const double w = std::pow(res.u.at(i, j), params.fuzziness);
                wsum += w;
                for (std::size_t k = 0; k < dim; ++k) acc[k] += w * x.at(i, k);
            }
            if (wsum > 0.0)
                for (std::size_t k = 0; k < dim; ++k) centers.at(j, k) = acc[k] / wsum;
        }

        double objective = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < c; ++j)
                objective += std::pow(res.u.at(i, j), params.fuzziness) *
                             sq_dist(x, i, centers, j);
        res.objective.push_back(objective);

        if (delta < params.tolerance) {
            res.converged = true;
            break;
        }
        u_prev = res.u;
    }

    res.centers = centers;
    return res;
}

std::vector<int> harden(const Matrix& u) {
    if (u.empty()) throw ShapeError("harden: empty membership matrix");
    std::vector<int> crisp(u.rows);
    for (std::size_t i = 0; i < u.rows; ++i) {
        std::size_t best = 0;
        for (std::size_t j = 1; j < u.cols; ++j)
            if (u.at(i, j) >= u.at(i, best)) best = j;  // ties resolve high
        crisp[i] = static_cast<int>(best);
    }
    return crisp;
}

}  // namespace stvsa::sfcm
