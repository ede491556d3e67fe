#include "stvsa/resample.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "stvsa/errors.hpp"

namespace stvsa::resample {

namespace {

struct ClassSplit {
    int minority_label = data::label_unstable;
    int majority_label = data::label_stable;
    std::vector<std::size_t> minority;
    std::vector<std::size_t> majority;
};

ClassSplit split_classes(const data::Dataset& d) {
    for (const auto& s : d.samples)
        if (s.label == data::label_unlabeled)
            throw ConfigError("resample: dataset contains unlabeled samples");
    auto stable = data::indices_of(d, data::label_stable);
    auto unstable = data::indices_of(d, data::label_unstable);
    if (stable.empty() || unstable.empty())
        throw ConfigError("resample: both classes must be present");
    ClassSplit cs;
    if (unstable.size() <= stable.size()) {
        cs.minority_label = data::label_unstable;
        cs.majority_label = data::label_stable;
        cs.minority = std::move(unstable);
        cs.majority = std::move(stable);
    } else {
        cs.minority_label = data::label_stable;
        cs.majority_label = data::label_unstable;
        cs.minority = std::move(stable);
        cs.majority = std::move(unstable);
    }
    return cs;
}

double sq_dist(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) {
        const double d = a[k] - b[k];
        s += d * d;
    }
    return s;
}

/// k nearest pool members to sample q by Euclidean distance, q itself
/// excluded; ties resolve by dataset index so results are deterministic.
std::vector<std::size_t> k_nearest(const data::Dataset& d, std::size_t q,
                                   const std::vector<std::size_t>& pool,
                                   std::size_t k) {
    std::vector<std::pair<double, std::size_t>> scored;
    scored.reserve(pool.size());
    for (auto i : pool) {
        if (i == q) continue;
        scored.emplace_back(sq_dist(d.samples[q].features, d.samples[i].features), i);
    }
    if (scored.size() < k)
        throw ContractError("resample: neighbor pool smaller than k");
    std::partial_sort(scored.begin(), scored.begin() + k, scored.end());
    std::vector<std::size_t> out(k);
    for (std::size_t j = 0; j < k; ++j) out[j] = scored[j].second;
    return out;
}

void append_synthetic(data::Dataset& out, const data::Sample& base, int label,
                      const char* method, std::int64_t id,
                      std::vector<double> features) {
    data::Sample s;
    s.id = id;
    s.scenario_id = base.scenario_id;
    s.split = base.split;
    s.label = label;
    s.provenance = method;
    s.synthetic = true;
    s.features = std::move(features);
    out.samples.push_back(std::move(s));
}

/// One SMOTE-style draw: base plus u times the step to a random neighbor.
std::vector<double> interpolate(const data::Dataset& d, std::size_t base,
                                const std::vector<std::size_t>& neighbors,
                                std::mt19937_64& rng) {
    std::uniform_int_distribution<std::size_t> pick(0, neighbors.size() - 1);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const auto& xb = d.samples[base].features;
    const auto& xn = d.samples[neighbors[pick(rng)]].features;
    const double u = unit(rng);
    std::vector<double> f(xb.size());
    for (std::size_t k = 0; k < xb.size(); ++k) f[k] = xb[k] + u * (xn[k] - xb[k]);
    return f;
}

}  // namespace

std::vector<double> adasyn_weights(const data::Dataset& train, std::size_t k) {
    auto cs = split_classes(train);
    if (k == 0 || k >= cs.minority.size())
        throw ConfigError("resample: k must satisfy 1 <= k < minority count (k=" +
                          std::to_string(k) + ", minority " +
                          std::to_string(cs.minority.size()) + ")");
    std::vector<std::size_t> all(train.samples.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    std::vector<double> w(cs.minority.size());
    for (std::size_t p = 0; p < cs.minority.size(); ++p) {
        auto nn = k_nearest(train, cs.minority[p], all, k);
        std::size_t maj = 0;
        for (auto i : nn) maj += train.samples[i].label == cs.majority_label;
        w[p] = static_cast<double>(maj) / static_cast<double>(k);
    }
    return w;
}

std::vector<std::size_t> largest_remainder_allocation(
    const std::vector<double>& weights, std::size_t total) {
    if (weights.empty())
        throw ConfigError("resample: allocation needs at least one weight");
    double sum = 0.0;
    for (double w : weights) {
        if (w < 0.0 || !std::isfinite(w))
            throw ConfigError("resample: allocation weights must be finite and >= 0");
        sum += w;
    }
    const std::size_t n = weights.size();
    std::vector<std::size_t> out(n, 0);
    if (sum == 0.0) {
        const std::size_t base = total / n, rem = total % n;
        for (std::size_t i = 0; i < n; ++i) out[i] = base + (i < rem ? 1 : 0);
        return out;
    }
    std::vector<double> frac(n);
    std::size_t assigned = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double exact = weights[i] / sum * static_cast<double>(total);
        out[i] = static_cast<std::size_t>(std::floor(exact));
        frac[i] = exact - std::floor(exact);
        assigned += out[i];
    }
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (frac[a] != frac[b]) return frac[a] > frac[b];
        return a < b;
    });
    for (std::size_t j = 0; assigned < total; ++j, ++assigned) out[order[j % n]] += 1;
    return out;
}

data::Dataset resample(const data::Dataset& train, const ResamplePlan& plan) {
    if (train.samples.empty()) throw ConfigError("resample: empty dataset");
    if (plan.target_ratio <= 0.0 || !std::isfinite(plan.target_ratio))
        throw ConfigError("resample: target ratio must be positive");
    auto cs = split_classes(train);
    if (plan.method != Method::ros && (plan.k == 0 || plan.k >= cs.minority.size()))
        throw ConfigError("resample: k must satisfy 1 <= k < minority count (k=" +
                          std::to_string(plan.k) + ", minority " +
                          std::to_string(cs.minority.size()) + ")");

    const auto target = static_cast<long long>(
        std::llround(plan.target_ratio * static_cast<double>(cs.majority.size())));
    const long long missing = target - static_cast<long long>(cs.minority.size());
    data::Dataset out = train;
    if (missing <= 0) return out;
    const auto need = static_cast<std::size_t>(missing);

    std::mt19937_64 rng(plan.seed);
    std::int64_t id = data::next_id(train);

    switch (plan.method) {
        case Method::ros: {
            std::uniform_int_distribution<std::size_t> pick(0, cs.minority.size() - 1);
            for (std::size_t t = 0; t < need; ++t) {
                const auto& base = train.samples[cs.minority[pick(rng)]];
                append_synthetic(out, base, cs.minority_label, "ros", id++,
                                 base.features);
            }
            break;
        }
        case Method::smote: {
            std::vector<std::vector<std::size_t>> nn(cs.minority.size());
            for (std::size_t p = 0; p < cs.minority.size(); ++p)
                nn[p] = k_nearest(train, cs.minority[p], cs.minority, plan.k);
            std::uniform_int_distribution<std::size_t> pick(0, cs.minority.size() - 1);
            for (std::size_t t = 0; t < need; ++t) {
                const std::size_t p = pick(rng);
                append_synthetic(out, train.samples[cs.minority[p]],
                                 cs.minority_label, "smote", id++,
                                 interpolate(train, cs.minority[p], nn[p], rng));
            }
            break;
        }
        case Method::adasyn: {
            auto counts = largest_remainder_allocation(
                adasyn_weights(train, plan.k), need);
            for (std::size_t p = 0; p < cs.minority.size(); ++p) {
                if (counts[p] == 0) continue;
                auto nn = k_nearest(train, cs.minority[p], cs.minority, plan.k);
                for (std::size_t t = 0; t < counts[p]; ++t)
                    append_synthetic(out, train.samples[cs.minority[p]],
                                     cs.minority_label, "adasyn", id++,
                                     interpolate(train, cs.minority[p], nn, rng));
            }
            break;
        }
    }
    return out;
}

}  // namespace stvsa::resample
