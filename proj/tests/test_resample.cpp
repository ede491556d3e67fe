#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "stvsa/resample.hpp"

using namespace stvsa;
using namespace stvsa::data;
using namespace stvsa::resample;
namespace rs = stvsa::resample;

namespace {

Sample make_sample(std::int64_t id, int label, std::vector<double> f) {
    return {id, id, "train", label, "src", false, std::move(f)};
}

/// Majority blob near the origin, minority blob near (5,5).
Dataset two_blob_train(std::mt19937_64& rng, std::size_t n_maj, std::size_t n_min) {
    std::normal_distribution<double> noise(0.0, 0.3);
    Dataset d;
    d.feature_dim = 2;
    std::int64_t id = 0;
    for (std::size_t i = 0; i < n_maj; ++i)
        d.samples.push_back(make_sample(id++, label_stable,
                                        {noise(rng), noise(rng)}));
    for (std::size_t i = 0; i < n_min; ++i)
        d.samples.push_back(make_sample(id++, label_unstable,
                                        {5.0 + noise(rng), 5.0 + noise(rng)}));
    return d;
}

double seg_dist(const std::vector<double>& p, std::span<const double> a,
                std::span<const double> b) {
    double ab2 = 0.0, ap_ab = 0.0;
    for (std::size_t k = 0; k < p.size(); ++k) {
        const double d = b[k] - a[k];
        ab2 += d * d;
        ap_ab += (p[k] - a[k]) * d;
    }
    const double t = ab2 == 0.0 ? 0.0 : std::clamp(ap_ab / ab2, 0.0, 1.0);
    double dist2 = 0.0;
    for (std::size_t k = 0; k < p.size(); ++k) {
        const double proj = a[k] + t * (b[k] - a[k]);
        dist2 += (p[k] - proj) * (p[k] - proj);
    }
    return std::sqrt(dist2);
}

/// True when p lies on a segment between two rows of pts (closed endpoints).
bool on_some_segment(const std::vector<double>& p, const Matrix& pts, double tol) {
    for (std::size_t i = 0; i < pts.rows; ++i)
        for (std::size_t j = i; j < pts.rows; ++j)
            if (seg_dist(p, pts.row(i), pts.row(j)) <= tol) return true;
    return false;
}

std::vector<const Sample*> synthetics_of(const Dataset& d) {
    std::vector<const Sample*> out;
    for (const auto& s : d.samples)
        if (s.synthetic) out.push_back(&s);
    return out;
}

}  // namespace

TEST_SUITE("resample") {

TEST_CASE("ros duplicates a single minority point") {
    Dataset d;
    d.feature_dim = 2;
    for (int i = 0; i < 4; ++i)
        d.samples.push_back(make_sample(i, label_stable, {double(i), 0.0}));
    d.samples.push_back(make_sample(4, label_unstable, {7.0, 3.0}));

    ResamplePlan plan;
    plan.method = Method::ros;
    auto out = rs::resample(d, plan);
    REQUIRE(out.samples.size() == 8);
    auto syn = synthetics_of(out);
    REQUIRE(syn.size() == 3);
    for (const auto* s : syn) {
        CHECK(s->features == std::vector<double>{7.0, 3.0});
        CHECK(s->label == label_unstable);
        CHECK(s->provenance == "ros");
        CHECK(s->split == "train");
    }
}

TEST_CASE("ros copies real minority rows and leaves originals alone") {
    std::mt19937_64 rng(41);
    auto d = two_blob_train(rng, 20, 5);
    ResamplePlan plan;
    plan.method = Method::ros;
    plan.seed = 7;
    auto out = rs::resample(d, plan);

    // originals come first and are untouched
    REQUIRE(out.samples.size() >= d.samples.size());
    for (std::size_t i = 0; i < d.samples.size(); ++i) {
        CHECK(out.samples[i].id == d.samples[i].id);
        CHECK(out.samples[i].features == d.samples[i].features);
        CHECK_FALSE(out.samples[i].synthetic);
    }

    // target ratio 1.0 means minority count matches majority within one
    const auto maj = count_label(out, label_stable);
    const auto mino = count_label(out, label_unstable);
    CHECK(maj == 20);
    CHECK(std::llabs(static_cast<long long>(maj) - static_cast<long long>(mino)) <= 1);

    // every synthetic equals one of the real minority rows exactly
    auto min_idx = indices_of(d, label_unstable);
    for (const auto* s : synthetics_of(out)) {
        bool found = false;
        for (auto i : min_idx) found |= d.samples[i].features == s->features;
        CHECK(found);
    }

    // fresh ids, no collisions
    std::vector<std::int64_t> ids;
    for (const auto& s : out.samples) ids.push_back(s.id);
    std::sort(ids.begin(), ids.end());
    CHECK(std::adjacent_find(ids.begin(), ids.end()) == ids.end());
}

TEST_CASE("resampling is deterministic per seed") {
    std::mt19937_64 rng(43);
    auto d = two_blob_train(rng, 30, 6);
    for (auto method : {Method::ros, Method::smote, Method::adasyn}) {
        ResamplePlan plan;
        plan.method = method;
        plan.k = 3;
        plan.seed = 99;
        auto a = rs::resample(d, plan);
        auto b = rs::resample(d, plan);
        REQUIRE(a.samples.size() == b.samples.size());
        bool identical = true;
        for (std::size_t i = 0; i < a.samples.size(); ++i)
            identical &= a.samples[i].features == b.samples[i].features;
        CHECK(identical);

        plan.seed = 100;
        auto c = rs::resample(d, plan);
        bool all_same = a.samples.size() == c.samples.size();
        if (all_same)
            for (std::size_t i = 0; i < a.samples.size(); ++i)
                all_same &= a.samples[i].features == c.samples[i].features;
        CHECK_FALSE(all_same);
    }
}

TEST_CASE("validation rejects unusable inputs") {
    std::mt19937_64 rng(47);
    auto d = two_blob_train(rng, 10, 4);

    Dataset single;
    single.feature_dim = 2;
    for (int i = 0; i < 5; ++i)
        single.samples.push_back(make_sample(i, label_stable, {0.0, 0.0}));
    CHECK_THROWS_AS(rs::resample(single, ResamplePlan{}), ConfigError);

    auto with_unlabeled = d;
    with_unlabeled.samples[0].label = label_unlabeled;
    CHECK_THROWS_AS(rs::resample(with_unlabeled, ResamplePlan{}), ConfigError);

    ResamplePlan big_k;
    big_k.method = Method::smote;
    big_k.k = 4;  // not strictly below the minority count
    CHECK_THROWS_AS(rs::resample(d, big_k), ConfigError);
    big_k.method = Method::adasyn;
    CHECK_THROWS_AS(rs::resample(d, big_k), ConfigError);

    ResamplePlan zero_k;
    zero_k.method = Method::smote;
    zero_k.k = 0;
    CHECK_THROWS_AS(rs::resample(d, zero_k), ConfigError);

    ResamplePlan bad_ratio;
    bad_ratio.target_ratio = 0.0;
    CHECK_THROWS_AS(rs::resample(d, bad_ratio), ConfigError);
}

TEST_CASE("already satisfied ratio is a no-op") {
    std::mt19937_64 rng(53);
    auto d = two_blob_train(rng, 8, 8);
    ResamplePlan plan;
    plan.method = Method::ros;
    auto out = rs::resample(d, plan);
    CHECK(out.samples.size() == d.samples.size());
    CHECK(synthetics_of(out).empty());
}

TEST_CASE("smote with two minority points stays on their segment") {
    Dataset d;
    d.feature_dim = 2;
    for (int i = 0; i < 10; ++i)
        d.samples.push_back(make_sample(i, label_stable, {10.0 + i, -5.0}));
    d.samples.push_back(make_sample(10, label_unstable, {0.0, 0.0}));
    d.samples.push_back(make_sample(11, label_unstable, {1.0, 1.0}));

    ResamplePlan plan;
    plan.method = Method::smote;
    plan.k = 1;
    plan.seed = 3;
    auto out = rs::resample(d, plan);
    auto syn = synthetics_of(out);
    REQUIRE(syn.size() == 8);
    for (const auto* s : syn) {
        // interpolation keeps both coordinates equal and inside [0,1]
        CHECK(std::abs(s->features[0] - s->features[1]) < 1e-12);
        CHECK(s->features[0] >= 0.0);
        CHECK(s->features[0] <= 1.0);
        CHECK(s->provenance == "smote");
    }
}

TEST_CASE("smote synthetics are convex combinations of minority pairs") {
    std::mt19937_64 rng(59);
    auto d = two_blob_train(rng, 40, 5);
    ResamplePlan plan;
    plan.method = Method::smote;
    plan.k = 3;
    plan.seed = 11;
    auto out = rs::resample(d, plan);
    auto min_idx = indices_of(d, label_unstable);
    auto min_pts = feature_rows(d, min_idx);
    auto syn = synthetics_of(out);
    REQUIRE(syn.size() == 35);
    for (const auto* s : syn)
        CHECK(on_some_segment(s->features, min_pts, 1e-9));
}

TEST_CASE("adasyn weights hit the boundary cases") {
    // tight minority cluster far from everything plus one minority point
    // ringed by majority
    Dataset d;
    d.feature_dim = 2;
    std::int64_t id = 0;
    const double cl[4][2] = {{0.0, 0.0}, {0.0, 0.1}, {0.1, 0.0}, {0.1, 0.1}};
    for (auto& p : cl)
        d.samples.push_back(make_sample(id++, label_unstable, {p[0], p[1]}));
    d.samples.push_back(make_sample(id++, label_unstable, {20.0, 20.0}));
    const double ring[8][2] = {{19.9, 20.0}, {20.1, 20.0}, {20.0, 19.9},
                               {20.0, 20.1}, {19.9, 19.9}, {20.1, 20.1},
                               {19.9, 20.1}, {20.1, 19.9}};
    for (auto& p : ring)
        d.samples.push_back(make_sample(id++, label_stable, {p[0], p[1]}));

    auto w = adasyn_weights(d, 3);
    REQUIRE(w.size() == 5);
    for (int i = 0; i < 4; ++i) CHECK(w[i] == 0.0);  // all neighbors minority
    CHECK(w[4] == 1.0);                              // all neighbors majority

    // every synthetic then stems from the ringed point toward the cluster
    ResamplePlan plan;
    plan.method = Method::adasyn;
    plan.k = 3;
    plan.seed = 17;
    auto out = rs::resample(d, plan);
    auto syn = synthetics_of(out);
    REQUIRE(syn.size() == 3);  // majority 8, minority 5
    const std::vector<double> m = {20.0, 20.0};
    for (const auto* s : syn) {
        bool ok = false;
        for (auto& p : cl) {
            Matrix seg(2, 2, {m[0], m[1], p[0], p[1]});
            ok |= on_some_segment(s->features, seg, 1e-9);
        }
        CHECK(ok);
        CHECK(s->provenance == "adasyn");
    }
}

TEST_CASE("largest remainder allocation") {
    CHECK(largest_remainder_allocation({0.2, 0.8}, 5) ==
          std::vector<std::size_t>{1, 4});
    CHECK(largest_remainder_allocation({0.5, 0.5}, 5) ==
          std::vector<std::size_t>{3, 2});
    CHECK(largest_remainder_allocation({0.0, 0.0, 0.0}, 7) ==
          std::vector<std::size_t>{3, 2, 2});
    CHECK(largest_remainder_allocation({1.0, 0.0}, 4) ==
          std::vector<std::size_t>{4, 0});

    std::mt19937_64 rng(61);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> w(1 + trial % 7);
        for (auto& x : w) x = u(rng);
        auto alloc = largest_remainder_allocation(w, 13);
        CHECK(std::accumulate(alloc.begin(), alloc.end(), std::size_t{0}) == 13);
    }
}

TEST_CASE("adasyn reaches the target count within one sample") {
    std::mt19937_64 rng(67);
    auto d = two_blob_train(rng, 30, 6);
    ResamplePlan plan;
    plan.method = Method::adasyn;
    plan.k = 3;
    plan.seed = 23;
    auto out = rs::resample(d, plan);
    const auto maj = count_label(out, label_stable);
    const auto mino = count_label(out, label_unstable);
    CHECK(std::llabs(static_cast<long long>(maj) - static_cast<long long>(mino)) <= 1);

    auto min_idx = indices_of(d, label_unstable);
    auto min_pts = feature_rows(d, min_idx);
    for (const auto* s : synthetics_of(out))
        CHECK(on_some_segment(s->features, min_pts, 1e-9));
}

}  // TEST_SUITE
