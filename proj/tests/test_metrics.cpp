#include <doctest.h>

#include <cmath>
#include <random>

#include "stvsa/metrics.hpp"
#include "support/oracles.hpp"

using namespace stvsa;
using namespace stvsa::metrics;

namespace {

Matrix gaussian_blob(std::mt19937_64& rng, std::size_t n, std::size_t d,
                     double mean, double sd) {
    std::normal_distribution<double> dist(mean, sd);
    Matrix m(n, d);
    for (auto& x : m.v) x = dist(rng);
    return m;
}

}  // namespace

TEST_SUITE("metrics") {

TEST_CASE("published confusion matrix reproduces the reported indicators") {
    // 1100 test samples, 2 stable cases predicted unstable, nothing missed
    ConfusionMatrix cm{998, 0, 2, 100};
    auto m = classification_metrics(cm);
    CHECK(m.acc * 100.0 == doctest::Approx(99.82).epsilon(1e-4));
    CHECK(m.mis == 0.0);
    CHECK(m.fal * 100.0 == doctest::Approx(0.18).epsilon(2e-2));
    REQUIRE(m.mcc.has_value());
    CHECK(*m.mcc == doctest::Approx(0.9892).epsilon(1e-4));
    CHECK(*m.mcc == doctest::Approx(0.98915659).epsilon(1e-6));
    REQUIRE(m.gmean.has_value());
    CHECK(*m.gmean == doctest::Approx(0.99899950).epsilon(1e-6));
    REQUIRE(m.f1.has_value());
    CHECK(*m.f1 == doctest::Approx(0.99899900).epsilon(1e-6));
}

TEST_CASE("perfect classifier") {
    ConfusionMatrix cm{50, 0, 0, 5};
    auto m = classification_metrics(cm);
    CHECK(m.acc == 1.0);
    CHECK(m.mis == 0.0);
    CHECK(m.fal == 0.0);
    CHECK(*m.mcc == doctest::Approx(1.0));
    CHECK(*m.f1 == doctest::Approx(1.0));
    CHECK(*m.gmean == doctest::Approx(1.0));
}

TEST_CASE("degenerate all-stable predictor on 10:1 data") {
    ConfusionMatrix cm{10, 1, 0, 0};
    auto m = classification_metrics(cm);
    CHECK(m.acc == doctest::Approx(10.0 / 11.0));
    CHECK_FALSE(m.mcc.has_value());  // empty predicted-unstable column
    REQUIRE(m.gmean.has_value());
    CHECK(*m.gmean == 0.0);
    CHECK(m.mis == doctest::Approx(1.0 / 11.0));
}

TEST_CASE("empty matrix rejected") {
    CHECK_THROWS_AS(classification_metrics(ConfusionMatrix{}), DomainError);
}

TEST_CASE("mcc stays in [-1,1] and hits 1 only with clean diagonal") {
    std::mt19937_64 rng(41);
    std::uniform_int_distribution<std::size_t> c(0, 40);
    for (int t = 0; t < 300; ++t) {
        ConfusionMatrix cm{c(rng), c(rng), c(rng), c(rng)};
        if (cm.total() == 0) continue;
        auto m = classification_metrics(cm);
        if (m.mcc) {
            CHECK(*m.mcc >= -1.0 - 1e-12);
            CHECK(*m.mcc <= 1.0 + 1e-12);
            if (*m.mcc > 1.0 - 1e-12) {
                CHECK(cm.n_su == 0);
                CHECK(cm.n_us == 0);
            }
        }
        // pure function of the matrix: recomputation is bit-identical
        auto m2 = classification_metrics(cm);
        CHECK(m.acc == m2.acc);
        CHECK(m.mcc == m2.mcc);
    }
}

TEST_CASE("silhouette: hand-computed 4-point instance") {
    // {(0,0),(0,1)} vs {(10,0),(10,1)}: a=1, b=(10+sqrt(101))/2 for each point
    Matrix x(4, 2, {0, 0, 0, 1, 10, 0, 10, 1});
    std::vector<int> labels = {0, 0, 1, 1};
    const double b = (10.0 + std::sqrt(101.0)) / 2.0;
    const double expected = (b - 1.0) / b;
    CHECK(std::abs(silhouette(x, labels) - expected) < 1e-9);
    CHECK(silhouette(x, labels) == doctest::Approx(0.9002488).epsilon(1e-6));
}

TEST_CASE("silhouette: separated blobs approach 1") {
    std::mt19937_64 rng(43);
    auto a = gaussian_blob(rng, 60, 3, 0.0, 0.05);
    auto b = gaussian_blob(rng, 60, 3, 50.0, 0.05);
    Matrix x(120, 3);
    std::vector<int> labels(120);
    for (std::size_t i = 0; i < 60; ++i) {
        for (std::size_t j = 0; j < 3; ++j) {
            x.at(i, j) = a.at(i, j);
            x.at(60 + i, j) = b.at(i, j);
        }
        labels[i] = 0;
        labels[60 + i] = 1;
    }
    CHECK(silhouette(x, labels) > 0.99);
}

TEST_CASE("silhouette: random labels on one blob sit near zero") {
    std::mt19937_64 rng(47);
    auto x = gaussian_blob(rng, 1000, 2, 0.0, 1.0);
    std::vector<int> labels(1000);
    std::uniform_int_distribution<int> lab(0, 1);
    for (auto& l : labels) l = lab(rng);
    CHECK(std::abs(silhouette(x, labels)) < 0.1);
}

TEST_CASE("silhouette: invariant under isometry") {
    std::mt19937_64 rng(53);
    auto x = gaussian_blob(rng, 80, 2, 0.0, 1.0);
    std::vector<int> labels(80);
    for (std::size_t i = 0; i < 80; ++i) labels[i] = i % 3;
    const double base = silhouette(x, labels);
    // rotate by 0.7 rad and translate by (5, -3)
    const double c = std::cos(0.7), s = std::sin(0.7);
    Matrix y(80, 2);
    for (std::size_t i = 0; i < 80; ++i) {
        y.at(i, 0) = c * x.at(i, 0) - s * x.at(i, 1) + 5.0;
        y.at(i, 1) = s * x.at(i, 0) + c * x.at(i, 1) - 3.0;
    }
    CHECK(std::abs(silhouette(y, labels) - base) < 1e-9);
}

TEST_CASE("silhouette: single cluster rejected, singleton scores zero") {
    Matrix x(3, 1, {0.0, 1.0, 2.0});
    CHECK_THROWS_AS(silhouette(x, {0, 0, 0}), ConfigError);
    CHECK_THROWS_AS(silhouette(x, {0, 0}), ShapeError);  // label count mismatch

    // cluster {0,1} plus singleton {2}: singleton contributes 0
    Matrix z(3, 1, {0.0, 0.2, 10.0});
    std::vector<int> labels = {0, 0, 1};
    // point 0: a=0.2, b=10 -> (10-0.2)/10; point 1: a=0.2, b=9.8 -> 9.6/9.8
    const double expected = ((10.0 - 0.2) / 10.0 + (9.8 - 0.2) / 9.8 + 0.0) / 3.0;
    CHECK(std::abs(silhouette(z, labels) - expected) < 1e-9);
}

TEST_CASE("wasserstein: identity, point masses, and 1-D sorted oracle") {
    std::mt19937_64 rng(59);
    auto a = gaussian_blob(rng, 40, 3, 0.0, 1.0);
    CHECK(wasserstein_empirical(a, a) <= 1e-12);

    Matrix p(1, 1, {0.0}), q(1, 1, {3.0});
    CHECK(wasserstein_empirical(p, q) == doctest::Approx(3.0));

    for (int t = 0; t < 5; ++t) {
        const std::size_t n = 64;
        Matrix u(n, 1), w(n, 1);
        std::normal_distribution<double> d0(0.0, 1.0), d1(2.0, 3.0);
        for (auto& x : u.v) x = d0(rng);
        for (auto& x : w.v) x = d1(rng);
        const double oracle = oracles::wd_1d_sorted(u.v, w.v);
        CHECK(wasserstein_empirical(u, w) == doctest::Approx(oracle).epsilon(1e-9));
    }
}

TEST_CASE("wasserstein: triangle inequality on random triples") {
    std::mt19937_64 rng(61);
    for (int t = 0; t < 5; ++t) {
        auto a = gaussian_blob(rng, 24, 2, 0.0, 1.0);
        auto b = gaussian_blob(rng, 24, 2, 1.5, 0.7);
        auto c = gaussian_blob(rng, 24, 2, -1.0, 1.3);
        const double ab = wasserstein_empirical(a, b);
        const double bc = wasserstein_empirical(b, c);
        const double ac = wasserstein_empirical(a, c);
        CHECK(ac <= ab + bc + 1e-9);
    }
}

TEST_CASE("wasserstein: beats any greedy matching it is compared against") {
    // exactness spot check: the optimal cost is <= the identity matching cost
    std::mt19937_64 rng(67);
    auto a = gaussian_blob(rng, 32, 4, 0.0, 1.0);
    auto b = gaussian_blob(rng, 32, 4, 0.5, 1.0);
    double identity_cost = 0.0;
    for (std::size_t i = 0; i < 32; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < 4; ++j) {
            const double d = a.at(i, j) - b.at(i, j);
            s += d * d;
        }
        identity_cost += std::sqrt(s);
    }
    identity_cost /= 32.0;
    CHECK(wasserstein_empirical(a, b) <= identity_cost + 1e-12);
}

TEST_CASE("wasserstein: erroneous inputs") {
    Matrix a(2, 2, {0, 0, 1, 1}), b(3, 2), empty;
    CHECK_THROWS_AS(wasserstein_empirical(a, b), ShapeError);
    CHECK_THROWS_AS(wasserstein_empirical(a, empty), DomainError);
}

TEST_CASE("mmd: null check, separation, symmetry") {
    std::mt19937_64 rng(71);
    auto a = gaussian_blob(rng, 500, 2, 0.0, 1.0);
    auto b = gaussian_blob(rng, 500, 2, 0.0, 1.0);
    const double bw = median_pairwise_bandwidth(a, b);
    CHECK(bw > 0.0);
    CHECK(std::abs(mmd_rbf(a, b, bw)) < 0.02);

    auto far = gaussian_blob(rng, 500, 2, 5.0, 1.0);
    const double bw2 = median_pairwise_bandwidth(a, far);
    CHECK(mmd_rbf(a, far, bw2) > 10.0 * std::abs(mmd_rbf(a, b, bw)));

    CHECK(mmd_rbf(a, far, bw2) == mmd_rbf(far, a, bw2));
}

TEST_CASE("mmd: input validation") {
    Matrix one(1, 2, {0, 0});
    Matrix two(2, 2, {0, 0, 1, 1});
    CHECK_THROWS_AS(mmd_rbf(one, two, 1.0), DomainError);
    CHECK_THROWS_AS(mmd_rbf(two, two, 0.0), DomainError);
    CHECK_THROWS_AS(mmd_rbf(two, two, -1.0), DomainError);
}

TEST_CASE("fid: identical sets and closed forms") {
    std::mt19937_64 rng(73);
    auto a = gaussian_blob(rng, 200, 3, 0.0, 1.0);
    CHECK(std::abs(fid_gaussian(a, a)) < 1e-8);

    // equal identity covariances, mean shifted by v -> ||v||^2
    Matrix eye(3, 3, {1, 0, 0, 0, 1, 0, 0, 0, 1});
    std::vector<double> mu0 = {0, 0, 0}, mu1 = {1.0, -2.0, 0.5};
    CHECK(fid_from_moments(mu0, eye, mu1, eye) ==
          doctest::Approx(1.0 + 4.0 + 0.25).epsilon(1e-10));

    // scalar Gaussians N(0,1) vs N(1,4): (mu diff)^2 + (sd_a - sd_b)^2 = 1 + 1
    Matrix va(1, 1, {1.0}), vb(1, 1, {4.0});
    CHECK(fid_from_moments({0.0}, va, {1.0}, vb) == doctest::Approx(2.0).epsilon(1e-10));
}

TEST_CASE("fid: sampled scalar Gaussians approach the closed form") {
    std::mt19937_64 rng(79);
    const std::size_t n = 20000;
    Matrix a(n, 1), b(n, 1);
    std::normal_distribution<double> d0(0.0, 1.0), d1(1.0, 2.0);
    for (auto& x : a.v) x = d0(rng);
    for (auto& x : b.v) x = d1(rng);
    CHECK(fid_gaussian(a, b) == doctest::Approx(2.0).epsilon(0.05));
}

TEST_CASE("fid: too few samples rejected") {
    Matrix one(1, 2, {0, 0});
    Matrix ok(5, 2);
    CHECK_THROWS_AS(fid_gaussian(one, ok), DomainError);
}

}  // TEST_SUITE
