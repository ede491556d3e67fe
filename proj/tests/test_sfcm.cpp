#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "stvsa/sfcm.hpp"

using namespace stvsa;
using namespace stvsa::sfcm;

namespace {

/// Trajectory with every bus flat at `level` except one excursion segment.
Matrix flat_voltages(std::size_t steps, std::size_t buses, double level) {
    return Matrix(steps, buses, level);
}

struct Blobs {
    Matrix x;
    std::vector<int> truth;
    std::vector<SeedLabel> labels;
};

/// Two Gaussian blobs separated by 6 sigma with a fraction of seeded labels.
Blobs make_blobs(std::mt19937_64& rng, std::size_t per_cluster, double sep_sigma,
                 double label_fraction) {
    const double sigma = 1.0;
    std::normal_distribution<double> noise(0.0, sigma);
    Blobs b;
    b.x = Matrix(2 * per_cluster, 2);
    b.truth.resize(2 * per_cluster);
    b.labels.assign(2 * per_cluster, SeedLabel::unlabeled);
    for (std::size_t i = 0; i < 2 * per_cluster; ++i) {
        const int cls = i < per_cluster ? 0 : 1;
        const double cx = cls == 0 ? 0.0 : sep_sigma * sigma;
        b.x.at(i, 0) = cx + noise(rng);
        b.x.at(i, 1) = noise(rng);
        b.truth[i] = cls;
    }
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (std::size_t i = 0; i < 2 * per_cluster; ++i)
        if (u(rng) < label_fraction)
            b.labels[i] = b.truth[i] == 0 ? SeedLabel::stable : SeedLabel::unstable;
    // fit requires at least one seed per class
    b.labels[0] = SeedLabel::stable;
    b.labels[per_cluster] = SeedLabel::unstable;
    return b;
}

}  // namespace

TEST_SUITE("sfcm") {

TEST_CASE("rule labels: confident stable") {
    auto v = flat_voltages(100, 3, 0.97);
    CHECK(rule_label(v) == SeedLabel::stable);
    // exactly at the floor still counts as never dropping below
    auto edge = flat_voltages(100, 3, 0.9);
    CHECK(rule_label(edge) == SeedLabel::stable);
}

TEST_CASE("rule labels: definitive collapse") {
    Matrix v(100, 2, 0.95);
    for (std::size_t t = 40; t < 100; ++t) {
        v.at(t, 0) = 0.5;
        v.at(t, 1) = 0.4;
    }
    CHECK(rule_label(v) == SeedLabel::unstable);
}

TEST_CASE("rule labels: dip with recovery is unlabeled") {
    Matrix v(100, 2, 0.95);
    for (std::size_t t = 30; t < 50; ++t) v.at(t, 0) = 0.85;
    CHECK(rule_label(v) == SeedLabel::unlabeled);

    // collapse of one bus only: not all buses end low
    Matrix w(100, 2, 0.95);
    for (std::size_t t = 30; t < 100; ++t) w.at(t, 0) = 0.5;
    CHECK(rule_label(w) == SeedLabel::unlabeled);

    // all buses end low, but one recovered mid-way after first going under
    Matrix r(100, 2, 0.95);
    for (std::size_t t = 20; t < 30; ++t) r.at(t, 0) = 0.6;
    for (std::size_t t = 30; t < 40; ++t) r.at(t, 0) = 0.75;
    for (std::size_t t = 40; t < 100; ++t) {
        r.at(t, 0) = 0.5;
        r.at(t, 1) = 0.5;
    }
    CHECK(rule_label(r) == SeedLabel::unlabeled);
}

TEST_CASE("seed_labels maps the batch") {
    std::vector<Matrix> batch = {flat_voltages(10, 2, 0.95),
                                 flat_voltages(10, 2, 0.3),
                                 flat_voltages(10, 2, 0.8)};
    auto lab = seed_labels(batch);
    REQUIRE(lab.size() == 3);
    CHECK(lab[0] == SeedLabel::stable);
    CHECK(lab[1] == SeedLabel::unstable);
    CHECK(lab[2] == SeedLabel::unlabeled);
}

TEST_CASE("fit separates 6-sigma blobs with 10% seeds") {
    std::mt19937_64 rng(173);
    auto b = make_blobs(rng, 250, 6.0, 0.1);
    auto res = sfcm_fit(b.x, b.labels);
    CHECK(res.converged);
    auto crisp = harden(res.u);

    std::size_t unlabeled_total = 0, unlabeled_hits = 0;
    for (std::size_t i = 0; i < b.truth.size(); ++i) {
        if (b.labels[i] != SeedLabel::unlabeled) continue;
        ++unlabeled_total;
        unlabeled_hits += crisp[i] == b.truth[i];
    }
    REQUIRE(unlabeled_total > 0);
    CHECK(static_cast<double>(unlabeled_hits) /
              static_cast<double>(unlabeled_total) >=
          0.99);
}

TEST_CASE("fit maintains row-stochastic memberships and monotone objective") {
    std::mt19937_64 rng(179);
    auto b = make_blobs(rng, 100, 4.0, 0.15);
    auto res = sfcm_fit(b.x, b.labels);
    for (std::size_t i = 0; i < res.u.rows; ++i) {
        double row = 0.0;
        for (std::size_t j = 0; j < res.u.cols; ++j) {
            const double v = res.u.at(i, j);
            CHECK(v >= 0.0);
            CHECK(v <= 1.0);
            row += v;
        }
        CHECK(std::abs(row - 1.0) < 1e-9);
    }
    REQUIRE(res.objective.size() >= 2);
    for (std::size_t k = 1; k < res.objective.size(); ++k)
        CHECK(res.objective[k] <= res.objective[k - 1] + 1e-9);

    // locked rows stay exactly one-hot
    for (std::size_t i = 0; i < b.labels.size(); ++i) {
        if (b.labels[i] == SeedLabel::unlabeled) continue;
        const auto cls = static_cast<std::size_t>(b.labels[i]);
        CHECK(res.u.at(i, cls) == 1.0);
        CHECK(res.u.at(i, 1 - cls) == 0.0);
    }
}

TEST_CASE("identical points: uniform memberships, centers at the point") {
    Matrix x(5, 2);
    for (auto& v : x.v) v = 3.5;
    std::vector<SeedLabel> labels = {SeedLabel::stable, SeedLabel::unstable,
                                     SeedLabel::unlabeled, SeedLabel::unlabeled,
                                     SeedLabel::unlabeled};
    auto res = sfcm_fit(x, labels);
    for (std::size_t j = 0; j < 2; ++j) {
        CHECK(res.centers.at(j, 0) == doctest::Approx(3.5));
        CHECK(res.centers.at(j, 1) == doctest::Approx(3.5));
    }
    for (std::size_t i = 2; i < 5; ++i) {
        CHECK(res.u.at(i, 0) == doctest::Approx(0.5));
        CHECK(res.u.at(i, 1) == doctest::Approx(0.5));
    }
}

TEST_CASE("fully labeled data degenerates to class means") {
    Matrix x(4, 1, {0.0, 2.0, 10.0, 14.0});
    std::vector<SeedLabel> labels = {SeedLabel::stable, SeedLabel::stable,
                                     SeedLabel::unstable, SeedLabel::unstable};
    auto res = sfcm_fit(x, labels);
    CHECK(res.centers.at(0, 0) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(res.centers.at(1, 0) == doctest::Approx(12.0).epsilon(1e-12));
    auto crisp = harden(res.u);
    CHECK(crisp == std::vector<int>{0, 0, 1, 1});
}

TEST_CASE("membership formula on a hand instance at l=2") {
    // seeds put centers at 0 and 4; the free point at 1 has d=(1,3)
    Matrix x(3, 1, {0.0, 4.0, 1.0});
    std::vector<SeedLabel> labels = {SeedLabel::stable, SeedLabel::unstable,
                                     SeedLabel::unlabeled};
    SfcmParams p;
    p.max_iterations = 1;
    auto res = sfcm_fit(x, labels, p);
    // u = 1 / sum_s (d_j/d_s)^2: [1/(1+1/9), 1/(9+1)]
    CHECK(res.u.at(2, 0) == doctest::Approx(0.9).epsilon(1e-12));
    CHECK(res.u.at(2, 1) == doctest::Approx(0.1).epsilon(1e-12));
}

TEST_CASE("point coincident with a single center goes one-hot") {
    Matrix x(3, 1, {0.0, 4.0, 0.0});
    std::vector<SeedLabel> labels = {SeedLabel::stable, SeedLabel::unstable,
                                     SeedLabel::unlabeled};
    SfcmParams p;
    p.max_iterations = 1;
    auto res = sfcm_fit(x, labels, p);
    CHECK(res.u.at(2, 0) == 1.0);
    CHECK(res.u.at(2, 1) == 0.0);
}

TEST_CASE("fit validates inputs") {
    Matrix x(3, 1, {0.0, 1.0, 2.0});
    // no unstable seed
    std::vector<SeedLabel> labels = {SeedLabel::stable, SeedLabel::stable,
                                     SeedLabel::unlabeled};
    CHECK_THROWS_AS(sfcm_fit(x, labels), ConfigError);

    std::vector<SeedLabel> wrong_len = {SeedLabel::stable, SeedLabel::unstable};
    CHECK_THROWS_AS(sfcm_fit(x, wrong_len), ShapeError);

    SfcmParams bad;
    bad.fuzziness = 1.0;
    std::vector<SeedLabel> ok = {SeedLabel::stable, SeedLabel::unstable,
                                 SeedLabel::unlabeled};
    CHECK_THROWS_AS(sfcm_fit(x, ok, bad), ConfigError);
}

TEST_CASE("harden tie-break and argmax") {
    Matrix u(3, 2, {0.9, 0.1, 0.5, 0.5, 0.2, 0.8});
    auto crisp = harden(u);
    CHECK(crisp == std::vector<int>{0, 1, 1});
}

TEST_CASE("harden after fit ignores sample order") {
    std::mt19937_64 rng(181);
    auto b = make_blobs(rng, 120, 6.0, 0.2);
    auto crisp = harden(sfcm_fit(b.x, b.labels).u);

    // reverse the sample order
    const std::size_t n = b.truth.size();
    Matrix rx(n, 2);
    std::vector<SeedLabel> rlabels(n);
    for (std::size_t i = 0; i < n; ++i) {
        rx.at(n - 1 - i, 0) = b.x.at(i, 0);
        rx.at(n - 1 - i, 1) = b.x.at(i, 1);
        rlabels[n - 1 - i] = b.labels[i];
    }
    auto rcrisp = harden(sfcm_fit(rx, rlabels).u);
    for (std::size_t i = 0; i < n; ++i) CHECK(rcrisp[n - 1 - i] == crisp[i]);
}

}  // TEST_SUITE
