#include <doctest.h>

#include <cmath>
#include <stdexcept>

#include "test_support.hpp"
#include "werank/evaluation.hpp"

using namespace werank::eval;
using testsupport::random_matrix;
using werank::Rng;
using werank::linalg::DenseMatrix;
using werank::linalg::Spectrum;

namespace {

// Two separable 2-D blobs around (+3, +3) and (-3, -3).
void separable_blobs(int n, DenseMatrix& h, std::vector<int>& y, std::uint64_t seed) {
    Rng rng(seed);
    h = DenseMatrix(n, 2);
    y.resize(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        const int cls = i % 2;
        const double cx = cls == 0 ? 3.0 : -3.0;
        h.at(i, 0) = cx + 0.5 * rng.normal();
        h.at(i, 1) = cx + 0.5 * rng.normal();
        y[static_cast<std::size_t>(i)] = cls;
    }
}

} // namespace

TEST_CASE("split_nodes: sizes, disjoint, exhaustive, deterministic") {
    auto masks = split_nodes(10, 0.1, 0.1, 0.8, 3);
    int nt = 0, nv = 0, ns = 0;
    for (int i = 0; i < 10; ++i) {
        nt += masks.train[static_cast<std::size_t>(i)];
        nv += masks.val[static_cast<std::size_t>(i)];
        ns += masks.test[static_cast<std::size_t>(i)];
        const int total = masks.train[static_cast<std::size_t>(i)] +
                          masks.val[static_cast<std::size_t>(i)] +
                          masks.test[static_cast<std::size_t>(i)];
        CHECK(total == 1); // disjoint and exhaustive
    }
    CHECK(nt == 1);
    CHECK(nv == 1);
    CHECK(ns == 8);

    auto again = split_nodes(10, 0.1, 0.1, 0.8, 3);
    CHECK(again.train == masks.train);
    CHECK(again.test == masks.test);
    auto other = split_nodes(10, 0.1, 0.1, 0.8, 4);
    CHECK(other.train != masks.train);

    CHECK_THROWS_AS(split_nodes(5, 0.1, 0.1, 0.8, 1), std::invalid_argument);
    CHECK_THROWS_AS(split_nodes(10, 0.5, 0.1, 0.8, 1), std::invalid_argument);
}

TEST_CASE("probe reaches train accuracy 1.0 on separable blobs") {
    DenseMatrix h;
    std::vector<int> y;
    separable_blobs(60, h, y, 5);
    ProbeConfig cfg;
    auto fit = fit_linear_probe(h, y, h, y, 2, cfg);
    CHECK(fit.probes[fit.selected].lambda == doctest::Approx(1e-4)); // ties break small
    CHECK(evaluate_probe(fit.probes[0], h, y) == doctest::Approx(1.0));
}

TEST_CASE("probe on shuffled labels sits at chance level") {
    Rng rng(7);
    const int n = 400;
    const int classes = 4;
    auto h = random_matrix(rng, n, 6);
    std::vector<int> y(static_cast<std::size_t>(n));
    for (auto& v : y) v = rng.uniform_int(classes);

    ProbeConfig cfg;
    cfg.max_iters = 300;
    cfg.seed = 11;
    auto outcome = run_probe_protocol(h, y, classes, cfg);
    // chance 1/C with binomial 3 sigma on the ~320-node test split
    const double sigma = std::sqrt(0.25 * 0.75 / 320.0);
    CHECK(std::abs(outcome.mean_test_acc - 0.25) <= 3.0 * sigma + 0.02);
}

TEST_CASE("duplicated feature columns leave separable accuracy unchanged") {
    DenseMatrix h;
    std::vector<int> y;
    separable_blobs(80, h, y, 9);
    DenseMatrix dup(h.rows, 4);
    for (int i = 0; i < h.rows; ++i) {
        dup.at(i, 0) = h.at(i, 0);
        dup.at(i, 1) = h.at(i, 1);
        dup.at(i, 2) = h.at(i, 0);
        dup.at(i, 3) = h.at(i, 1);
    }
    ProbeConfig cfg;
    cfg.seed = 13;
    auto single = run_probe_protocol(h, y, 2, cfg);
    auto doubled = run_probe_protocol(dup, y, 2, cfg);
    CHECK(single.mean_test_acc == doctest::Approx(1.0));
    CHECK(doubled.mean_test_acc == doctest::Approx(single.mean_test_acc));
}

TEST_CASE("evaluate_probe edge cases and known confusion counts") {
    LinearProbe probe;
    probe.w = DenseMatrix::from_rows({{1.0, -1.0}});
    probe.b = DenseMatrix::zeros(1, 2);
    auto h = DenseMatrix::from_rows({{1}, {1}, {-1}, {-1}});

    CHECK(evaluate_probe(probe, h, {0, 0, 1, 1}) == doctest::Approx(1.0));
    CHECK(evaluate_probe(probe, h, {1, 1, 0, 0}) == doctest::Approx(0.0));
    CHECK(evaluate_probe(probe, h, {0, 1, 0, 1}) == doctest::Approx(0.5));

    CHECK_THROWS_AS(fit_linear_probe(h, {0, 0, 0, 0}, h, {0, 0, 0, 0}, 2, ProbeConfig{}),
                    std::invalid_argument);
}

TEST_CASE("rank report append ordering and derive_ranks") {
    RankReport report;
    report.append(0, "W1", Spectrum{{1, 1, 1}});
    report.append(10, "W1", Spectrum{{1, 1e-9, 1e-12}});
    report.append(10, "cov", Spectrum{{2, 1, 1}});
    CHECK_THROWS_AS(report.append(10, "W1", Spectrum{{1}}), std::invalid_argument);

    auto rows = derive_ranks(report, 1e-6);
    REQUIRE(rows.size() == 3);
    CHECK(rows[0].numerical_rank == 3);
    CHECK(rows[0].effective_rank == doctest::Approx(3.0));
    CHECK(rows[1].numerical_rank == 1);
    CHECK(rows[2].effective_rank == doctest::Approx(std::pow(2.0, 1.5)));
}

TEST_CASE("collapsing synthetic trace gives monotone decreasing effective rank") {
    RankReport report;
    const int dim = 8;
    for (int epoch = 0; epoch <= 50; epoch += 10) {
        Spectrum s;
        for (int i = 0; i < dim; ++i) s.sigmas.push_back(std::exp(-epoch * i * 0.05));
        report.append(epoch, "Z", std::move(s));
    }
    auto rows = derive_ranks(report, 1e-6);
    for (std::size_t i = 1; i < rows.size(); ++i)
        CHECK(rows[i].effective_rank < rows[i - 1].effective_rank + 1e-12);
    // identity-covariance style snapshot keeps rank = dim
    CHECK(rows[0].numerical_rank == dim);
}
