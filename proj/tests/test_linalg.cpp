#include <doctest.h>

#include <cmath>
#include <stdexcept>

#include "test_support.hpp"
#include "werank/linalg.hpp"

using namespace werank::linalg;
using testsupport::jacobi_eigenvalues_oracle;
using testsupport::matmul_oracle;
using testsupport::random_matrix;
using testsupport::random_spd;
using werank::Rng;

TEST_CASE("matmul identity and hand arithmetic") {
    auto a = DenseMatrix::from_rows({{1, 2}, {3, 4}});
    auto i2 = DenseMatrix::identity(2);
    CHECK(matmul(i2, a) == a);

    auto row = DenseMatrix::from_rows({{1, 2}});
    auto col = DenseMatrix::from_rows({{3}, {4}});
    auto prod = matmul(row, col);
    CHECK(prod.rows == 1);
    CHECK(prod.cols == 1);
    CHECK(prod.at(0, 0) == doctest::Approx(11.0));
}

TEST_CASE("matmul matches triple-loop oracle") {
    Rng rng(42);
    auto a = random_matrix(rng, 5, 7);
    auto b = random_matrix(rng, 7, 3);
    CHECK(max_abs_diff(matmul(a, b), matmul_oracle(a, b)) < 1e-12);
}

TEST_CASE("matmul rejects dimension mismatch") {
    CHECK_THROWS_AS(matmul(DenseMatrix(2, 3), DenseMatrix(2, 3)), std::invalid_argument);
}

TEST_CASE("svd of diagonal and rank-1 matrices") {
    auto d = DenseMatrix::from_rows({{3, 0}, {0, 1}});
    auto r = svd(d);
    CHECK(r.sigma.sigmas[0] == doctest::Approx(3.0));
    CHECK(r.sigma.sigmas[1] == doctest::Approx(1.0));

    auto n = DenseMatrix::from_rows({{0, 2}, {0, 0}});
    auto rn = svd(n);
    CHECK(rn.sigma.sigmas[0] == doctest::Approx(2.0));
    CHECK(rn.sigma.sigmas[1] == doctest::Approx(0.0).epsilon(1e-12));
}

namespace {

void check_svd_contract(const DenseMatrix& a) {
    auto r = svd(a);
    const int k = static_cast<int>(r.sigma.size());

    DenseMatrix us(a.rows, k);
    for (int i = 0; i < a.rows; ++i)
        for (int j = 0; j < k; ++j)
            us.at(i, j) = r.u.at(i, j) * r.sigma.sigmas[static_cast<std::size_t>(j)];
    auto recon = matmul(us, r.vt);
    const double denom = std::max(frobenius_norm(a), 1e-30);
    CHECK(frobenius_norm(subtract(recon, a)) / denom < 1e-8);

    // U^T U = I and Vt Vt^T = I
    auto utu = matmul(transpose(r.u), r.u);
    auto vvt = matmul(r.vt, transpose(r.vt));
    CHECK(max_abs_diff(utu, DenseMatrix::identity(k)) < 1e-8);
    CHECK(max_abs_diff(vvt, DenseMatrix::identity(k)) < 1e-8);

    // sorted descending, non-negative
    for (std::size_t i = 0; i + 1 < r.sigma.size(); ++i)
        CHECK(r.sigma.sigmas[i] >= r.sigma.sigmas[i + 1]);
    CHECK(r.sigma.min_sigma() >= 0.0);
}

} // namespace

TEST_CASE("svd reconstruction, orthogonality and A^T A eigenvalue oracle") {
    Rng rng(7);
    auto a = random_matrix(rng, 8, 5);
    check_svd_contract(a);

    auto ata = matmul_oracle(transpose(a), a);
    auto eig = jacobi_eigenvalues_oracle(ata);
    auto r = svd(a);
    for (std::size_t i = 0; i < r.sigma.size(); ++i) {
        const double s2 = r.sigma.sigmas[i] * r.sigma.sigmas[i];
        CHECK(s2 == doctest::Approx(eig[i]).epsilon(1e-8));
    }
}

TEST_CASE("svd contract holds on random shapes up to 64x64") {
    Rng rng(11);
    const int shapes[][2] = {{1, 1}, {3, 9}, {16, 16}, {40, 12}, {64, 64}};
    for (auto [m, n] : shapes) check_svd_contract(random_matrix(rng, m, n));
    // rank-deficient: product of thin factors
    auto lo = matmul(random_matrix(rng, 10, 3), random_matrix(rng, 3, 10));
    check_svd_contract(lo);
}

TEST_CASE("sym_eig reconstructs symmetric input") {
    Rng rng(13);
    auto a = random_spd(rng, 6);
    auto e = sym_eig(a);
    // A = V diag(lambda) V^T
    DenseMatrix vl(6, 6);
    for (int i = 0; i < 6; ++i)
        for (int j = 0; j < 6; ++j)
            vl.at(i, j) = e.eigvecs.at(i, j) * e.eigvals[static_cast<std::size_t>(j)];
    auto recon = matmul(vl, transpose(e.eigvecs));
    CHECK(max_abs_diff(recon, a) < 1e-9);
    CHECK(max_abs_diff(matmul(transpose(e.eigvecs), e.eigvecs), DenseMatrix::identity(6)) < 1e-9);
    for (std::size_t i = 0; i + 1 < e.eigvals.size(); ++i)
        CHECK(e.eigvals[i] >= e.eigvals[i + 1]);
}

TEST_CASE("covariance of a two-point set and constant rows") {
    auto z = DenseMatrix::from_rows({{1, 0}, {-1, 0}});
    auto c = covariance(z);
    CHECK(c.mean[0] == doctest::Approx(0.0));
    CHECK(c.mean[1] == doctest::Approx(0.0));
    CHECK(c.cov.at(0, 0) == doctest::Approx(1.0));
    CHECK(c.cov.at(0, 1) == doctest::Approx(0.0));
    CHECK(c.cov.at(1, 1) == doctest::Approx(0.0));
    CHECK(c.sample_count == 2);

    auto constant = DenseMatrix::from_rows({{2, 3}, {2, 3}, {2, 3}});
    auto cc = covariance(constant);
    CHECK(frobenius_norm(cc.cov) == doctest::Approx(0.0));
}

TEST_CASE("covariance matches two-pass oracle and is symmetric PSD") {
    Rng rng(17);
    auto z = random_matrix(rng, 50, 4);
    auto c = covariance(z);

    // two-pass oracle: explicit mean, then outer products
    std::vector<double> mean(4, 0.0);
    for (int i = 0; i < 50; ++i)
        for (int j = 0; j < 4; ++j) mean[static_cast<std::size_t>(j)] += z.at(i, j) / 50.0;
    DenseMatrix expect(4, 4);
    for (int i = 0; i < 50; ++i)
        for (int a = 0; a < 4; ++a)
            for (int b = 0; b < 4; ++b)
                expect.at(a, b) += (z.at(i, a) - mean[static_cast<std::size_t>(a)]) *
                                   (z.at(i, b) - mean[static_cast<std::size_t>(b)]) / 50.0;
    CHECK(max_abs_diff(c.cov, expect) < 1e-12);

    CHECK(max_abs_diff(c.cov, transpose(c.cov)) < 1e-10);
    CHECK(c.eigvals.back() >= -1e-10);
    for (std::size_t i = 0; i + 1 < c.eigvals.size(); ++i) CHECK(c.eigvals[i] >= c.eigvals[i + 1]);
}

TEST_CASE("frob_dist_to_identity hand values") {
    auto d = DenseMatrix::from_rows({{4, 0}, {0, 1}});
    CHECK(frob_dist_to_identity(d) == doctest::Approx(3.0));
    CHECK(frob_dist_to_identity(DenseMatrix::identity(16)) == doctest::Approx(0.0));
    CHECK_THROWS_AS(frob_dist_to_identity(DenseMatrix(2, 3)), std::invalid_argument);
}

TEST_CASE("frob_dist_to_identity entrywise equals eigenvalue route on PSD input") {
    Rng rng(19);
    auto c = random_spd(rng, 6);
    auto eig = jacobi_eigenvalues_oracle(c);
    double s = 0.0;
    for (double l : eig) s += (l - 1.0) * (l - 1.0);
    CHECK(frob_dist_to_identity(c) == doctest::Approx(std::sqrt(s)).epsilon(1e-9));
}

TEST_CASE("numerical_rank") {
    Spectrum s{{1.0, 0.5, 1e-9}};
    CHECK(numerical_rank(s, 1e-6) == 2);
    CHECK(numerical_rank(Spectrum{{0.0, 0.0}}, 1e-6) == 0);
    CHECK(numerical_rank(Spectrum{}, 1e-6) == 0);
    CHECK_THROWS_AS(numerical_rank(s, 0.0), std::invalid_argument);

    Rng rng(23);
    auto lo = matmul(random_matrix(rng, 10, 3), random_matrix(rng, 3, 10));
    CHECK(numerical_rank(singular_values(lo), 1e-6) == 3);
}

TEST_CASE("effective_rank") {
    CHECK(effective_rank(Spectrum{{1, 1, 1, 1}}) == doctest::Approx(4.0));
    CHECK(effective_rank(Spectrum{{1, 0, 0}}) == doctest::Approx(1.0));
    // p = (0.5, 0.25, 0.25) -> exp(1.5 ln 2) = 2^1.5
    CHECK(effective_rank(Spectrum{{2, 1, 1}}) == doctest::Approx(std::pow(2.0, 1.5)));
    CHECK_THROWS_AS(effective_rank(Spectrum{{0.0}}), std::invalid_argument);
}

TEST_CASE("rank estimators: scale invariance and effective <= hard rank") {
    Rng rng(29);
    for (int trial = 0; trial < 20; ++trial) {
        const int n = 2 + rng.uniform_int(10);
        Spectrum s;
        for (int i = 0; i < n; ++i) s.sigmas.push_back(std::abs(rng.normal()) + 1e-12);
        std::sort(s.sigmas.begin(), s.sigmas.end(), std::greater<double>());

        Spectrum scaled = s;
        for (double& v : scaled.sigmas) v *= 37.5;
        CHECK(effective_rank(scaled) == doctest::Approx(effective_rank(s)).epsilon(1e-12));
        CHECK(numerical_rank(scaled, 1e-6) == numerical_rank(s, 1e-6));

        const int hard = numerical_rank(s, 1e-15);
        CHECK(effective_rank(s) <= static_cast<double>(hard) + 1e-9);
        CHECK(effective_rank(s) >= 1.0 - 1e-12);
    }
}

TEST_CASE("sparse to_dense and spmm agree with dense path") {
    SparseMatrix sp;
    sp.rows = 3;
    sp.cols = 3;
    sp.row_ptr = {0, 2, 3, 4};
    sp.col_idx = {0, 2, 1, 0};
    sp.vals = {1.0, 2.0, 3.0, 4.0};
    Rng rng(31);
    auto x = random_matrix(rng, 3, 5);
    CHECK(max_abs_diff(spmm(sp, x), matmul(sp.to_dense(), x)) < 1e-14);
}
