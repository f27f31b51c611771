#pragma once

#include <cstddef>
#include <initializer_list>
#include <string>
#include <vector>

namespace werank::linalg {

/// Row-major dense matrix of 64-bit reals; the universal carrier for
/// weights, features and embeddings.
struct DenseMatrix {
    int rows = 0;
    int cols = 0;
    std::vector<double> values; // rows * cols, row-major

    DenseMatrix() = default;
    DenseMatrix(int r, int c) : rows(r), cols(c), values(static_cast<std::size_t>(r) * c, 0.0) {}

    static DenseMatrix zeros(int r, int c) { return DenseMatrix(r, c); }
    static DenseMatrix identity(int n);
    static DenseMatrix from_rows(std::initializer_list<std::initializer_list<double>> rows);

    double& at(int r, int c) { return values[static_cast<std::size_t>(r) * cols + c]; }
    double at(int r, int c) const { return values[static_cast<std::size_t>(r) * cols + c]; }

    bool empty() const { return rows == 0 || cols == 0; }
    bool same_shape(const DenseMatrix& o) const { return rows == o.rows && cols == o.cols; }
    bool all_finite() const;

    bool operator==(const DenseMatrix& o) const = default;
};

/// Symmetric sparse matrix in CSR form; used for normalized adjacencies.
struct SparseMatrix {
    int rows = 0;
    int cols = 0;
    std::vector<int> row_ptr;  // rows + 1
    std::vector<int> col_idx;
    std::vector<double> vals;

    DenseMatrix to_dense() const;
};

/// Singular values, sorted descending, all non-negative.
struct Spectrum {
    std::vector<double> sigmas;

    std::size_t size() const { return sigmas.size(); }
    double max_sigma() const { return sigmas.empty() ? 0.0 : sigmas.front(); }
    double min_sigma() const { return sigmas.empty() ? 0.0 : sigmas.back(); }
    double mean_sigma() const;
};

struct SvdResult {
    DenseMatrix u;   // m x k, orthonormal columns (k = min(m, n))
    Spectrum sigma;  // k singular values, descending
    DenseMatrix vt;  // k x n, orthonormal rows
};

struct SymEigResult {
    std::vector<double> eigvals;  // descending
    DenseMatrix eigvecs;          // columns are eigenvectors, same order
};

/// Covariance of row-sample matrices: C = (1/N) * sum_i (z_i - mean)(z_i - mean)^T.
struct CovarianceSummary {
    DenseMatrix cov;              // M x M, symmetric PSD
    std::vector<double> mean;     // length M
    int sample_count = 0;
    std::vector<double> eigvals;  // descending
};

// ---- dense arithmetic ----

DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b);
DenseMatrix transpose(const DenseMatrix& a);
DenseMatrix add(const DenseMatrix& a, const DenseMatrix& b);
DenseMatrix subtract(const DenseMatrix& a, const DenseMatrix& b);
DenseMatrix scale(const DenseMatrix& a, double s);
DenseMatrix hadamard(const DenseMatrix& a, const DenseMatrix& b);
DenseMatrix spmm(const SparseMatrix& a, const DenseMatrix& b);

double frobenius_norm(const DenseMatrix& a);
double max_abs_diff(const DenseMatrix& a, const DenseMatrix& b);

// ---- decompositions ----

/// One-sided Jacobi SVD. Accurate and adequate at the sizes used here
/// (spectra are computed on matrices up to ~512x512). Throws on
/// non-convergence after the sweep cap, with condition diagnostics.
SvdResult svd(const DenseMatrix& a);

/// Cyclic two-sided Jacobi eigendecomposition for symmetric input.
SymEigResult sym_eig(const DenseMatrix& a);

/// Singular values only (svd without accumulating U/V when not needed).
Spectrum singular_values(const DenseMatrix& a);

// ---- spectral summaries ----

CovarianceSummary covariance(const DenseMatrix& z);

/// sqrt(sum_ij (c_ij - delta_ij)^2); for symmetric PSD input this equals
/// sqrt(sum_i (lambda_i - 1)^2).
double frob_dist_to_identity(const DenseMatrix& c);

/// Count of sigma_i > rel_tol * sigma_1; 0 for the all-zero spectrum.
int numerical_rank(const Spectrum& s, double rel_tol);

/// exp(-sum p_i log p_i) with p_i = sigma_i / sum(sigma); in [1, len(s)].
/// Throws on an all-zero spectrum.
double effective_rank(const Spectrum& s);

} // namespace werank::linalg
