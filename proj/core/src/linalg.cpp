#include "werank/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace werank::linalg {

namespace {

constexpr int kMaxJacobiSweeps = 100;
constexpr double kJacobiTol = 1e-12;

void require(bool cond, const std::string& msg) {
    if (!cond) throw std::invalid_argument(msg);
}

} // namespace

DenseMatrix DenseMatrix::identity(int n) {
    DenseMatrix m(n, n);
    for (int i = 0; i < n; ++i) m.at(i, i) = 1.0;
    return m;
}

DenseMatrix DenseMatrix::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    DenseMatrix m(static_cast<int>(rows.size()),
                  rows.size() ? static_cast<int>(rows.begin()->size()) : 0);
    int r = 0;
    for (const auto& row : rows) {
        require(static_cast<int>(row.size()) == m.cols, "from_rows: ragged rows");
        int c = 0;
        for (double v : row) m.at(r, c++) = v;
        ++r;
    }
    return m;
}

bool DenseMatrix::all_finite() const {
    return std::all_of(values.begin(), values.end(),
                       [](double v) { return std::isfinite(v); });
}

DenseMatrix SparseMatrix::to_dense() const {
    DenseMatrix d(rows, cols);
    for (int r = 0; r < rows; ++r)
        for (int k = row_ptr[r]; k < row_ptr[r + 1]; ++k)
            d.at(r, col_idx[k]) = vals[k];
    return d;
}

double Spectrum::mean_sigma() const {
    if (sigmas.empty()) return 0.0;
    return std::accumulate(sigmas.begin(), sigmas.end(), 0.0) / static_cast<double>(sigmas.size());
}

DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b) {
    require(a.cols == b.rows, "matmul: inner dimensions differ (" + std::to_string(a.cols) +
                                  " vs " + std::to_string(b.rows) + ")");
    DenseMatrix c(a.rows, b.cols);
    // i-k-j order keeps the inner loop contiguous in both b and c.
    for (int i = 0; i < a.rows; ++i) {
        const double* arow = &a.values[static_cast<std::size_t>(i) * a.cols];
        double* crow = &c.values[static_cast<std::size_t>(i) * c.cols];
        for (int k = 0; k < a.cols; ++k) {
            const double aik = arow[k];
            if (aik == 0.0) continue;
            const double* brow = &b.values[static_cast<std::size_t>(k) * b.cols];
            for (int j = 0; j < b.cols; ++j) crow[j] += aik * brow[j];
        }
    }
    return c;
}

DenseMatrix transpose(const DenseMatrix& a) {
    DenseMatrix t(a.cols, a.rows);
    for (int i = 0; i < a.rows; ++i)
        for (int j = 0; j < a.cols; ++j) t.at(j, i) = a.at(i, j);
    return t;
}

DenseMatrix add(const DenseMatrix& a, const DenseMatrix& b) {
    require(a.same_shape(b), "add: shape mismatch");
    DenseMatrix c = a;
    for (std::size_t i = 0; i < c.values.size(); ++i) c.values[i] += b.values[i];
    return c;
}

DenseMatrix subtract(const DenseMatrix& a, const DenseMatrix& b) {
    require(a.same_shape(b), "subtract: shape mismatch");
    DenseMatrix c = a;
    for (std::size_t i = 0; i < c.values.size(); ++i) c.values[i] -= b.values[i];
    return c;
}

DenseMatrix scale(const DenseMatrix& a, double s) {
    DenseMatrix c = a;
    for (double& v : c.values) v *= s;
    return c;
}

DenseMatrix hadamard(const DenseMatrix& a, const DenseMatrix& b) {
    require(a.same_shape(b), "hadamard: shape mismatch");
    DenseMatrix c = a;
    for (std::size_t i = 0; i < c.values.size(); ++i) c.values[i] *= b.values[i];
    return c;
}

DenseMatrix spmm(const SparseMatrix& a, const DenseMatrix& b) {
    require(a.cols == b.rows, "spmm: inner dimensions differ");
    DenseMatrix c(a.rows, b.cols);
    for (int r = 0; r < a.rows; ++r) {
        double* crow = &c.values[static_cast<std::size_t>(r) * c.cols];
        for (int k = a.row_ptr[r]; k < a.row_ptr[r + 1]; ++k) {
            const double v = a.vals[k];
            const double* brow = &b.values[static_cast<std::size_t>(a.col_idx[k]) * b.cols];
            for (int j = 0; j < b.cols; ++j) crow[j] += v * brow[j];
        }
    }
    return c;
}

double frobenius_norm(const DenseMatrix& a) {
    double s = 0.0;
    for (double v : a.values) s += v * v;
    return std::sqrt(s);
}

double max_abs_diff(const DenseMatrix& a, const DenseMatrix& b) {
    require(a.same_shape(b), "max_abs_diff: shape mismatch");
    double m = 0.0;
    for (std::size_t i = 0; i < a.values.size(); ++i)
        m = std::max(m, std::abs(a.values[i] - b.values[i]));
    return m;
}

namespace {

// One-sided Jacobi on the columns of b (m x n, m >= n): rotates column pairs
// until all are mutually orthogonal, accumulating the rotations into v.
// Afterwards sigma_j = ||b_j|| and u_j = b_j / sigma_j.
void one_sided_jacobi(DenseMatrix& b, DenseMatrix& v) {
    const int m = b.rows;
    const int n = b.cols;
    auto col_dot = [&](int p, int q) {
        double s = 0.0;
        for (int i = 0; i < m; ++i) s += b.at(i, p) * b.at(i, q);
        return s;
    };

    for (int sweep = 0; sweep < kMaxJacobiSweeps; ++sweep) {
        bool rotated = false;
        for (int p = 0; p < n - 1; ++p) {
            for (int q = p + 1; q < n; ++q) {
                const double alpha = col_dot(p, p);
                const double beta = col_dot(q, q);
                const double gamma = col_dot(p, q);
                if (alpha == 0.0 || beta == 0.0) continue;
                if (std::abs(gamma) <= kJacobiTol * std::sqrt(alpha * beta)) continue;
                rotated = true;

                const double zeta = (beta - alpha) / (2.0 * gamma);
                const double t = std::copysign(1.0, zeta) /
                                 (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = c * t;
                for (int i = 0; i < m; ++i) {
                    const double bp = b.at(i, p);
                    const double bq = b.at(i, q);
                    b.at(i, p) = c * bp - s * bq;
                    b.at(i, q) = s * bp + c * bq;
                }
                for (int i = 0; i < n; ++i) {
                    const double vp = v.at(i, p);
                    const double vq = v.at(i, q);
                    v.at(i, p) = c * vp - s * vq;
                    v.at(i, q) = s * vp + c * vq;
                }
            }
        }
        if (!rotated) return;
    }

    // Non-convergence diagnostic: report the worst remaining column correlation.
    double worst = 0.0;
    for (int p = 0; p < n - 1; ++p)
        for (int q = p + 1; q < n; ++q) {
            const double d = std::sqrt(col_dot(p, p) * col_dot(q, q));
            if (d > 0.0) worst = std::max(worst, std::abs(col_dot(p, q)) / d);
        }
    throw std::runtime_error("svd: Jacobi did not converge in " +
                             std::to_string(kMaxJacobiSweeps) +
                             " sweeps (worst residual column correlation " +
                             std::to_string(worst) + ")");
}

// Completes zero-norm columns of u to an orthonormal basis via Gram-Schmidt
// against the already-filled columns, drawing candidates from the standard basis.
void complete_orthonormal_columns(DenseMatrix& u, const std::vector<int>& missing) {
    const int m = u.rows;
    const int n = u.cols;
    for (int col : missing) {
        for (int cand = 0; cand < m; ++cand) {
            std::vector<double> e(static_cast<std::size_t>(m), 0.0);
            e[cand] = 1.0;
            for (int j = 0; j < n; ++j) {
                if (j == col) continue;
                double dot = 0.0;
                for (int i = 0; i < m; ++i) dot += e[i] * u.at(i, j);
                for (int i = 0; i < m; ++i) e[i] -= dot * u.at(i, j);
            }
            double norm = 0.0;
            for (double x : e) norm += x * x;
            norm = std::sqrt(norm);
            if (norm > 1e-8) {
                for (int i = 0; i < m; ++i) u.at(i, col) = e[i] / norm;
                break;
            }
        }
    }
}

SvdResult svd_tall(const DenseMatrix& a) {
    const int m = a.rows;
    const int n = a.cols;
    DenseMatrix b = a;
    DenseMatrix v = DenseMatrix::identity(n);
    one_sided_jacobi(b, v);

    std::vector<int> order(static_cast<std::size_t>(n));
    std::vector<double> norms(static_cast<std::size_t>(n));
    for (int j = 0; j < n; ++j) {
        double s = 0.0;
        for (int i = 0; i < m; ++i) s += b.at(i, j) * b.at(i, j);
        norms[static_cast<std::size_t>(j)] = std::sqrt(s);
        order[static_cast<std::size_t>(j)] = j;
    }
    std::stable_sort(order.begin(), order.end(),
                     [&](int x, int y) { return norms[static_cast<std::size_t>(x)] > norms[static_cast<std::size_t>(y)]; });

    SvdResult out;
    out.sigma.sigmas.resize(static_cast<std::size_t>(n));
    out.u = DenseMatrix(m, n);
    out.vt = DenseMatrix(n, n);
    const double sigma_max = norms[static_cast<std::size_t>(order[0])];
    std::vector<int> zero_cols;
    for (int j = 0; j < n; ++j) {
        const int src = order[static_cast<std::size_t>(j)];
        const double s = norms[static_cast<std::size_t>(src)];
        out.sigma.sigmas[static_cast<std::size_t>(j)] = s;
        for (int i = 0; i < n; ++i) out.vt.at(j, i) = v.at(i, src);
        if (s > sigma_max * 1e-300 && s > 0.0) {
            for (int i = 0; i < m; ++i) out.u.at(i, j) = b.at(i, src) / s;
        } else {
            zero_cols.push_back(j);
        }
    }
    if (!zero_cols.empty()) complete_orthonormal_columns(out.u, zero_cols);
    return out;
}

} // namespace

SvdResult svd(const DenseMatrix& a) {
    require(a.rows > 0 && a.cols > 0, "svd: empty matrix");
    require(a.all_finite(), "svd: non-finite entries");
    if (a.rows >= a.cols) return svd_tall(a);
    // a = (u s vt)^T of the transpose: swap the factors.
    SvdResult t = svd_tall(transpose(a));
    SvdResult out;
    out.sigma = t.sigma;
    out.u = transpose(t.vt);
    out.vt = transpose(t.u);
    return out;
}

Spectrum singular_values(const DenseMatrix& a) {
    return svd(a).sigma;
}

SymEigResult sym_eig(const DenseMatrix& a) {
    require(a.rows == a.cols, "sym_eig: matrix must be square");
    require(a.all_finite(), "sym_eig: non-finite entries");
    const int n = a.rows;
    DenseMatrix d = a;
    DenseMatrix v = DenseMatrix::identity(n);

    auto off_norm = [&]() {
        double s = 0.0;
        for (int i = 0; i < n; ++i)
            for (int j = i + 1; j < n; ++j) s += d.at(i, j) * d.at(i, j);
        return std::sqrt(2.0 * s);
    };
    const double total = frobenius_norm(d);

    for (int sweep = 0; sweep < kMaxJacobiSweeps; ++sweep) {
        if (off_norm() <= kJacobiTol * std::max(total, 1.0)) break;
        for (int p = 0; p < n - 1; ++p) {
            for (int q = p + 1; q < n; ++q) {
                const double apq = d.at(p, q);
                if (apq == 0.0) continue;
                const double app = d.at(p, p);
                const double aqq = d.at(q, q);
                const double theta = (aqq - app) / (2.0 * apq);
                const double t = std::copysign(1.0, theta) /
                                 (std::abs(theta) + std::sqrt(1.0 + theta * theta));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = c * t;
                for (int i = 0; i < n; ++i) {
                    const double dip = d.at(i, p);
                    const double diq = d.at(i, q);
                    d.at(i, p) = c * dip - s * diq;
                    d.at(i, q) = s * dip + c * diq;
                }
                for (int i = 0; i < n; ++i) {
                    const double dpi = d.at(p, i);
                    const double dqi = d.at(q, i);
                    d.at(p, i) = c * dpi - s * dqi;
                    d.at(q, i) = s * dpi + c * dqi;
                }
                for (int i = 0; i < n; ++i) {
                    const double vip = v.at(i, p);
                    const double viq = v.at(i, q);
                    v.at(i, p) = c * vip - s * viq;
                    v.at(i, q) = s * vip + c * viq;
                }
            }
        }
    }

    std::vector<int> order(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
    std::stable_sort(order.begin(), order.end(),
                     [&](int x, int y) { return d.at(x, x) > d.at(y, y); });

    SymEigResult out;
    out.eigvals.resize(static_cast<std::size_t>(n));
    out.eigvecs = DenseMatrix(n, n);
    for (int j = 0; j < n; ++j) {
        const int src = order[static_cast<std::size_t>(j)];
        out.eigvals[static_cast<std::size_t>(j)] = d.at(src, src);
        for (int i = 0; i < n; ++i) out.eigvecs.at(i, j) = v.at(i, src);
    }
    return out;
}

CovarianceSummary covariance(const DenseMatrix& z) {
    require(z.rows >= 1, "covariance: need at least one sample row");
    const int n = z.rows;
    const int m = z.cols;

    CovarianceSummary out;
    out.sample_count = n;
    out.mean.assign(static_cast<std::size_t>(m), 0.0);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < m; ++j) out.mean[static_cast<std::size_t>(j)] += z.at(i, j);
    for (double& v : out.mean) v /= static_cast<double>(n);

    // C = (1/N) * Zc^T Zc, dividing by N (not N-1).
    out.cov = DenseMatrix(m, m);
    for (int i = 0; i < n; ++i) {
        for (int a = 0; a < m; ++a) {
            const double da = z.at(i, a) - out.mean[static_cast<std::size_t>(a)];
            if (da == 0.0) continue;
            for (int b = a; b < m; ++b) {
                out.cov.at(a, b) += da * (z.at(i, b) - out.mean[static_cast<std::size_t>(b)]);
            }
        }
    }
    for (int a = 0; a < m; ++a)
        for (int b = a; b < m; ++b) {
            const double v = out.cov.at(a, b) / static_cast<double>(n);
            out.cov.at(a, b) = v;
            out.cov.at(b, a) = v;
        }

    out.eigvals = sym_eig(out.cov).eigvals;
    return out;
}

double frob_dist_to_identity(const DenseMatrix& c) {
    require(c.rows == c.cols, "frob_dist_to_identity: matrix must be square");
    double s = 0.0;
    for (int i = 0; i < c.rows; ++i)
        for (int j = 0; j < c.cols; ++j) {
            const double d = c.at(i, j) - (i == j ? 1.0 : 0.0);
            s += d * d;
        }
    return std::sqrt(s);
}

int numerical_rank(const Spectrum& s, double rel_tol) {
    require(rel_tol > 0.0 && rel_tol < 1.0, "numerical_rank: rel_tol must be in (0,1)");
    if (s.sigmas.empty() || s.sigmas.front() <= 0.0) return 0;
    const double cut = rel_tol * s.sigmas.front();
    int count = 0;
    for (double v : s.sigmas)
        if (v > cut) ++count;
    return count;
}

double effective_rank(const Spectrum& s) {
    double total = 0.0;
    for (double v : s.sigmas) total += v;
    if (total <= 0.0) throw std::invalid_argument("effective_rank: all-zero spectrum");
    double entropy = 0.0;
    for (double v : s.sigmas) {
        if (v <= 0.0) continue;
        const double p = v / total;
        entropy -= p * std::log(p);
    }
    return std::exp(entropy);
}

} // namespace werank::linalg
