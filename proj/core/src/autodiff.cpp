#include "werank/autodiff.hpp"

#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>

namespace werank::autodiff {

namespace {

void require(bool cond, const std::string& msg) {
    if (!cond) throw std::invalid_argument(msg);
}

void accumulate(DenseMatrix& grad, const DenseMatrix& delta) {
    for (std::size_t i = 0; i < grad.values.size(); ++i) grad.values[i] += delta.values[i];
}

} // namespace

NodePtr Tape::record(DenseMatrix value, std::vector<NodePtr> parents,
                     std::function<void(const Node&)> backward_fn) {
    auto node = std::make_shared<Node>();
    node->grad = DenseMatrix::zeros(value.rows, value.cols);
    node->value = std::move(value);
    node->parents = std::move(parents);
    node->backward_fn = std::move(backward_fn);
    node->requires_grad = false;
    for (const auto& p : node->parents)
        if (p->requires_grad) node->requires_grad = true;
    nodes_.push_back(node);
    return node;
}

NodePtr Tape::leaf(DenseMatrix value, bool requires_grad) {
    auto node = std::make_shared<Node>();
    node->grad = DenseMatrix::zeros(value.rows, value.cols);
    node->value = std::move(value);
    node->requires_grad = requires_grad;
    nodes_.push_back(node);
    return node;
}

NodePtr Tape::matmul(const NodePtr& a, const NodePtr& b) {
    require(a->value.cols == b->value.rows, "matmul: inner dimensions differ");
    return record(linalg::matmul(a->value, b->value), {a, b}, [a, b](const Node& out) {
        accumulate(a->grad, linalg::matmul(out.grad, linalg::transpose(b->value)));
        accumulate(b->grad, linalg::matmul(linalg::transpose(a->value), out.grad));
    });
}

NodePtr Tape::sparse_matmul(std::shared_ptr<const SparseMatrix> a, const NodePtr& b) {
    require(a->cols == b->value.rows, "sparse_matmul: inner dimensions differ");
    return record(linalg::spmm(*a, b->value), {b}, [a, b](const Node& out) {
        // dB += A^T * G, scattered row by row.
        for (int r = 0; r < a->rows; ++r) {
            const double* grow = &out.grad.values[static_cast<std::size_t>(r) * out.grad.cols];
            for (int k = a->row_ptr[r]; k < a->row_ptr[r + 1]; ++k) {
                double* brow =
                    &b->grad.values[static_cast<std::size_t>(a->col_idx[k]) * b->grad.cols];
                const double v = a->vals[k];
                for (int j = 0; j < out.grad.cols; ++j) brow[j] += v * grow[j];
            }
        }
    });
}

NodePtr Tape::add(const NodePtr& a, const NodePtr& b) {
    require(a->value.same_shape(b->value), "add: shape mismatch");
    return record(linalg::add(a->value, b->value), {a, b}, [a, b](const Node& out) {
        accumulate(a->grad, out.grad);
        accumulate(b->grad, out.grad);
    });
}

NodePtr Tape::subtract(const NodePtr& a, const NodePtr& b) {
    require(a->value.same_shape(b->value), "subtract: shape mismatch");
    return record(linalg::subtract(a->value, b->value), {a, b}, [a, b](const Node& out) {
        accumulate(a->grad, out.grad);
        for (std::size_t i = 0; i < b->grad.values.size(); ++i)
            b->grad.values[i] -= out.grad.values[i];
    });
}

NodePtr Tape::add_scalar(const NodePtr& a, double c) {
    DenseMatrix v = a->value;
    for (double& x : v.values) x += c;
    return record(std::move(v), {a},
                  [a](const Node& out) { accumulate(a->grad, out.grad); });
}

NodePtr Tape::scale(const NodePtr& a, double s) {
    return record(linalg::scale(a->value, s), {a}, [a, s](const Node& out) {
        for (std::size_t i = 0; i < a->grad.values.size(); ++i)
            a->grad.values[i] += s * out.grad.values[i];
    });
}

NodePtr Tape::mul(const NodePtr& a, const NodePtr& b) {
    require(a->value.same_shape(b->value), "mul: shape mismatch");
    return record(linalg::hadamard(a->value, b->value), {a, b}, [a, b](const Node& out) {
        for (std::size_t i = 0; i < out.grad.values.size(); ++i) {
            a->grad.values[i] += out.grad.values[i] * b->value.values[i];
            b->grad.values[i] += out.grad.values[i] * a->value.values[i];
        }
    });
}

NodePtr Tape::relu(const NodePtr& a) {
    DenseMatrix v = a->value;
    for (double& x : v.values) x = x > 0.0 ? x : 0.0;
    return record(std::move(v), {a}, [a](const Node& out) {
        // relu'(0) = 0
        for (std::size_t i = 0; i < out.grad.values.size(); ++i)
            if (a->value.values[i] > 0.0) a->grad.values[i] += out.grad.values[i];
    });
}

NodePtr Tape::prelu(const NodePtr& a, const NodePtr& slope) {
    require(slope->value.rows == 1 && slope->value.cols == 1, "prelu: slope must be 1x1");
    const double s = slope->value.values[0];
    DenseMatrix v = a->value;
    for (double& x : v.values) x = x > 0.0 ? x : s * x;
    return record(std::move(v), {a, slope}, [a, slope, s](const Node& out) {
        double slope_grad = 0.0;
        for (std::size_t i = 0; i < out.grad.values.size(); ++i) {
            const double x = a->value.values[i];
            if (x > 0.0) {
                a->grad.values[i] += out.grad.values[i];
            } else {
                a->grad.values[i] += s * out.grad.values[i];
                slope_grad += out.grad.values[i] * x;
            }
        }
        slope->grad.values[0] += slope_grad;
    });
}

NodePtr Tape::col_mean(const NodePtr& a) {
    const int n = a->value.rows;
    const int m = a->value.cols;
    DenseMatrix v(1, m);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < m; ++j) v.at(0, j) += a->value.at(i, j);
    for (double& x : v.values) x /= static_cast<double>(n);
    return record(std::move(v), {a}, [a, n, m](const Node& out) {
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < m; ++j)
                a->grad.at(i, j) += out.grad.at(0, j) / static_cast<double>(n);
    });
}

NodePtr Tape::col_var(const NodePtr& a) {
    const int n = a->value.rows;
    const int m = a->value.cols;
    DenseMatrix mean(1, m);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < m; ++j) mean.at(0, j) += a->value.at(i, j);
    for (double& x : mean.values) x /= static_cast<double>(n);
    DenseMatrix v(1, m);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < m; ++j) {
            const double d = a->value.at(i, j) - mean.at(0, j);
            v.at(0, j) += d * d;
        }
    for (double& x : v.values) x /= static_cast<double>(n);
    return record(std::move(v), {a}, [a, mean, n, m](const Node& out) {
        // d var_j / d x_ij = 2 (x_ij - mean_j) / N
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < m; ++j)
                a->grad.at(i, j) += out.grad.at(0, j) * 2.0 *
                                    (a->value.at(i, j) - mean.at(0, j)) /
                                    static_cast<double>(n);
    });
}

NodePtr Tape::row_sum(const NodePtr& a) {
    const int n = a->value.rows;
    const int m = a->value.cols;
    DenseMatrix v(n, 1);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < m; ++j) v.at(i, 0) += a->value.at(i, j);
    return record(std::move(v), {a}, [a, n, m](const Node& out) {
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < m; ++j) a->grad.at(i, j) += out.grad.at(i, 0);
    });
}

NodePtr Tape::sum_all(const NodePtr& a) {
    DenseMatrix v(1, 1);
    for (double x : a->value.values) v.values[0] += x;
    return record(std::move(v), {a}, [a](const Node& out) {
        const double g = out.grad.values[0];
        for (double& x : a->grad.values) x += g;
    });
}

NodePtr Tape::mean_all(const NodePtr& a) {
    const double count = static_cast<double>(a->value.values.size());
    DenseMatrix v(1, 1);
    for (double x : a->value.values) v.values[0] += x;
    v.values[0] /= count;
    return record(std::move(v), {a}, [a, count](const Node& out) {
        const double g = out.grad.values[0] / count;
        for (double& x : a->grad.values) x += g;
    });
}

NodePtr Tape::sqrt(const NodePtr& a) {
    DenseMatrix v = a->value;
    for (double& x : v.values) {
        if (x < 0.0) throw std::runtime_error("sqrt: negative input");
        x = std::sqrt(x);
    }
    return record(std::move(v), {a}, [a](const Node& out) {
        for (std::size_t i = 0; i < out.grad.values.size(); ++i)
            a->grad.values[i] +=
                out.grad.values[i] * 0.5 / std::sqrt(a->value.values[i] + kEps);
    });
}

NodePtr Tape::log(const NodePtr& a) {
    DenseMatrix v = a->value;
    for (double& x : v.values) {
        if (x <= 0.0) throw std::runtime_error("log: non-positive input");
        x = std::log(x);
    }
    return record(std::move(v), {a}, [a](const Node& out) {
        for (std::size_t i = 0; i < out.grad.values.size(); ++i)
            a->grad.values[i] += out.grad.values[i] / a->value.values[i];
    });
}

NodePtr Tape::exp(const NodePtr& a) {
    DenseMatrix v = a->value;
    for (double& x : v.values) x = std::exp(x);
    return record(std::move(v), {a}, [a](const Node& out) {
        for (std::size_t i = 0; i < out.grad.values.size(); ++i)
            a->grad.values[i] += out.grad.values[i] * out.value.values[i];
    });
}

NodePtr Tape::row_l2_normalize(const NodePtr& a) {
    const int n = a->value.rows;
    const int m = a->value.cols;
    std::vector<double> norms(static_cast<std::size_t>(n));
    DenseMatrix v(n, m);
    for (int i = 0; i < n; ++i) {
        double s = 0.0;
        for (int j = 0; j < m; ++j) s += a->value.at(i, j) * a->value.at(i, j);
        const double norm = std::sqrt(s + kEps);
        norms[static_cast<std::size_t>(i)] = norm;
        for (int j = 0; j < m; ++j) v.at(i, j) = a->value.at(i, j) / norm;
    }
    return record(std::move(v), {a}, [a, norms, n, m](const Node& out) {
        for (int i = 0; i < n; ++i) {
            const double norm = norms[static_cast<std::size_t>(i)];
            double gx = 0.0;
            for (int j = 0; j < m; ++j) gx += out.grad.at(i, j) * a->value.at(i, j);
            for (int j = 0; j < m; ++j)
                a->grad.at(i, j) += out.grad.at(i, j) / norm -
                                    a->value.at(i, j) * gx / (norm * norm * norm);
        }
    });
}

NodePtr Tape::frobenius_norm(const NodePtr& a) {
    double s = 0.0;
    for (double x : a->value.values) s += x * x;
    DenseMatrix v(1, 1);
    v.values[0] = std::sqrt(s);
    return record(std::move(v), {a}, [a](const Node& out) {
        const double denom = std::max(out.value.values[0], kEps);
        const double g = out.grad.values[0] / denom;
        for (std::size_t i = 0; i < a->grad.values.size(); ++i)
            a->grad.values[i] += g * a->value.values[i];
    });
}

NodePtr Tape::sum_abs(const NodePtr& a) {
    DenseMatrix v(1, 1);
    for (double x : a->value.values) v.values[0] += std::abs(x);
    return record(std::move(v), {a}, [a](const Node& out) {
        const double g = out.grad.values[0];
        for (std::size_t i = 0; i < a->grad.values.size(); ++i) {
            const double x = a->value.values[i];
            if (x > 0.0)
                a->grad.values[i] += g;
            else if (x < 0.0)
                a->grad.values[i] -= g;
        }
    });
}

NodePtr Tape::off_diagonal(const NodePtr& a) {
    require(a->value.rows == a->value.cols, "off_diagonal: matrix must be square");
    DenseMatrix v = a->value;
    for (int i = 0; i < v.rows; ++i) v.at(i, i) = 0.0;
    return record(std::move(v), {a}, [a](const Node& out) {
        for (int i = 0; i < out.grad.rows; ++i)
            for (int j = 0; j < out.grad.cols; ++j)
                if (i != j) a->grad.at(i, j) += out.grad.at(i, j);
    });
}

NodePtr Tape::transpose(const NodePtr& a) {
    return record(linalg::transpose(a->value), {a}, [a](const Node& out) {
        accumulate(a->grad, linalg::transpose(out.grad));
    });
}

NodePtr Tape::concat_rows(const NodePtr& a, const NodePtr& b) {
    require(a->value.cols == b->value.cols, "concat_rows: column counts differ");
    DenseMatrix v(a->value.rows + b->value.rows, a->value.cols);
    std::copy(a->value.values.begin(), a->value.values.end(), v.values.begin());
    std::copy(b->value.values.begin(), b->value.values.end(),
              v.values.begin() + static_cast<std::ptrdiff_t>(a->value.values.size()));
    return record(std::move(v), {a, b}, [a, b](const Node& out) {
        const std::size_t na = a->grad.values.size();
        for (std::size_t i = 0; i < na; ++i) a->grad.values[i] += out.grad.values[i];
        for (std::size_t i = 0; i < b->grad.values.size(); ++i)
            b->grad.values[i] += out.grad.values[na + i];
    });
}

NodePtr Tape::stop_gradient(const NodePtr& a) {
    // Forward identity; contributes nothing to its operand in backward.
    return record(a->value, {a}, nullptr);
}

const DenseMatrix& Tape::forward(const NodePtr& root) { return root->value; }

void Tape::backward(const NodePtr& root) {
    if (!root->is_scalar())
        throw std::invalid_argument("backward: root must be a 1x1 scalar");
    root->grad.values[0] += 1.0;
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
        const auto& node = *it;
        if (node->backward_fn && node->requires_grad) node->backward_fn(*node);
    }
}

void Tape::zero_grad() {
    for (auto& node : nodes_)
        std::fill(node->grad.values.begin(), node->grad.values.end(), 0.0);
}

} // namespace werank::autodiff
