#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "werank/linalg.hpp"

namespace werank::autodiff {

using linalg::DenseMatrix;
using linalg::SparseMatrix;

/// One node of a define-by-run graph. Values are computed eagerly when the
/// op is recorded; gradients accumulate by sum over all paths in backward().
struct Node {
    DenseMatrix value;
    DenseMatrix grad;
    bool requires_grad = true;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(const Node&)> backward_fn;

    bool is_scalar() const { return value.rows == 1 && value.cols == 1; }
    double scalar() const { return value.values[0]; }
};

using NodePtr = std::shared_ptr<Node>;

/// Records one forward computation. The graph is rebuilt per step; node
/// creation order doubles as a topological order for the reverse pass.
/// A tape is confined to one task; independent tapes may run concurrently.
class Tape {
public:
    NodePtr leaf(DenseMatrix value, bool requires_grad = true);
    NodePtr constant(DenseMatrix value) { return leaf(std::move(value), false); }

    NodePtr matmul(const NodePtr& a, const NodePtr& b);
    NodePtr sparse_matmul(std::shared_ptr<const SparseMatrix> a, const NodePtr& b);
    NodePtr add(const NodePtr& a, const NodePtr& b);
    NodePtr subtract(const NodePtr& a, const NodePtr& b);
    NodePtr add_scalar(const NodePtr& a, double c);
    NodePtr scale(const NodePtr& a, double s);
    NodePtr mul(const NodePtr& a, const NodePtr& b); // elementwise
    NodePtr relu(const NodePtr& a);
    NodePtr prelu(const NodePtr& a, const NodePtr& slope); // slope is 1x1
    NodePtr col_mean(const NodePtr& a);                    // N x M -> 1 x M
    NodePtr col_var(const NodePtr& a);                     // population (1/N)
    NodePtr row_sum(const NodePtr& a);                     // N x M -> N x 1
    NodePtr sum_all(const NodePtr& a);                     // -> 1 x 1
    NodePtr mean_all(const NodePtr& a);                    // -> 1 x 1
    NodePtr sqrt(const NodePtr& a);                        // elementwise
    NodePtr log(const NodePtr& a);                         // elementwise
    NodePtr exp(const NodePtr& a);                         // elementwise
    NodePtr row_l2_normalize(const NodePtr& a);
    NodePtr frobenius_norm(const NodePtr& a); // -> 1 x 1
    NodePtr sum_abs(const NodePtr& a);        // entrywise L1, -> 1 x 1
    NodePtr off_diagonal(const NodePtr& a);   // square; diagonal zeroed
    NodePtr transpose(const NodePtr& a);
    NodePtr concat_rows(const NodePtr& a, const NodePtr& b);
    NodePtr stop_gradient(const NodePtr& a);

    /// The cached value of the (eagerly evaluated) subgraph root.
    static const DenseMatrix& forward(const NodePtr& root);

    /// Reverse pass from a scalar root. Gradients are accumulated, not
    /// reset; call zero_grad() between passes.
    void backward(const NodePtr& root);
    void zero_grad();

    std::size_t size() const { return nodes_.size(); }

private:
    NodePtr record(DenseMatrix value, std::vector<NodePtr> parents,
                   std::function<void(const Node&)> backward_fn);

    std::vector<NodePtr> nodes_;
};

/// Epsilon guard used on all norms and square roots.
inline constexpr double kEps = 1e-12;

} // namespace werank::autodiff
