#include "werank/models.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>
#include <string>

#include "werank/rng.hpp"

namespace werank::models {

namespace {

void require(bool cond, const std::string& msg) {
    if (!cond) throw std::invalid_argument(msg);
}

} // namespace

void NetworkSpec::validate() const {
    require(!layers.empty(), "NetworkSpec: no layers");
    for (std::size_t l = 0; l < layers.size(); ++l) {
        require(layers[l].d_in > 0 && layers[l].d_out > 0, "NetworkSpec: non-positive dimension");
        if (l + 1 < layers.size())
            require(layers[l].d_out == layers[l + 1].d_in,
                    "NetworkSpec: dimension chain broken at layer " + std::to_string(l));
    }
}

NetworkSpec NetworkSpec::linear_chain(const std::vector<int>& dims) {
    NetworkSpec spec;
    for (std::size_t i = 0; i + 1 < dims.size(); ++i)
        spec.layers.push_back({LayerKind::linear, dims[i], dims[i + 1], false, false, false});
    return spec;
}

std::vector<DenseMatrix*> WeightStack::parameters() {
    std::vector<DenseMatrix*> out;
    for (auto& layer : layers) {
        out.push_back(&layer.w);
        if (!layer.bias.empty()) out.push_back(&layer.bias);
        if (!layer.prelu_slope.empty()) out.push_back(&layer.prelu_slope);
    }
    return out;
}

std::vector<const DenseMatrix*> WeightStack::parameters() const {
    std::vector<const DenseMatrix*> out;
    for (const auto& layer : layers) {
        out.push_back(&layer.w);
        if (!layer.bias.empty()) out.push_back(&layer.bias);
        if (!layer.prelu_slope.empty()) out.push_back(&layer.prelu_slope);
    }
    return out;
}

std::vector<DenseMatrix> WeightStack::weight_matrices() const {
    std::vector<DenseMatrix> out;
    out.reserve(layers.size());
    for (const auto& layer : layers) out.push_back(layer.w);
    return out;
}

EmaPair EmaPair::from_online(WeightStack online, double decay) {
    EmaPair pair;
    pair.target = online;
    pair.online = std::move(online);
    pair.decay = decay;
    return pair;
}

WeightStack init_weights(const NetworkSpec& spec, std::uint64_t seed) {
    spec.validate();
    Rng rng(seed);
    WeightStack stack;
    for (std::size_t l = 0; l < spec.layers.size(); ++l) {
        const auto& ls = spec.layers[l];
        LayerWeights weights;
        weights.w = DenseMatrix(ls.d_in, ls.d_out);
        const double std = 1.0 / std::sqrt(static_cast<double>(ls.d_in));
        for (double& v : weights.w.values) v = std * rng.normal();
        if (ls.bias) weights.bias = DenseMatrix::zeros(1, ls.d_out);
        const bool has_activation = spec.activation == Activation::prelu && l + 1 < spec.layers.size();
        if (has_activation) {
            weights.prelu_slope = DenseMatrix(1, 1);
            weights.prelu_slope.values[0] = spec.prelu_init_slope;
        }
        stack.layers.push_back(std::move(weights));
    }
    return stack;
}

void ema_update(EmaPair& pair) {
    require(pair.decay >= 0.0 && pair.decay <= 1.0, "ema_update: decay must be in [0,1]");
    require(pair.online.layers.size() == pair.target.layers.size(),
            "ema_update: stack depth mismatch");
    auto online = pair.online.parameters();
    auto target = pair.target.parameters();
    require(online.size() == target.size(), "ema_update: parameter count mismatch");
    const double tau = pair.decay;
    for (std::size_t i = 0; i < online.size(); ++i) {
        require(online[i]->same_shape(*target[i]), "ema_update: parameter shape mismatch");
        for (std::size_t k = 0; k < target[i]->values.size(); ++k)
            target[i]->values[k] = tau * target[i]->values[k] + (1.0 - tau) * online[i]->values[k];
    }
}

std::vector<NodePtr> BoundStack::all_nodes() const {
    std::vector<NodePtr> out;
    for (std::size_t l = 0; l < w.size(); ++l) {
        out.push_back(w[l]);
        if (bias[l]) out.push_back(bias[l]);
        if (slope[l]) out.push_back(slope[l]);
    }
    return out;
}

BoundStack bind_stack(Tape& tape, const WeightStack& stack) {
    BoundStack bound;
    for (const auto& layer : stack.layers) {
        bound.w.push_back(tape.leaf(layer.w));
        bound.bias.push_back(layer.bias.empty() ? nullptr : tape.leaf(layer.bias));
        bound.slope.push_back(layer.prelu_slope.empty() ? nullptr : tape.leaf(layer.prelu_slope));
    }
    return bound;
}

namespace {

NodePtr broadcast_row(Tape& tape, const NodePtr& row, int n) {
    DenseMatrix ones(n, 1);
    for (double& v : ones.values) v = 1.0;
    return tape.matmul(tape.constant(std::move(ones)), row);
}

// (x - colmean) / sqrt(colvar + eps); the inverse square root is composed
// as exp(-0.5 log(.)) so no extra primitive op is needed.
NodePtr batch_norm(Tape& tape, const NodePtr& x) {
    const int n = x->value.rows;
    auto centered = tape.subtract(x, broadcast_row(tape, tape.col_mean(x), n));
    auto inv_std =
        tape.exp(tape.scale(tape.log(tape.add_scalar(tape.col_var(x), kNormEps)), -0.5));
    return tape.mul(centered, broadcast_row(tape, inv_std, n));
}

NodePtr layer_norm(Tape& tape, const NodePtr& x) {
    return tape.transpose(batch_norm(tape, tape.transpose(x)));
}

std::vector<NodePtr> forward_impl(Tape& tape, const BoundStack& stack, const NetworkSpec& spec,
                                  const std::shared_ptr<const SparseMatrix>& adj, const NodePtr& x) {
    spec.validate();
    require(stack.w.size() == spec.layers.size(), "forward: stack depth differs from spec");
    require(x->value.cols == spec.input_dim(), "forward: input width differs from spec");

    std::vector<NodePtr> outputs;
    NodePtr h = x;
    for (std::size_t l = 0; l < spec.layers.size(); ++l) {
        const auto& ls = spec.layers[l];
        NodePtr pre = h;
        if (ls.kind == LayerKind::gcn) {
            require(adj != nullptr, "forward: gcn layer needs an adjacency");
            pre = tape.sparse_matmul(adj, pre);
        }
        NodePtr z = tape.matmul(pre, stack.w[l]);
        if (stack.bias[l]) z = tape.add(z, broadcast_row(tape, stack.bias[l], z->value.rows));

        if (l + 1 < spec.layers.size()) {
            if (ls.batch_norm) z = batch_norm(tape, z);
            if (ls.layer_norm) z = layer_norm(tape, z);
            switch (spec.activation) {
                case Activation::none: break;
                case Activation::relu: z = tape.relu(z); break;
                case Activation::prelu:
                    require(stack.slope[l] != nullptr, "forward: missing prelu slope");
                    z = tape.prelu(z, stack.slope[l]);
                    break;
            }
        }
        outputs.push_back(z);
        h = z;
    }
    return outputs;
}

} // namespace

std::vector<NodePtr> mlp_forward(Tape& tape, const BoundStack& stack, const NetworkSpec& spec,
                                 const NodePtr& x) {
    return forward_impl(tape, stack, spec, nullptr, x);
}

std::vector<NodePtr> gcn_forward(Tape& tape, const BoundStack& stack, const NetworkSpec& spec,
                                 std::shared_ptr<const SparseMatrix> adj_norm, const NodePtr& x) {
    require(adj_norm && adj_norm->rows == adj_norm->cols, "gcn_forward: adjacency must be square");
    require(adj_norm->rows == x->value.rows, "gcn_forward: adjacency size differs from node count");
    return forward_impl(tape, stack, spec, adj_norm, x);
}

SparseMatrix normalize_adjacency(const std::vector<std::pair<int, int>>& edges, int n_nodes,
                                 bool add_self_loops) {
    require(n_nodes > 0, "normalize_adjacency: empty graph");
    std::vector<std::set<int>> nbrs(static_cast<std::size_t>(n_nodes));
    for (const auto& [a, b] : edges) {
        require(a >= 0 && a < n_nodes && b >= 0 && b < n_nodes,
                "normalize_adjacency: node index out of range");
        if (a == b) continue;
        nbrs[static_cast<std::size_t>(a)].insert(b);
        nbrs[static_cast<std::size_t>(b)].insert(a);
    }
    std::vector<double> degree(static_cast<std::size_t>(n_nodes));
    for (int i = 0; i < n_nodes; ++i) {
        if (add_self_loops) nbrs[static_cast<std::size_t>(i)].insert(i);
        degree[static_cast<std::size_t>(i)] = static_cast<double>(nbrs[static_cast<std::size_t>(i)].size());
        if (degree[static_cast<std::size_t>(i)] == 0.0)
            throw std::invalid_argument("normalize_adjacency: isolated node " + std::to_string(i) +
                                        " has degree zero without self-loops");
    }

    SparseMatrix out;
    out.rows = n_nodes;
    out.cols = n_nodes;
    out.row_ptr.assign(static_cast<std::size_t>(n_nodes) + 1, 0);
    for (int i = 0; i < n_nodes; ++i)
        out.row_ptr[static_cast<std::size_t>(i) + 1] =
            out.row_ptr[static_cast<std::size_t>(i)] +
            static_cast<int>(nbrs[static_cast<std::size_t>(i)].size());
    out.col_idx.reserve(static_cast<std::size_t>(out.row_ptr.back()));
    out.vals.reserve(static_cast<std::size_t>(out.row_ptr.back()));
    for (int i = 0; i < n_nodes; ++i) {
        for (int j : nbrs[static_cast<std::size_t>(i)]) {
            out.col_idx.push_back(j);
            out.vals.push_back(1.0 / std::sqrt(degree[static_cast<std::size_t>(i)] *
                                               degree[static_cast<std::size_t>(j)]));
        }
    }
    return out;
}

} // namespace werank::models
