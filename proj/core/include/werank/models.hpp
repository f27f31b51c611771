#pragma once

#include <cstdint>
#include <memory>
#include <utility>
#include <vector>

#include "werank/autodiff.hpp"

namespace werank::models {

using autodiff::NodePtr;
using autodiff::Tape;
using linalg::DenseMatrix;
using linalg::SparseMatrix;

enum class LayerKind { linear, gcn };
enum class Activation { none, relu, prelu };

struct LayerSpec {
    LayerKind kind = LayerKind::linear;
    int d_in = 0;
    int d_out = 0;
    bool bias = false;
    bool batch_norm = false; // full-batch column statistics, affine-free
    bool layer_norm = false; // per-row statistics, affine-free
};

/// Ordered layer descriptions. The activation sits between layers (never
/// after the last one); norms, when enabled, run before the activation.
struct NetworkSpec {
    std::vector<LayerSpec> layers;
    Activation activation = Activation::none;
    double prelu_init_slope = 0.25;

    int input_dim() const { return layers.empty() ? 0 : layers.front().d_in; }
    int embedding_dim() const { return layers.empty() ? 0 : layers.back().d_out; }
    void validate() const;

    static NetworkSpec linear_chain(const std::vector<int>& dims); // no bias, no activation
};

/// Trainable parameters of one layer; empty matrices mean "absent".
struct LayerWeights {
    DenseMatrix w;           // d_in x d_out
    DenseMatrix bias;        // 1 x d_out when present
    DenseMatrix prelu_slope; // 1 x 1 when present
};

struct WeightStack {
    std::vector<LayerWeights> layers;

    std::vector<DenseMatrix*> parameters();
    std::vector<const DenseMatrix*> parameters() const;
    std::vector<DenseMatrix> weight_matrices() const; // the W_l only
};

/// Online/target pairing for EMA training; the target copy is never
/// gradient-trained.
struct EmaPair {
    WeightStack online;
    WeightStack target;
    double decay = 0.995;

    static EmaPair from_online(WeightStack online, double decay);
};

/// Entrywise Gaussian init with std 1/sqrt(d_in); biases zero; PReLU
/// slopes at the spec's initial value. Same seed gives a bit-identical stack.
WeightStack init_weights(const NetworkSpec& spec, std::uint64_t seed);

/// target <- decay * target + (1 - decay) * online, elementwise over all
/// trainable matrices.
void ema_update(EmaPair& pair);

/// Graph-bound view of a stack: every parameter becomes a leaf node.
struct BoundStack {
    std::vector<NodePtr> w;
    std::vector<NodePtr> bias;  // null when absent
    std::vector<NodePtr> slope; // null when absent

    std::vector<NodePtr> weight_nodes() const { return w; }
    std::vector<NodePtr> all_nodes() const;
};

BoundStack bind_stack(Tape& tape, const WeightStack& stack);

/// Forward pass returning every intermediate layer output (so spectra can
/// be traced per layer); the final element is the embedding.
std::vector<NodePtr> mlp_forward(Tape& tape, const BoundStack& stack, const NetworkSpec& spec,
                                 const NodePtr& x);

/// GCN forward: each gcn layer computes activation(adj_norm * H * W).
std::vector<NodePtr> gcn_forward(Tape& tape, const BoundStack& stack, const NetworkSpec& spec,
                                 std::shared_ptr<const SparseMatrix> adj_norm, const NodePtr& x);

/// Symmetrically normalized adjacency D^{-1/2} (A + I) D^{-1/2} (self-loop
/// degrees). With add_self_loops = false an isolated node is an error.
SparseMatrix normalize_adjacency(const std::vector<std::pair<int, int>>& edges, int n_nodes,
                                 bool add_self_loops);

/// Epsilon inside the norm denominators: 1 / sqrt(var + 1e-5).
inline constexpr double kNormEps = 1e-5;

} // namespace werank::models
