#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "werank/linalg.hpp"

namespace werank::data {

using linalg::DenseMatrix;

struct ToyDataConfig {
    int n_points = 1000;
    int dim = 16;
    double aug_amplitude = 0.0; // variance k of the additive view noise
    int noisy_block_size = 8;
    std::uint64_t seed = 0;
};

/// Isotropic Gaussian sample, exactly whitened so the sample covariance
/// (1/N convention) equals the identity. Same config + seed reproduces the
/// matrix bit-identically.
DenseMatrix gen_toy_dataset(const ToyDataConfig& cfg);

/// View of x with additive Gaussian noise of variance aug_amplitude on the
/// trailing noisy_block_size coordinates; the leading block is untouched.
DenseMatrix augment_toy(const DenseMatrix& x, const ToyDataConfig& cfg, std::uint64_t view_seed);

struct SplitMasks {
    std::vector<char> train, val, test;
};

struct GraphBundle {
    int n_nodes = 0;
    std::vector<std::pair<int, int>> edges; // undirected, deduplicated, no self-edges
    DenseMatrix features;                   // n_nodes x feat_dim
    std::vector<int> labels;                // class ids in [0, n_classes)
    int n_classes = 0;
    std::optional<SplitMasks> masks;
    int dropped_self_edges = 0; // load-time warning count

    bool operator==(const GraphBundle& o) const {
        return n_nodes == o.n_nodes && edges == o.edges && features == o.features &&
               labels == o.labels && n_classes == o.n_classes;
    }
};

/// Distortion factors per view, with the global multiplier and the cap rule
/// applied when resolving effective probabilities (always clamped to [0,1]).
struct AugmentConfig {
    double p_f1 = 0.0, p_f2 = 0.0;
    double p_e1 = 0.0, p_e2 = 0.0;
    double multiplier = 1.0;
    bool cap_at_one = true;

    double effective(double p) const;
};

class BundleError : public std::runtime_error {
public:
    enum class Kind { missing_file, bad_index, row_count_mismatch, parse_error };

    BundleError(Kind kind, const std::string& msg) : std::runtime_error(msg), kind_(kind) {}
    Kind kind() const { return kind_; }

private:
    Kind kind_;
};

/// Directory format: meta.json {n_nodes, feat_dim, n_classes,
/// feature_encoding}; edges.csv "src,dst" per line; features.csv or
/// features.bin (raw little-endian float32, row-major, N*D values);
/// labels.csv one integer per line; optional masks.csv "train,val,test".
GraphBundle load_graph_bundle(const std::string& dir);
void save_graph_bundle(const std::string& dir, const GraphBundle& bundle,
                       const std::string& feature_encoding = "bin");

/// Stochastic block model with one-hot block signal + unit Gaussian noise
/// features; labels are block ids. Requires p_in > p_out.
GraphBundle gen_synthetic_graph(int n_nodes, int n_blocks, double p_in, double p_out,
                                int feat_dim, std::uint64_t seed);

/// Independent edge dropout (keep probability 1 - p_e) and feature-column
/// masking: one dimension mask drawn per view, masked columns zeroed for
/// every node. Node set and labels are unchanged.
GraphBundle augment_graph(const GraphBundle& g, double p_f, double p_e, std::uint64_t seed);

} // namespace werank::data
