#pragma once

#include <vector>

#include "werank/autodiff.hpp"

namespace werank::losses {

using autodiff::NodePtr;
using autodiff::Tape;
using linalg::DenseMatrix;

enum class WERankVariant { frobenius, entrywise_l1 };

/// Per-layer weight regularizer configuration. Layers excluded by
/// apply_mask (or with zero alpha) contribute nothing.
struct WERankConfig {
    std::vector<double> alphas;
    WERankVariant variant = WERankVariant::frobenius;
    bool normalize_by_d2 = true;
    std::vector<bool> apply_mask; // empty means "all layers included"

    bool layer_active(std::size_t l) const {
        return alphas[l] > 0.0 && (apply_mask.empty() || apply_mask[l]);
    }
    bool any_active(std::size_t n_layers) const {
        for (std::size_t l = 0; l < n_layers; ++l)
            if (layer_active(l)) return true;
        return false;
    }
};

struct VicregConfig {
    double inv_coeff = 10.0;
    double var_coeff = 10.0;
    double cov_coeff = 1.0;
    double gamma = 1.0; // target per-dimension standard deviation
};

struct InfoNceConfig {
    double temperature = 0.5; // default; not externally specified
};

/// Constant inside the variance-term square root: std = sqrt(var + 1e-4).
inline constexpr double kVicregVarEps = 1e-4;

/// Sum over layers of alpha_l * ||G_l - I||, where G_l is the gram of the
/// smaller side of W_l (W^T W when d_in >= d_out, else W W^T). The norm is
/// Frobenius or entrywise L1 per the variant; optionally divided by
/// max(d_in, d_out)^2.
NodePtr werank(Tape& tape, const std::vector<NodePtr>& layer_weights, const WERankConfig& cfg);

/// Value-only evaluation on plain matrices (used by the complexity bench).
double werank_value(const std::vector<DenseMatrix>& weights, const WERankConfig& cfg);

NodePtr vicreg_loss(Tape& tape, const NodePtr& z1, const NodePtr& z2, const VicregConfig& cfg);

/// Symmetric contrastive loss: rows are L2-normalized; each of the 2N
/// anchors sees a softmax at the given temperature over its cosine
/// similarities to all non-self candidates, with the paired row positive.
NodePtr infonce_loss(Tape& tape, const NodePtr& z1, const NodePtr& z2, const InfoNceConfig& cfg);

/// 0.5 * (mean_i(2 - 2 cos(p1_i, t2_i)) + mean_i(2 - 2 cos(p2_i, t1_i))).
/// Callers wrap the target branches in stop_gradient.
NodePtr byol_loss(Tape& tape, const NodePtr& p1, const NodePtr& t2, const NodePtr& p2,
                  const NodePtr& t1);

/// ssl + werank(weights). With no active layer the ssl node is returned
/// unchanged, so an all-zero coefficient run is the same graph as one
/// built without the regularizer.
NodePtr total_loss(Tape& tape, const NodePtr& ssl, const std::vector<NodePtr>& layer_weights,
                   const WERankConfig& cfg);

} // namespace werank::losses
