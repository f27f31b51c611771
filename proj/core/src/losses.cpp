#include "werank/losses.hpp"

#include <stdexcept>
#include <string>

namespace werank::losses {

namespace {

void require(bool cond, const std::string& msg) {
    if (!cond) throw std::invalid_argument(msg);
}

NodePtr broadcast_row(Tape& tape, const NodePtr& row, int n) {
    DenseMatrix ones(n, 1);
    for (double& v : ones.values) v = 1.0;
    return tape.matmul(tape.constant(std::move(ones)), row);
}

// gram of the smaller side: W^T W when d_in >= d_out, else W W^T
NodePtr small_side_gram(Tape& tape, const NodePtr& w) {
    const int d_in = w->value.rows;
    const int d_out = w->value.cols;
    if (d_in >= d_out) return tape.matmul(tape.transpose(w), w);
    return tape.matmul(w, tape.transpose(w));
}

} // namespace

NodePtr werank(Tape& tape, const std::vector<NodePtr>& layer_weights, const WERankConfig& cfg) {
    require(cfg.alphas.size() == layer_weights.size(),
            "werank: alphas length (" + std::to_string(cfg.alphas.size()) +
                ") does not match layer count (" + std::to_string(layer_weights.size()) + ")");
    require(cfg.apply_mask.empty() || cfg.apply_mask.size() == layer_weights.size(),
            "werank: apply_mask length does not match layer count");

    NodePtr total;
    for (std::size_t l = 0; l < layer_weights.size(); ++l) {
        if (!cfg.layer_active(l)) continue;
        const auto& w = layer_weights[l];
        const int d_in = w->value.rows;
        const int d_out = w->value.cols;
        const int m = std::min(d_in, d_out);
        const int d = std::max(d_in, d_out);

        auto diff = tape.subtract(small_side_gram(tape, w),
                                  tape.constant(DenseMatrix::identity(m)));
        auto term = cfg.variant == WERankVariant::frobenius ? tape.frobenius_norm(diff)
                                                            : tape.sum_abs(diff);
        double coeff = cfg.alphas[l];
        if (cfg.normalize_by_d2) coeff /= static_cast<double>(d) * static_cast<double>(d);
        auto scaled = tape.scale(term, coeff);
        total = total ? tape.add(total, scaled) : scaled;
    }
    if (!total) total = tape.constant(DenseMatrix::zeros(1, 1));
    return total;
}

double werank_value(const std::vector<DenseMatrix>& weights, const WERankConfig& cfg) {
    Tape tape;
    std::vector<NodePtr> nodes;
    nodes.reserve(weights.size());
    for (const auto& w : weights) nodes.push_back(tape.leaf(w, false));
    return werank(tape, nodes, cfg)->scalar();
}

NodePtr vicreg_loss(Tape& tape, const NodePtr& z1, const NodePtr& z2, const VicregConfig& cfg) {
    require(z1->value.same_shape(z2->value), "vicreg_loss: view shapes differ");
    const int n = z1->value.rows;
    const int m = z1->value.cols;
    require(n >= 2, "vicreg_loss: need at least two samples");
    require(cfg.inv_coeff >= 0 && cfg.var_coeff >= 0 && cfg.cov_coeff >= 0,
            "vicreg_loss: coefficients must be non-negative");

    // invariance: mean squared difference per element (N*M normalizer, the
    // convention of the referenced objective)
    auto d = tape.subtract(z1, z2);
    auto inv = tape.scale(tape.sum_all(tape.mul(d, d)), 1.0 / (static_cast<double>(n) * m));

    // variance hinge: mean_j max(0, gamma - sqrt(var_j + eps)), per view
    auto var_term = [&](const NodePtr& z) {
        auto std_dev = tape.sqrt(tape.add_scalar(tape.col_var(z), kVicregVarEps));
        auto hinge = tape.relu(tape.add_scalar(tape.scale(std_dev, -1.0), cfg.gamma));
        return tape.mean_all(hinge);
    };
    auto var = tape.scale(tape.add(var_term(z1), var_term(z2)), 0.5);

    // covariance: sum of squared off-diagonal entries of C(z) / M, per view
    auto cov_term = [&](const NodePtr& z) {
        auto centered = tape.subtract(z, broadcast_row(tape, tape.col_mean(z), n));
        auto c = tape.scale(tape.matmul(tape.transpose(centered), centered), 1.0 / n);
        auto off = tape.off_diagonal(c);
        return tape.scale(tape.sum_all(tape.mul(off, off)), 1.0 / m);
    };
    auto cov = tape.add(cov_term(z1), cov_term(z2));

    return tape.add(tape.add(tape.scale(inv, cfg.inv_coeff), tape.scale(var, cfg.var_coeff)),
                    tape.scale(cov, cfg.cov_coeff));
}

NodePtr infonce_loss(Tape& tape, const NodePtr& z1, const NodePtr& z2, const InfoNceConfig& cfg) {
    require(z1->value.same_shape(z2->value), "infonce_loss: view shapes differ");
    const int n = z1->value.rows;
    require(n >= 2, "infonce_loss: need at least two samples");
    require(cfg.temperature > 0.0, "infonce_loss: temperature must be positive");

    auto all = tape.concat_rows(tape.row_l2_normalize(z1), tape.row_l2_normalize(z2));
    auto sims = tape.scale(tape.matmul(all, tape.transpose(all)), 1.0 / cfg.temperature);

    // positives are the paired rows at (i, i+N) and (i+N, i)
    DenseMatrix pos_mask(2 * n, 2 * n);
    for (int i = 0; i < n; ++i) {
        pos_mask.at(i, i + n) = 1.0;
        pos_mask.at(i + n, i) = 1.0;
    }
    auto pos = tape.row_sum(tape.mul(sims, tape.constant(std::move(pos_mask))));

    // log of the softmax denominator over all non-self candidates; cosine
    // similarities are bounded, so no max-shift is needed
    auto log_z = tape.log(tape.row_sum(tape.off_diagonal(tape.exp(sims))));

    return tape.mean_all(tape.subtract(log_z, pos));
}

NodePtr byol_loss(Tape& tape, const NodePtr& p1, const NodePtr& t2, const NodePtr& p2,
                  const NodePtr& t1) {
    require(p1->value.same_shape(t2->value) && p2->value.same_shape(t1->value) &&
                p1->value.same_shape(p2->value),
            "byol_loss: shape mismatch between prediction/target pairs");

    auto branch = [&](const NodePtr& p, const NodePtr& t) {
        auto cosines =
            tape.row_sum(tape.mul(tape.row_l2_normalize(p), tape.row_l2_normalize(t)));
        return tape.mean_all(tape.add_scalar(tape.scale(cosines, -2.0), 2.0));
    };
    return tape.scale(tape.add(branch(p1, t2), branch(p2, t1)), 0.5);
}

NodePtr total_loss(Tape& tape, const NodePtr& ssl, const std::vector<NodePtr>& layer_weights,
                   const WERankConfig& cfg) {
    require(cfg.alphas.size() == layer_weights.size(),
            "total_loss: alphas length does not match layer count");
    if (!cfg.any_active(layer_weights.size())) return ssl;
    return tape.add(ssl, werank(tape, layer_weights, cfg));
}

} // namespace werank::losses
