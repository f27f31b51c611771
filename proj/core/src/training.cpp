#include "werank/training.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>

#include "werank/io.hpp"
#include "werank/rng.hpp"

namespace werank::training {

using autodiff::NodePtr;
using autodiff::Tape;

namespace {

constexpr std::uint64_t kInitEncoderStream = 0x50;
constexpr std::uint64_t kInitPredictorStream = 0x51;
constexpr std::uint64_t kViewStream = 0x60;

void require(bool cond, const std::string& msg) {
    if (!cond) throw std::invalid_argument(msg);
}

std::uint64_t view_seed(std::uint64_t run_seed, int epoch, int which) {
    return Rng::derive(Rng::derive(run_seed, kViewStream),
                       static_cast<std::uint64_t>(epoch) * 2 + static_cast<std::uint64_t>(which));
}

} // namespace

void sgd_step(DenseMatrix& p, const DenseMatrix& g, const OptimizerConfig& cfg) {
    require(p.same_shape(g), "sgd_step: shape mismatch");
    for (std::size_t i = 0; i < p.values.size(); ++i)
        p.values[i] -= cfg.learning_rate * g.values[i];
}

void adamw_step(AdamState& state, long t, DenseMatrix& p, const DenseMatrix& g,
                const OptimizerConfig& cfg) {
    require(p.same_shape(g), "adamw_step: shape mismatch");
    if (state.m.empty()) {
        state.m = DenseMatrix::zeros(p.rows, p.cols);
        state.v = DenseMatrix::zeros(p.rows, p.cols);
    }
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
    for (std::size_t i = 0; i < p.values.size(); ++i) {
        p.values[i] -= cfg.learning_rate * cfg.weight_decay * p.values[i];
        state.m.values[i] = cfg.beta1 * state.m.values[i] + (1.0 - cfg.beta1) * g.values[i];
        state.v.values[i] =
            cfg.beta2 * state.v.values[i] + (1.0 - cfg.beta2) * g.values[i] * g.values[i];
        const double m_hat = state.m.values[i] / bc1;
        const double v_hat = state.v.values[i] / bc2;
        p.values[i] -= cfg.learning_rate * m_hat / (std::sqrt(v_hat) + cfg.eps);
    }
}

void Optimizer::step(const std::vector<DenseMatrix*>& params,
                     const std::vector<const DenseMatrix*>& grads) {
    require(params.size() == grads.size(), "Optimizer::step: parameter/gradient count mismatch");
    require(cfg_.learning_rate > 0.0, "Optimizer::step: learning rate must be positive");
    if (cfg_.kind == OptimizerKind::sgd) {
        for (std::size_t i = 0; i < params.size(); ++i) sgd_step(*params[i], *grads[i], cfg_);
        return;
    }
    if (states_.size() != params.size()) states_.resize(params.size());
    ++t_;
    for (std::size_t i = 0; i < params.size(); ++i)
        adamw_step(states_[i], t_, *params[i], *grads[i], cfg_);
}

std::pair<ModelInput, ModelInput> ToyViews::views(std::uint64_t run_seed, int epoch) const {
    ModelInput v1{nullptr, data::augment_toy(data_, cfg_, view_seed(run_seed, epoch, 0))};
    ModelInput v2{nullptr, data::augment_toy(data_, cfg_, view_seed(run_seed, epoch, 1))};
    return {std::move(v1), std::move(v2)};
}

GraphViews::GraphViews(data::GraphBundle bundle, data::AugmentConfig aug)
    : bundle_(std::move(bundle)), aug_(aug) {
    clean_adj_ = std::make_shared<const SparseMatrix>(
        models::normalize_adjacency(bundle_.edges, bundle_.n_nodes, true));
}

std::pair<ModelInput, ModelInput> GraphViews::views(std::uint64_t run_seed, int epoch) const {
    auto make_view = [&](double p_f, double p_e, int which) {
        auto view = data::augment_graph(bundle_, aug_.effective(p_f), aug_.effective(p_e),
                                        view_seed(run_seed, epoch, which));
        ModelInput input;
        input.adj = std::make_shared<const SparseMatrix>(
            models::normalize_adjacency(view.edges, view.n_nodes, true));
        input.x = std::move(view.features);
        return input;
    };
    return {make_view(aug_.p_f1, aug_.p_e1, 0), make_view(aug_.p_f2, aug_.p_e2, 1)};
}

ModelInput GraphViews::clean() const { return {clean_adj_, bundle_.features}; }

namespace {

std::vector<NodePtr> forward_any(Tape& tape, const models::BoundStack& stack,
                                 const models::NetworkSpec& spec, const ModelInput& input) {
    auto x = tape.leaf(input.x, false);
    if (input.adj) return models::gcn_forward(tape, stack, spec, input.adj, x);
    return models::mlp_forward(tape, stack, spec, x);
}

linalg::Spectrum covariance_spectrum(const DenseMatrix& z) {
    auto cov = linalg::covariance(z);
    linalg::Spectrum s;
    s.sigmas.reserve(cov.eigvals.size());
    for (double l : cov.eigvals) s.sigmas.push_back(std::max(l, 0.0));
    return s;
}

void trace_weights(eval::RankReport& report, int epoch, const models::WeightStack& stack,
                   const std::string& prefix) {
    for (std::size_t l = 0; l < stack.layers.size(); ++l)
        report.append(epoch, prefix + "W" + std::to_string(l + 1),
                      linalg::singular_values(stack.layers[l].w));
}

void check_finite(int epoch, double ssl, double total) {
    if (std::isfinite(ssl) && std::isfinite(total)) return;
    throw TrainingDiverged(epoch, "non-finite loss at epoch " + std::to_string(epoch) +
                                      " (ssl=" + io::fmt(ssl) + ", total=" + io::fmt(total) + ")");
}

NodePtr siamese_ssl(Tape& tape, const TrainRunConfig& cfg, const NodePtr& z1, const NodePtr& z2) {
    if (cfg.loss_kind == LossKind::vicreg) return losses::vicreg_loss(tape, z1, z2, cfg.vicreg);
    return losses::infonce_loss(tape, z1, z2, cfg.infonce);
}

} // namespace

SiameseResult train_siamese(const TrainRunConfig& cfg, const ViewProvider& provider) {
    require(cfg.loss_kind == LossKind::vicreg || cfg.loss_kind == LossKind::infonce,
            "train_siamese: loss must be vicreg or infonce");
    require(cfg.epochs >= 0 && cfg.trace_every >= 1, "train_siamese: bad epoch counts");

    SiameseResult result;
    result.weights = models::init_weights(cfg.encoder, Rng::derive(cfg.seed, kInitEncoderStream));
    Optimizer opt(cfg.optimizer);

    auto trace = [&](int epoch) {
        trace_weights(result.report, epoch, result.weights, "");
        Tape tape;
        auto bound = models::bind_stack(tape, result.weights);
        auto z = forward_any(tape, bound, cfg.encoder, provider.clean()).back();
        result.report.append(epoch, "cov_Z", covariance_spectrum(z->value));
    };
    trace(0);

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        auto [in1, in2] = provider.views(cfg.seed, epoch);
        Tape tape;
        auto bound = models::bind_stack(tape, result.weights);
        auto z1 = forward_any(tape, bound, cfg.encoder, in1).back();
        auto z2 = forward_any(tape, bound, cfg.encoder, in2).back();
        auto ssl = siamese_ssl(tape, cfg, z1, z2);
        auto total = cfg.include_werank_node
                         ? losses::total_loss(tape, ssl, bound.weight_nodes(), cfg.werank)
                         : ssl;
        check_finite(epoch, ssl->scalar(), total->scalar());
        tape.backward(total);

        std::vector<const DenseMatrix*> grads;
        for (const auto& node : bound.all_nodes()) grads.push_back(&node->grad);
        opt.step(result.weights.parameters(), grads);

        result.losses.push_back(
            {epoch, ssl->scalar(), total->scalar() - ssl->scalar(), total->scalar()});
        if (epoch % cfg.trace_every == 0 || epoch == cfg.epochs) trace(epoch);
    }
    return result;
}

SiameseResult train_siamese(const TrainRunConfig& cfg, const DenseMatrix& data,
                            const data::ToyDataConfig& data_cfg) {
    return train_siamese(cfg, ToyViews(data, data_cfg));
}

EmaResult train_ema(const TrainRunConfig& cfg, const ViewProvider& provider) {
    require(cfg.loss_kind == LossKind::byol, "train_ema: loss must be byol");
    require(cfg.epochs >= 0 && cfg.trace_every >= 1, "train_ema: bad epoch counts");
    if (cfg.use_predictor)
        require(cfg.predictor.input_dim() == cfg.encoder.embedding_dim(),
                "train_ema: predictor input dim must match encoder output dim");

    EmaResult result;
    result.pair = models::EmaPair::from_online(
        models::init_weights(cfg.encoder, Rng::derive(cfg.seed, kInitEncoderStream)),
        cfg.ema_decay);
    if (cfg.use_predictor)
        result.predictor =
            models::init_weights(cfg.predictor, Rng::derive(cfg.seed, kInitPredictorStream));
    Optimizer opt(cfg.optimizer);

    auto trace = [&](int epoch) {
        trace_weights(result.report, epoch, result.pair.online, "");
        if (cfg.use_predictor) trace_weights(result.report, epoch, result.predictor, "pred_");
        Tape tape;
        auto bound = models::bind_stack(tape, result.pair.online);
        auto h = forward_any(tape, bound, cfg.encoder, provider.clean()).back();
        result.report.append(epoch, "cov_H", covariance_spectrum(h->value));
        if (cfg.use_predictor) {
            auto bound_pred = models::bind_stack(tape, result.predictor);
            auto z = models::mlp_forward(tape, bound_pred, cfg.predictor, h).back();
            result.report.append(epoch, "cov_Z", covariance_spectrum(z->value));
        } else {
            result.report.append(epoch, "cov_Z", covariance_spectrum(h->value));
        }
    };
    trace(0);

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        auto [in1, in2] = provider.views(cfg.seed, epoch);
        Tape tape;
        auto online = models::bind_stack(tape, result.pair.online);
        auto target = models::bind_stack(tape, result.pair.target);
        models::BoundStack pred;
        if (cfg.use_predictor) pred = models::bind_stack(tape, result.predictor);

        auto predict = [&](const ModelInput& input) {
            auto h = forward_any(tape, online, cfg.encoder, input).back();
            if (!cfg.use_predictor) return h;
            return models::mlp_forward(tape, pred, cfg.predictor, h).back();
        };
        auto target_of = [&](const ModelInput& input) {
            return tape.stop_gradient(forward_any(tape, target, cfg.encoder, input).back());
        };

        auto p1 = predict(in1);
        auto p2 = predict(in2);
        auto t1 = target_of(in1);
        auto t2 = target_of(in2);
        auto ssl = losses::byol_loss(tape, p1, t2, p2, t1);
        // the regularizer sees the online encoder only, never the predictor
        auto total = cfg.include_werank_node
                         ? losses::total_loss(tape, ssl, online.weight_nodes(), cfg.werank)
                         : ssl;
        check_finite(epoch, ssl->scalar(), total->scalar());
        tape.backward(total);

        auto params = result.pair.online.parameters();
        std::vector<const DenseMatrix*> grads;
        for (const auto& node : online.all_nodes()) grads.push_back(&node->grad);
        if (cfg.use_predictor) {
            for (auto* p : result.predictor.parameters()) params.push_back(p);
            for (const auto& node : pred.all_nodes()) grads.push_back(&node->grad);
        }
        opt.step(params, grads);
        models::ema_update(result.pair);

        result.losses.push_back(
            {epoch, ssl->scalar(), total->scalar() - ssl->scalar(), total->scalar()});
        if (epoch % cfg.trace_every == 0 || epoch == cfg.epochs) trace(epoch);
    }
    return result;
}

void write_trace_csv(const std::string& dir, const eval::RankReport& report) {
    std::ofstream out(std::filesystem::path(dir) / "trace.csv");
    out << "epoch,matrix_id,sv_index,sigma\n";
    for (const auto& snap : report.snapshots)
        for (std::size_t i = 0; i < snap.spectrum.size(); ++i)
            out << snap.epoch << "," << snap.matrix_id << "," << i << ","
                << io::fmt(snap.spectrum.sigmas[i]) << "\n";
}

void write_loss_csv(const std::string& dir, const std::vector<LossRow>& rows) {
    std::ofstream out(std::filesystem::path(dir) / "loss.csv");
    out << "epoch,ssl,werank,total\n";
    for (const auto& row : rows)
        out << row.epoch << "," << io::fmt(row.ssl) << "," << io::fmt(row.werank) << ","
            << io::fmt(row.total) << "\n";
}

} // namespace werank::training
