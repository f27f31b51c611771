#pragma once

#include <cstdint>
#include <memory>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "werank/data.hpp"
#include "werank/evaluation.hpp"
#include "werank/losses.hpp"
#include "werank/models.hpp"

namespace werank::training {

using linalg::DenseMatrix;
using linalg::SparseMatrix;

enum class LossKind { vicreg, infonce, byol };
enum class OptimizerKind { sgd, adamw };

struct OptimizerConfig {
    OptimizerKind kind = OptimizerKind::sgd;
    double learning_rate = 0.05;
    double weight_decay = 0.0; // adamw only (decoupled); plain sgd ignores it
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// p <- p - lr * g.
void sgd_step(DenseMatrix& p, const DenseMatrix& g, const OptimizerConfig& cfg);

struct AdamState {
    DenseMatrix m, v;
};

/// Decoupled-weight-decay update with bias correction; t is the 1-based
/// step count.
void adamw_step(AdamState& state, long t, DenseMatrix& p, const DenseMatrix& g,
                const OptimizerConfig& cfg);

/// Applies the configured rule across a flat parameter list; adamw moments
/// are kept per parameter index.
class Optimizer {
public:
    explicit Optimizer(OptimizerConfig cfg) : cfg_(cfg) {}
    void step(const std::vector<DenseMatrix*>& params,
              const std::vector<const DenseMatrix*>& grads);

private:
    OptimizerConfig cfg_;
    std::vector<AdamState> states_;
    long t_ = 0;
};

/// One model input: features plus, for GCN stacks, a normalized adjacency.
struct ModelInput {
    std::shared_ptr<const SparseMatrix> adj; // null for dense stacks
    DenseMatrix x;
};

/// Supplies the two stochastic views per epoch and the clean input used
/// for spectrum snapshots. View streams depend only on (seed, epoch, view),
/// so paired runs share them regardless of loss configuration.
class ViewProvider {
public:
    virtual ~ViewProvider() = default;
    virtual std::pair<ModelInput, ModelInput> views(std::uint64_t run_seed, int epoch) const = 0;
    virtual ModelInput clean() const = 0;
};

class ToyViews : public ViewProvider {
public:
    ToyViews(DenseMatrix data, data::ToyDataConfig cfg)
        : data_(std::move(data)), cfg_(cfg) {}
    std::pair<ModelInput, ModelInput> views(std::uint64_t run_seed, int epoch) const override;
    ModelInput clean() const override { return {nullptr, data_}; }

private:
    DenseMatrix data_;
    data::ToyDataConfig cfg_;
};

class GraphViews : public ViewProvider {
public:
    GraphViews(data::GraphBundle bundle, data::AugmentConfig aug);
    std::pair<ModelInput, ModelInput> views(std::uint64_t run_seed, int epoch) const override;
    ModelInput clean() const override;

private:
    data::GraphBundle bundle_;
    data::AugmentConfig aug_;
    std::shared_ptr<const SparseMatrix> clean_adj_;
};

struct TrainRunConfig {
    models::NetworkSpec encoder;
    models::NetworkSpec predictor; // EMA loop only, when use_predictor
    bool use_predictor = true;
    LossKind loss_kind = LossKind::vicreg;
    losses::VicregConfig vicreg;
    losses::InfoNceConfig infonce;
    losses::WERankConfig werank; // alphas aligned with encoder layers
    bool include_werank_node = true;
    OptimizerConfig optimizer;
    int epochs = 1000;
    int trace_every = 100;
    double ema_decay = 0.995;
    std::uint64_t seed = 0;
};

struct LossRow {
    int epoch = 0;
    double ssl = 0.0;
    double werank = 0.0;
    double total = 0.0;
};

class TrainingDiverged : public std::runtime_error {
public:
    TrainingDiverged(int epoch, const std::string& msg)
        : std::runtime_error(msg), epoch_(epoch) {}
    int epoch() const { return epoch_; }

private:
    int epoch_ = 0;
};

struct SiameseResult {
    models::WeightStack weights;
    eval::RankReport report;
    std::vector<LossRow> losses;
};

/// Shared-weight two-view training (vicreg or infonce) with the
/// regularizer added per the combined objective. Snapshots sigma(W_l) for
/// every layer and the embedding covariance spectrum every trace_every
/// epochs (plus epoch 0 and the final epoch).
SiameseResult train_siamese(const TrainRunConfig& cfg, const ViewProvider& provider);
SiameseResult train_siamese(const TrainRunConfig& cfg, const DenseMatrix& data,
                            const data::ToyDataConfig& data_cfg);

struct EmaResult {
    models::EmaPair pair;
    models::WeightStack predictor;
    eval::RankReport report;
    std::vector<LossRow> losses;
};

/// Online/target loop: the online encoder (+ optional predictor) regresses
/// the stop-gradient target outputs under the symmetric cosine loss; the
/// regularizer sees only the online encoder weights; the target follows by
/// EMA. Traces online weight spectra plus covariance spectra of the
/// representations H and embeddings Z on the clean input.
EmaResult train_ema(const TrainRunConfig& cfg, const ViewProvider& provider);

void write_trace_csv(const std::string& dir, const eval::RankReport& report);
void write_loss_csv(const std::string& dir, const std::vector<LossRow>& rows);

} // namespace werank::training
