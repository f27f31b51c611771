#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "werank/data.hpp"
#include "werank/linalg.hpp"

namespace werank::eval {

using data::SplitMasks;
using linalg::DenseMatrix;
using linalg::Spectrum;

/// Time series of singular-value spectra per tracked matrix.
struct RankReport {
    struct Snapshot {
        int epoch = 0;
        std::string matrix_id;
        Spectrum spectrum;
    };
    std::vector<Snapshot> snapshots;

    /// Epochs must be strictly increasing per matrix_id.
    void append(int epoch, const std::string& matrix_id, Spectrum spectrum);
    const Snapshot* latest(const std::string& matrix_id) const;
};

struct DerivedRank {
    int epoch = 0;
    std::string matrix_id;
    int numerical_rank = 0;
    double effective_rank = 0.0; // 0 for an all-zero spectrum
};

/// Both estimators are always reported; rel_tol applies to the hard count.
std::vector<DerivedRank> derive_ranks(const RankReport& report, double rel_tol = 1e-6);

struct ProbeConfig {
    std::vector<double> l2_grid = {1e-4, 1e-3, 1e-2, 1e-1, 1.0};
    int max_iters = 2000;
    double learning_rate = 0.1;
    double frac_train = 0.1, frac_val = 0.1, frac_test = 0.8;
    int n_splits = 5;
    std::uint64_t seed = 0;
};

/// Disjoint, exhaustive train/val/test masks with sizes within rounding of
/// the fractions; same seed gives the same split.
SplitMasks split_nodes(int n, double frac_train, double frac_val, double frac_test,
                       std::uint64_t seed);

/// Multinomial softmax regression weights for one regularization strength.
struct LinearProbe {
    DenseMatrix w; // D x C
    DenseMatrix b; // 1 x C
    double lambda = 0.0;
};

struct ProbeFit {
    std::vector<LinearProbe> probes; // one per grid lambda
    std::vector<double> val_accuracy;
    std::size_t selected = 0; // by validation accuracy, ties to smaller lambda
};

/// Full-batch gradient descent on the l2-penalized softmax objective; the
/// representations are read-only (the encoder is never touched).
ProbeFit fit_linear_probe(const DenseMatrix& h_train, const std::vector<int>& y_train,
                          const DenseMatrix& h_val, const std::vector<int>& y_val, int n_classes,
                          const ProbeConfig& cfg);

double evaluate_probe(const LinearProbe& probe, const DenseMatrix& h, const std::vector<int>& y);

struct ProbeRow {
    int split = 0;
    double lambda = 0.0;
    double val_acc = 0.0;
    double test_acc = 0.0;
    bool selected = false;
};

struct ProbeOutcome {
    std::vector<ProbeRow> rows;   // every (split, lambda) pair
    double mean_test_acc = 0.0;   // over selected lambdas
    double std_test_acc = 0.0;    // sample std (n-1) across splits
};

ProbeOutcome run_probe_protocol(const DenseMatrix& h, const std::vector<int>& labels,
                                int n_classes, const ProbeConfig& cfg);

void write_probe_csv(const std::string& dir, const ProbeOutcome& outcome);
void write_ranks_csv(const std::string& dir, const std::vector<DerivedRank>& rows);

} // namespace werank::eval
