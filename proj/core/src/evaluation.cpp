#include "werank/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>
#include <stdexcept>

#include "werank/io.hpp"
#include "werank/rng.hpp"

namespace werank::eval {

namespace {

constexpr std::uint64_t kSplitStream = 0x40;

void require(bool cond, const std::string& msg) {
    if (!cond) throw std::invalid_argument(msg);
}

} // namespace

void RankReport::append(int epoch, const std::string& matrix_id, Spectrum spectrum) {
    const auto* last = latest(matrix_id);
    require(last == nullptr || last->epoch < epoch,
            "RankReport: epochs must be strictly increasing for " + matrix_id);
    snapshots.push_back({epoch, matrix_id, std::move(spectrum)});
}

const RankReport::Snapshot* RankReport::latest(const std::string& matrix_id) const {
    const Snapshot* found = nullptr;
    for (const auto& snap : snapshots)
        if (snap.matrix_id == matrix_id) found = &snap;
    return found;
}

std::vector<DerivedRank> derive_ranks(const RankReport& report, double rel_tol) {
    require(!report.snapshots.empty(), "derive_ranks: empty report");
    std::vector<DerivedRank> out;
    out.reserve(report.snapshots.size());
    for (const auto& snap : report.snapshots) {
        DerivedRank row;
        row.epoch = snap.epoch;
        row.matrix_id = snap.matrix_id;
        row.numerical_rank = linalg::numerical_rank(snap.spectrum, rel_tol);
        row.effective_rank =
            row.numerical_rank == 0 ? 0.0 : linalg::effective_rank(snap.spectrum);
        out.push_back(std::move(row));
    }
    return out;
}

SplitMasks split_nodes(int n, double frac_train, double frac_val, double frac_test,
                       std::uint64_t seed) {
    require(n >= 10, "split_nodes: need at least 10 nodes");
    require(std::abs(frac_train + frac_val + frac_test - 1.0) < 1e-9,
            "split_nodes: fractions must sum to 1");

    std::vector<int> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    Rng rng = Rng::substream(seed, kSplitStream);
    rng.shuffle(order);

    const int n_train = static_cast<int>(std::floor(frac_train * n + 0.5));
    const int n_val = static_cast<int>(std::floor(frac_val * n + 0.5));
    SplitMasks masks;
    masks.train.assign(static_cast<std::size_t>(n), 0);
    masks.val.assign(static_cast<std::size_t>(n), 0);
    masks.test.assign(static_cast<std::size_t>(n), 0);
    for (int i = 0; i < n; ++i) {
        const auto node = static_cast<std::size_t>(order[static_cast<std::size_t>(i)]);
        if (i < n_train)
            masks.train[node] = 1;
        else if (i < n_train + n_val)
            masks.val[node] = 1;
        else
            masks.test[node] = 1;
    }
    return masks;
}

namespace {

DenseMatrix logits_of(const LinearProbe& probe, const DenseMatrix& h) {
    DenseMatrix out = linalg::matmul(h, probe.w);
    for (int i = 0; i < out.rows; ++i)
        for (int j = 0; j < out.cols; ++j) out.at(i, j) += probe.b.at(0, j);
    return out;
}

int argmax_row(const DenseMatrix& m, int row) {
    int best = 0;
    for (int j = 1; j < m.cols; ++j)
        if (m.at(row, j) > m.at(row, best)) best = j;
    return best;
}

LinearProbe fit_one_lambda(const DenseMatrix& h, const std::vector<int>& y, int n_classes,
                           double lambda, const ProbeConfig& cfg) {
    const int n = h.rows;
    const int d = h.cols;
    LinearProbe probe;
    probe.w = DenseMatrix::zeros(d, n_classes);
    probe.b = DenseMatrix::zeros(1, n_classes);
    probe.lambda = lambda;

    for (int iter = 0; iter < cfg.max_iters; ++iter) {
        DenseMatrix p = logits_of(probe, h);
        // softmax rows with max-shift
        for (int i = 0; i < n; ++i) {
            double mx = p.at(i, 0);
            for (int j = 1; j < n_classes; ++j) mx = std::max(mx, p.at(i, j));
            double z = 0.0;
            for (int j = 0; j < n_classes; ++j) {
                p.at(i, j) = std::exp(p.at(i, j) - mx);
                z += p.at(i, j);
            }
            for (int j = 0; j < n_classes; ++j) p.at(i, j) /= z;
            p.at(i, y[static_cast<std::size_t>(i)]) -= 1.0; // p - onehot
        }
        DenseMatrix grad_w = linalg::matmul(linalg::transpose(h), p);
        for (int a = 0; a < d; ++a)
            for (int c = 0; c < n_classes; ++c)
                grad_w.at(a, c) = grad_w.at(a, c) / n + 2.0 * lambda * probe.w.at(a, c);
        DenseMatrix grad_b(1, n_classes);
        for (int i = 0; i < n; ++i)
            for (int c = 0; c < n_classes; ++c) grad_b.at(0, c) += p.at(i, c) / n;

        for (std::size_t k = 0; k < probe.w.values.size(); ++k)
            probe.w.values[k] -= cfg.learning_rate * grad_w.values[k];
        for (std::size_t k = 0; k < probe.b.values.size(); ++k)
            probe.b.values[k] -= cfg.learning_rate * grad_b.values[k];
    }
    return probe;
}

} // namespace

ProbeFit fit_linear_probe(const DenseMatrix& h_train, const std::vector<int>& y_train,
                          const DenseMatrix& h_val, const std::vector<int>& y_val, int n_classes,
                          const ProbeConfig& cfg) {
    require(h_train.rows == static_cast<int>(y_train.size()), "fit_linear_probe: row mismatch");
    require(!cfg.l2_grid.empty(), "fit_linear_probe: empty lambda grid");
    std::set<int> classes(y_train.begin(), y_train.end());
    require(classes.size() >= 2, "fit_linear_probe: training set has a single class");

    ProbeFit fit;
    for (double lambda : cfg.l2_grid) {
        auto probe = fit_one_lambda(h_train, y_train, n_classes, lambda, cfg);
        fit.val_accuracy.push_back(evaluate_probe(probe, h_val, y_val));
        fit.probes.push_back(std::move(probe));
    }
    fit.selected = 0;
    for (std::size_t i = 1; i < fit.val_accuracy.size(); ++i)
        if (fit.val_accuracy[i] > fit.val_accuracy[fit.selected]) fit.selected = i;
    return fit;
}

double evaluate_probe(const LinearProbe& probe, const DenseMatrix& h, const std::vector<int>& y) {
    require(h.rows == static_cast<int>(y.size()), "evaluate_probe: row mismatch");
    if (h.rows == 0) return 0.0;
    const DenseMatrix logits = logits_of(probe, h);
    int correct = 0;
    for (int i = 0; i < h.rows; ++i)
        if (argmax_row(logits, i) == y[static_cast<std::size_t>(i)]) ++correct;
    return static_cast<double>(correct) / h.rows;
}

namespace {

DenseMatrix select_rows(const DenseMatrix& h, const std::vector<char>& mask) {
    int count = 0;
    for (char c : mask) count += c != 0;
    DenseMatrix out(count, h.cols);
    int r = 0;
    for (int i = 0; i < h.rows; ++i) {
        if (!mask[static_cast<std::size_t>(i)]) continue;
        for (int j = 0; j < h.cols; ++j) out.at(r, j) = h.at(i, j);
        ++r;
    }
    return out;
}

std::vector<int> select_labels(const std::vector<int>& y, const std::vector<char>& mask) {
    std::vector<int> out;
    for (std::size_t i = 0; i < y.size(); ++i)
        if (mask[i]) out.push_back(y[i]);
    return out;
}

} // namespace

ProbeOutcome run_probe_protocol(const DenseMatrix& h, const std::vector<int>& labels,
                                int n_classes, const ProbeConfig& cfg) {
    ProbeOutcome outcome;
    std::vector<double> selected_accs;
    for (int split = 0; split < cfg.n_splits; ++split) {
        auto masks = split_nodes(h.rows, cfg.frac_train, cfg.frac_val, cfg.frac_test,
                                 Rng::derive(cfg.seed, static_cast<std::uint64_t>(split)));
        auto fit = fit_linear_probe(select_rows(h, masks.train), select_labels(labels, masks.train),
                                    select_rows(h, masks.val), select_labels(labels, masks.val),
                                    n_classes, cfg);
        const auto h_test = select_rows(h, masks.test);
        const auto y_test = select_labels(labels, masks.test);
        for (std::size_t li = 0; li < fit.probes.size(); ++li) {
            ProbeRow row;
            row.split = split;
            row.lambda = cfg.l2_grid[li];
            row.val_acc = fit.val_accuracy[li];
            row.test_acc = evaluate_probe(fit.probes[li], h_test, y_test);
            row.selected = li == fit.selected;
            if (row.selected) selected_accs.push_back(row.test_acc);
            outcome.rows.push_back(row);
        }
    }
    const double n = static_cast<double>(selected_accs.size());
    for (double a : selected_accs) outcome.mean_test_acc += a / n;
    if (selected_accs.size() > 1) {
        double ss = 0.0;
        for (double a : selected_accs)
            ss += (a - outcome.mean_test_acc) * (a - outcome.mean_test_acc);
        outcome.std_test_acc = std::sqrt(ss / (n - 1.0)); // sample std across splits
    }
    return outcome;
}

void write_probe_csv(const std::string& dir, const ProbeOutcome& outcome) {
    std::ofstream out(std::filesystem::path(dir) / "probe.csv");
    out << "split,lambda,val_acc,test_acc,selected\n";
    for (const auto& row : outcome.rows)
        out << row.split << "," << io::fmt(row.lambda) << "," << io::fmt(row.val_acc) << ","
            << io::fmt(row.test_acc) << "," << (row.selected ? 1 : 0) << "\n";
}

void write_ranks_csv(const std::string& dir, const std::vector<DerivedRank>& rows) {
    std::ofstream out(std::filesystem::path(dir) / "ranks.csv");
    out << "epoch,matrix_id,numerical_rank,effective_rank\n";
    for (const auto& row : rows)
        out << row.epoch << "," << row.matrix_id << "," << row.numerical_rank << ","
            << io::fmt(row.effective_rank) << "\n";
}

} // namespace werank::eval
