#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "werank/evaluation.hpp"
#include "werank/training.hpp"

namespace werank::harness {

using nlohmann::json;

enum class PresetKind {
    toy_overparam,
    toy_aug_sweep,
    toy_depth,
    prop_check,
    ema_optimizer_check,
    graph_bgrl,
    coeff_sweep,
    aug_magnitude_sweep,
    complexity_bench,
};

class PresetError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A parsed preset file; resolution into concrete run configs is pure, so
/// the same file always yields the same grid.
struct Preset {
    PresetKind kind;
    std::string name;
    std::uint64_t seed = 1;
    std::string output_dir; // may be empty: resolved against the output root
    json overrides;         // kind-specific knobs

    static Preset parse_file(const std::string& path);
    static Preset parse(const json& j);
};

/// Where a run's inputs come from.
struct DataSpec {
    enum class Source { toy, sbm, bundle };
    Source source = Source::toy;
    data::ToyDataConfig toy;
    struct Sbm {
        int n_nodes = 300;
        int n_blocks = 4;
        double p_in = 0.1;
        double p_out = 0.01;
        int feat_dim = 32;
    } sbm;
    std::string bundle_dir;
    data::AugmentConfig aug; // graph sources only
};

struct ResolvedRun {
    std::string name;
    training::TrainRunConfig train;
    DataSpec data;
    bool run_probe = false; // graph runs: probe trained and random-init encoders
    eval::ProbeConfig probe;
    std::vector<std::string> notes; // defaulted/assumed settings, recorded in meta.json
};

std::vector<ResolvedRun> resolve(const Preset& preset);

struct RunOutcome {
    std::string name;
    std::string dir;
    bool ok = false;
    std::string error;
    json metrics;
};

struct ExperimentSummary {
    std::string dir; // experiment output directory
    std::vector<RunOutcome> runs;
    bool all_ok = false;
    json to_json(const Preset& preset) const;
};

/// Executes every grid point (bounded worker pool), writes per-run
/// trace/loss/meta/ranks (+probe) files and a top-level summary.json.
ExperimentSummary run_experiment(const Preset& preset, const std::string& output_root,
                                 int jobs = 1,
                                 std::optional<std::uint64_t> seed_override = std::nullopt,
                                 const std::string& bundle_override = {});

/// Deterministic SVGs from run artifacts. kinds: "spectra" (sigma vs epoch
/// per run, one file per run dir), "ranks" (derived ranks vs epoch), and
/// "final" (final spectrum vs index, solid baseline / dotted regularized
/// arms, one combined file). Returns the paths written.
std::vector<std::string> emit_plots(const std::vector<std::string>& run_dirs,
                                    const std::string& kind, const std::string& matrix_id = "W1",
                                    const std::string& out_file = {});

struct BenchRow {
    int dim = 0;
    double seconds = 0.0;
};

struct BenchResult {
    std::vector<BenchRow> rows;
    double exponent = 0.0; // log-log least-squares slope
};

/// Wall-time of one regularizer evaluation for square layers of growing
/// width, plus the fitted growth exponent.
BenchResult complexity_bench(const std::vector<int>& dims = {64, 128, 256, 512});
void write_bench_files(const std::string& dir, const BenchResult& result);

} // namespace werank::harness
