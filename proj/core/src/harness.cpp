#include "werank/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <thread>

#include "werank/io.hpp"
#include "werank/losses.hpp"
#include "werank/rng.hpp"
#include "werank/svg_plot.hpp"

namespace werank::harness {

namespace fs = std::filesystem;
using data::AugmentConfig;
using data::ToyDataConfig;
using training::LossKind;
using training::OptimizerKind;
using training::TrainRunConfig;

namespace {

constexpr std::uint64_t kProbeStream = 0x70;

const std::map<std::string, PresetKind>& kind_names() {
    static const std::map<std::string, PresetKind> names = {
        {"toy_overparam", PresetKind::toy_overparam},
        {"toy_aug_sweep", PresetKind::toy_aug_sweep},
        {"toy_depth", PresetKind::toy_depth},
        {"prop_check", PresetKind::prop_check},
        {"ema_optimizer_check", PresetKind::ema_optimizer_check},
        {"graph_bgrl", PresetKind::graph_bgrl},
        {"coeff_sweep", PresetKind::coeff_sweep},
        {"aug_magnitude_sweep", PresetKind::aug_magnitude_sweep},
        {"complexity_bench", PresetKind::complexity_bench},
    };
    return names;
}

std::string kind_to_string(PresetKind kind) {
    for (const auto& [name, k] : kind_names())
        if (k == kind) return name;
    return "?";
}

// ---- config -> json (for meta.json) ----

json to_json(const models::NetworkSpec& spec) {
    json layers = json::array();
    for (const auto& l : spec.layers)
        layers.push_back({{"kind", l.kind == models::LayerKind::gcn ? "gcn" : "linear"},
                          {"d_in", l.d_in},
                          {"d_out", l.d_out},
                          {"bias", l.bias},
                          {"batch_norm", l.batch_norm},
                          {"layer_norm", l.layer_norm}});
    const char* act = spec.activation == models::Activation::relu    ? "relu"
                      : spec.activation == models::Activation::prelu ? "prelu"
                                                                     : "none";
    return {{"layers", layers}, {"activation", act}, {"prelu_init_slope", spec.prelu_init_slope}};
}

json to_json(const losses::WERankConfig& cfg) {
    return {{"alphas", cfg.alphas},
            {"variant", cfg.variant == losses::WERankVariant::frobenius ? "frobenius" : "entrywise_l1"},
            {"normalize_by_d2", cfg.normalize_by_d2},
            {"apply_mask", cfg.apply_mask}};
}

json to_json(const training::OptimizerConfig& cfg) {
    return {{"kind", cfg.kind == OptimizerKind::sgd ? "sgd" : "adamw"},
            {"learning_rate", cfg.learning_rate},
            {"weight_decay", cfg.weight_decay},
            {"beta1", cfg.beta1},
            {"beta2", cfg.beta2},
            {"eps", cfg.eps}};
}

json to_json(const ToyDataConfig& cfg) {
    return {{"n_points", cfg.n_points},
            {"dim", cfg.dim},
            {"aug_amplitude", cfg.aug_amplitude},
            {"noisy_block_size", cfg.noisy_block_size},
            {"seed", cfg.seed}};
}

json to_json(const AugmentConfig& cfg) {
    return {{"p_f1", cfg.p_f1}, {"p_f2", cfg.p_f2},       {"p_e1", cfg.p_e1},
            {"p_e2", cfg.p_e2}, {"multiplier", cfg.multiplier}, {"cap_at_one", cfg.cap_at_one}};
}

json to_json(const DataSpec& spec) {
    json j;
    switch (spec.source) {
        case DataSpec::Source::toy:
            j["source"] = "toy";
            j["toy"] = to_json(spec.toy);
            break;
        case DataSpec::Source::sbm:
            j["source"] = "sbm";
            j["sbm"] = {{"n_nodes", spec.sbm.n_nodes},
                        {"n_blocks", spec.sbm.n_blocks},
                        {"p_in", spec.sbm.p_in},
                        {"p_out", spec.sbm.p_out},
                        {"feat_dim", spec.sbm.feat_dim}};
            j["augment"] = to_json(spec.aug);
            break;
        case DataSpec::Source::bundle:
            j["source"] = "bundle";
            j["bundle_dir"] = spec.bundle_dir;
            j["augment"] = to_json(spec.aug);
            break;
    }
    return j;
}

json to_json(const TrainRunConfig& cfg) {
    const char* loss = cfg.loss_kind == LossKind::vicreg    ? "vicreg"
                       : cfg.loss_kind == LossKind::infonce ? "infonce"
                                                            : "byol";
    json j = {{"encoder", to_json(cfg.encoder)},
              {"loss_kind", loss},
              {"werank", to_json(cfg.werank)},
              {"include_werank_node", cfg.include_werank_node},
              {"optimizer", to_json(cfg.optimizer)},
              {"epochs", cfg.epochs},
              {"trace_every", cfg.trace_every},
              {"seed", cfg.seed}};
    if (cfg.loss_kind == LossKind::vicreg)
        j["vicreg"] = {{"inv_coeff", cfg.vicreg.inv_coeff},
                       {"var_coeff", cfg.vicreg.var_coeff},
                       {"cov_coeff", cfg.vicreg.cov_coeff},
                       {"gamma", cfg.vicreg.gamma}};
    if (cfg.loss_kind == LossKind::infonce)
        j["infonce"] = {{"temperature", cfg.infonce.temperature}};
    if (cfg.loss_kind == LossKind::byol) {
        j["ema_decay"] = cfg.ema_decay;
        j["use_predictor"] = cfg.use_predictor;
        if (cfg.use_predictor) j["predictor"] = to_json(cfg.predictor);
    }
    return j;
}

// ---- overrides ----

template <typename T>
T get_override(const json& overrides, const std::string& key, T fallback) {
    if (!overrides.contains(key)) return fallback;
    try {
        return overrides.at(key).get<T>();
    } catch (const json::exception&) {
        throw PresetError("preset override '" + key + "' has the wrong type");
    }
}

void check_known_overrides(const json& overrides, const std::vector<std::string>& known) {
    for (const auto& [key, value] : overrides.items()) {
        (void)value;
        if (std::find(known.begin(), known.end(), key) == known.end())
            throw PresetError("unknown preset override '" + key + "'");
    }
}

} // namespace

Preset Preset::parse(const json& j) {
    if (!j.is_object()) throw PresetError("preset must be a JSON object");
    if (!j.contains("kind") || !j.at("kind").is_string())
        throw PresetError("preset needs a string 'kind'");
    const std::string kind = j.at("kind").get<std::string>();
    auto it = kind_names().find(kind);
    if (it == kind_names().end()) {
        std::string valid;
        for (const auto& [name, k] : kind_names()) {
            (void)k;
            valid += valid.empty() ? name : ", " + name;
        }
        throw PresetError("unknown preset kind '" + kind + "' (valid: " + valid + ")");
    }
    Preset preset;
    preset.kind = it->second;
    preset.name = j.value("name", kind);
    if (j.contains("seed")) {
        if (!j.at("seed").is_number_unsigned() && !j.at("seed").is_number_integer())
            throw PresetError("preset 'seed' must be an integer");
        preset.seed = j.at("seed").get<std::uint64_t>();
    }
    preset.output_dir = j.value("output_dir", std::string{});
    preset.overrides = j.value("overrides", json::object());
    if (!preset.overrides.is_object()) throw PresetError("preset 'overrides' must be an object");
    for (const auto& [key, value] : j.items()) {
        (void)value;
        if (key != "kind" && key != "name" && key != "seed" && key != "output_dir" &&
            key != "overrides")
            throw PresetError("unknown preset field '" + key + "'");
    }
    return preset;
}

Preset Preset::parse_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw PresetError("cannot open preset file: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw PresetError("preset JSON parse error: " + std::string(e.what()));
    }
    return parse(j);
}

namespace {

// ---- resolution helpers ----

ResolvedRun base_toy_run(const Preset& preset, int n_layers, double alpha, double k) {
    ResolvedRun run;
    std::vector<int> dims(static_cast<std::size_t>(n_layers) + 1, 16);
    run.train.encoder = models::NetworkSpec::linear_chain(dims);
    run.train.loss_kind = LossKind::vicreg;
    run.train.werank.alphas.assign(static_cast<std::size_t>(n_layers), alpha);
    run.train.werank.normalize_by_d2 = false; // toy runs regularize the raw norm
    run.train.optimizer.kind = OptimizerKind::sgd;
    run.train.optimizer.learning_rate = 0.05;
    run.train.seed = preset.seed;
    run.data.source = DataSpec::Source::toy;
    run.data.toy.seed = preset.seed;
    run.data.toy.aug_amplitude = k;
    run.notes = {"optimizer.learning_rate chosen by this harness (not externally pinned)",
                 "toy view noise applied to the trailing coordinate block",
                 "views resampled every epoch"};
    return run;
}

DataSpec graph_data_spec(const Preset& preset, const std::string& bundle_override) {
    DataSpec spec;
    const std::string bundle =
        !bundle_override.empty() ? bundle_override
                                 : get_override<std::string>(preset.overrides, "bundle", "");
    if (!bundle.empty()) {
        spec.source = DataSpec::Source::bundle;
        spec.bundle_dir = bundle;
        spec.aug.p_f1 = 0.2;
        spec.aug.p_f2 = 0.3;
        spec.aug.p_e1 = 0.4;
        spec.aug.p_e2 = 0.4;
    } else {
        spec.source = DataSpec::Source::sbm;
        if (preset.overrides.contains("sbm")) {
            const auto& sbm = preset.overrides.at("sbm");
            spec.sbm.n_nodes = sbm.value("n_nodes", spec.sbm.n_nodes);
            spec.sbm.n_blocks = sbm.value("n_blocks", spec.sbm.n_blocks);
            spec.sbm.p_in = sbm.value("p_in", spec.sbm.p_in);
            spec.sbm.p_out = sbm.value("p_out", spec.sbm.p_out);
            spec.sbm.feat_dim = sbm.value("feat_dim", spec.sbm.feat_dim);
        }
        spec.aug.p_f1 = spec.aug.p_f2 = 0.2;
        spec.aug.p_e1 = spec.aug.p_e2 = 0.3;
    }
    return spec;
}

models::NetworkSpec gcn_encoder(int d_in, int hidden, int embed) {
    models::NetworkSpec spec;
    spec.layers = {{models::LayerKind::gcn, d_in, hidden, false, false, false},
                   {models::LayerKind::gcn, hidden, embed, false, false, false}};
    spec.activation = models::Activation::prelu;
    return spec;
}

models::NetworkSpec mlp_predictor(int embed, int hidden) {
    models::NetworkSpec spec;
    spec.layers = {{models::LayerKind::linear, embed, hidden, true, false, false},
                   {models::LayerKind::linear, hidden, embed, true, false, false}};
    spec.activation = models::Activation::prelu;
    return spec;
}

ResolvedRun base_graph_run(const Preset& preset, const std::string& bundle_override,
                           double alpha) {
    ResolvedRun run;
    run.data = graph_data_spec(preset, bundle_override);

    int d_in = run.data.sbm.feat_dim;
    int hidden = 64, embed = 32, pred_hidden = 64;
    double lr = 1e-3;
    if (run.data.source == DataSpec::Source::bundle) {
        const auto meta_path = fs::path(run.data.bundle_dir) / "meta.json";
        std::ifstream meta_in(meta_path);
        if (!meta_in) throw PresetError("bundle meta.json not found at " + meta_path.string());
        json meta;
        meta_in >> meta;
        d_in = meta.at("feat_dim").get<int>();
        hidden = 256;
        embed = 128;
        pred_hidden = 128;
        lr = 1e-4;
    }

    run.train.encoder = gcn_encoder(d_in, hidden, embed);
    run.train.predictor = mlp_predictor(embed, pred_hidden);
    run.train.use_predictor = true;
    run.train.loss_kind = LossKind::byol;
    run.train.werank.alphas.assign(run.train.encoder.layers.size(), alpha);
    // graph presets follow the reference-snippet semantics: entrywise L1
    // with the 1/d^2 normalization (the L1 norm grows like d^2, so the
    // normalizer keeps the term O(1) at any width)
    run.train.werank.variant = losses::WERankVariant::entrywise_l1;
    run.train.werank.normalize_by_d2 = true;
    run.train.optimizer.kind = OptimizerKind::adamw;
    run.train.optimizer.learning_rate = lr;
    run.train.optimizer.weight_decay = 1e-5;
    run.train.ema_decay = 0.995;
    run.train.epochs = 500;
    run.train.trace_every = 25;
    run.train.seed = preset.seed;

    run.run_probe = true;
    run.probe.n_splits = get_override<int>(preset.overrides, "probe_splits", 5);
    run.probe.seed = Rng::derive(preset.seed, kProbeStream);
    run.notes = {"graph training is full-batch and transductive",
                 "probe representations come from the online encoder (predictor discarded)",
                 "normalization (when enabled) runs before the activation",
                 "optimizer.weight_decay defaulted by this harness"};
    return run;
}

void apply_common_overrides(const Preset& preset, ResolvedRun& run) {
    run.train.epochs = get_override<int>(preset.overrides, "epochs", run.train.epochs);
    run.train.trace_every =
        get_override<int>(preset.overrides, "trace_every", run.train.trace_every);
    run.train.optimizer.learning_rate = get_override<double>(preset.overrides, "learning_rate",
                                                             run.train.optimizer.learning_rate);
    if (run.data.source == DataSpec::Source::toy)
        run.data.toy.n_points = get_override<int>(preset.overrides, "n_points", run.data.toy.n_points);
}

std::string format_grid_value(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", v);
    return buf;
}

} // namespace

std::vector<ResolvedRun> resolve(const Preset& preset) {
    std::vector<ResolvedRun> runs;
    const std::vector<std::string> common = {"epochs", "trace_every", "learning_rate", "n_points"};

    auto known = [&](std::initializer_list<std::string> extra) {
        std::vector<std::string> keys = common;
        keys.insert(keys.end(), extra.begin(), extra.end());
        return keys;
    };

    switch (preset.kind) {
        case PresetKind::prop_check: {
            check_known_overrides(preset.overrides, known({"alpha"}));
            auto run = base_toy_run(preset, 1, get_override<double>(preset.overrides, "alpha", 1.0),
                                    0.0);
            run.name = "prop_check";
            run.train.vicreg = {0.0, 0.0, 0.0, 1.0}; // degenerate ssl term
            run.train.optimizer.learning_rate = 3e-4;
            run.train.epochs = 20000;
            run.train.trace_every = 1000;
            run.data.toy.n_points = 64;
            apply_common_overrides(preset, run);
            runs.push_back(std::move(run));
            break;
        }
        case PresetKind::toy_overparam: {
            check_known_overrides(preset.overrides, known({"alphas", "k", "loss"}));
            const auto alphas =
                get_override<std::vector<double>>(preset.overrides, "alphas", {0.0, 0.1});
            const double k = get_override<double>(preset.overrides, "k", 0.1);
            const std::string loss = get_override<std::string>(preset.overrides, "loss", "vicreg");
            for (double alpha : alphas) {
                auto run = base_toy_run(preset, 2, alpha, k);
                run.name = (alpha == 0.0 ? "baseline" : "werank_a" + format_grid_value(alpha));
                if (loss == "infonce") run.train.loss_kind = LossKind::infonce;
                run.train.epochs = 10000;
                run.train.trace_every = 100;
                apply_common_overrides(preset, run);
                runs.push_back(std::move(run));
            }
            break;
        }
        case PresetKind::toy_aug_sweep: {
            check_known_overrides(preset.overrides, known({"k_grid", "alpha"}));
            const auto k_grid = get_override<std::vector<double>>(preset.overrides, "k_grid",
                                                                  {0.01, 0.1, 0.5, 1.0});
            const double alpha = get_override<double>(preset.overrides, "alpha", 0.1);
            for (double k : k_grid) {
                for (double a : {0.0, alpha}) {
                    auto run = base_toy_run(preset, 1, a, k);
                    run.name = (a == 0.0 ? "baseline_k" : "werank_k") + format_grid_value(k);
                    run.train.loss_kind = LossKind::infonce;
                    run.train.epochs = 1000;
                    run.train.trace_every = 100;
                    run.data.toy.n_points = 256;
                    run.notes.push_back("k grid values chosen by this harness [derived]");
                    apply_common_overrides(preset, run);
                    runs.push_back(std::move(run));
                }
            }
            break;
        }
        case PresetKind::toy_depth: {
            check_known_overrides(preset.overrides, known({"depths", "alpha", "k"}));
            const auto depths =
                get_override<std::vector<int>>(preset.overrides, "depths", {2, 4, 6});
            const double alpha = get_override<double>(preset.overrides, "alpha", 0.1);
            const double k = get_override<double>(preset.overrides, "k", 0.1);
            for (int depth : depths) {
                for (double a : {0.0, alpha}) {
                    auto run = base_toy_run(preset, depth, a, k);
                    run.name =
                        (a == 0.0 ? "baseline_L" : "werank_L") + std::to_string(depth);
                    run.train.epochs = 10000;
                    run.train.trace_every = 500;
                    // deep linear products need a smaller stable step; arms
                    // stay paired within each depth
                    run.train.optimizer.learning_rate = depth >= 6 ? 0.02 : 0.05;
                    run.notes.push_back("depth grid chosen by this harness [derived]");
                    run.notes.push_back("per-depth learning rate: largest stable step");
                    apply_common_overrides(preset, run);
                    runs.push_back(std::move(run));
                }
            }
            break;
        }
        case PresetKind::ema_optimizer_check: {
            check_known_overrides(preset.overrides, known({"k"}));
            const double k = get_override<double>(preset.overrides, "k", 0.1);
            for (int arm = 0; arm < 2; ++arm) {
                auto run = base_toy_run(preset, 1, arm == 0 ? 0.0 : 0.02, k);
                run.train.loss_kind = LossKind::byol;
                run.train.predictor = models::NetworkSpec::linear_chain({16, 16});
                run.train.use_predictor = true;
                run.train.ema_decay = 0.995;
                run.train.epochs = 1000;
                run.notes.push_back("ema predictor enabled (16x16 linear), toggleable");
                if (arm == 0) {
                    run.name = "sgd_baseline";
                    run.train.optimizer.kind = OptimizerKind::sgd;
                    run.train.optimizer.learning_rate = 0.05;
                    run.train.trace_every = 1; // per-epoch drift measurement
                } else {
                    run.name = "adamw_werank";
                    run.train.optimizer.kind = OptimizerKind::adamw;
                    run.train.optimizer.learning_rate = 0.01;
                    run.train.optimizer.weight_decay = 0.0003;
                    run.train.trace_every = 10;
                }
                apply_common_overrides(preset, run);
                runs.push_back(std::move(run));
            }
            break;
        }
        case PresetKind::graph_bgrl: {
            check_known_overrides(preset.overrides,
                                  known({"alpha", "sbm", "bundle", "probe_splits"}));
            const double alpha = get_override<double>(preset.overrides, "alpha", 0.1);
            for (double a : {0.0, alpha}) {
                auto run = base_graph_run(preset, {}, a);
                run.name = a == 0.0 ? "baseline" : "werank_a" + format_grid_value(a);
                apply_common_overrides(preset, run);
                runs.push_back(std::move(run));
            }
            break;
        }
        case PresetKind::coeff_sweep: {
            check_known_overrides(preset.overrides,
                                  known({"alpha_grid", "sbm", "bundle", "probe_splits"}));
            const auto grid = get_override<std::vector<double>>(
                preset.overrides, "alpha_grid", {0.02, 0.05, 0.1, 0.2, 0.5, 0.8, 1.0});
            for (double a : grid) {
                auto run = base_graph_run(preset, {}, a);
                run.name = "alpha" + format_grid_value(a);
                apply_common_overrides(preset, run);
                runs.push_back(std::move(run));
            }
            break;
        }
        case PresetKind::aug_magnitude_sweep: {
            check_known_overrides(preset.overrides,
                                  known({"multipliers", "alpha", "sbm", "bundle", "probe_splits"}));
            const auto multipliers = get_override<std::vector<double>>(
                preset.overrides, "multipliers", {0.01, 0.05, 0.1, 0.5, 2.0});
            const double alpha = get_override<double>(preset.overrides, "alpha", 0.1);
            for (double m : multipliers) {
                for (double a : {0.0, alpha}) {
                    auto run = base_graph_run(preset, {}, a);
                    run.data.aug.multiplier = m;
                    run.data.aug.cap_at_one = true;
                    run.name = (a == 0.0 ? "baseline_m" : "werank_m") + format_grid_value(m);
                    run.notes.push_back("multiplier grid chosen by this harness [derived]");
                    apply_common_overrides(preset, run);
                    runs.push_back(std::move(run));
                }
            }
            break;
        }
        case PresetKind::complexity_bench: {
            check_known_overrides(preset.overrides, {});
            break; // no training runs; handled by run_experiment directly
        }
    }
    return runs;
}

namespace {

// ---- run execution ----

struct WeightStats {
    double min_sigma = 0.0, max_sigma = 0.0, mean_sigma = 0.0, max_abs_dev = 0.0;
};

WeightStats stats_of(const linalg::Spectrum& s) {
    WeightStats st;
    st.min_sigma = s.min_sigma();
    st.max_sigma = s.max_sigma();
    st.mean_sigma = s.mean_sigma();
    for (double v : s.sigmas) st.max_abs_dev = std::max(st.max_abs_dev, std::abs(v - 1.0));
    return st;
}

bool is_weight_id(const std::string& id) { return id.rfind("cov", 0) != 0; }
bool is_encoder_weight_id(const std::string& id) { return id.rfind("W", 0) == 0; }

json metrics_from_report(const eval::RankReport& report, const std::vector<training::LossRow>& losses) {
    json metrics;
    if (!losses.empty()) {
        const auto& last = losses.back();
        metrics["final_loss"] = {{"ssl", last.ssl}, {"werank", last.werank}, {"total", last.total}};
    }

    // final snapshot per matrix id
    std::map<std::string, const eval::RankReport::Snapshot*> finals;
    for (const auto& snap : report.snapshots) finals[snap.matrix_id] = &snap;

    json weights = json::object();
    WeightStats overall;
    overall.min_sigma = std::numeric_limits<double>::infinity();
    bool any_encoder_weight = false;
    double mean_acc = 0.0;
    int mean_count = 0;
    for (const auto& [id, snap] : finals) {
        if (!is_weight_id(id)) continue;
        auto st = stats_of(snap->spectrum);
        weights[id] = {{"min_sigma", st.min_sigma},
                       {"max_sigma", st.max_sigma},
                       {"mean_sigma", st.mean_sigma},
                       {"max_abs_dev_from_one", st.max_abs_dev}};
        if (is_encoder_weight_id(id)) {
            any_encoder_weight = true;
            overall.min_sigma = std::min(overall.min_sigma, st.min_sigma);
            overall.max_sigma = std::max(overall.max_sigma, st.max_sigma);
            overall.max_abs_dev = std::max(overall.max_abs_dev, st.max_abs_dev);
            mean_acc += st.mean_sigma;
            ++mean_count;
        }
    }
    metrics["weights_final"] = weights;
    if (any_encoder_weight) {
        metrics["encoder_weights_overall"] = {
            {"min_sigma", overall.min_sigma},
            {"max_sigma", overall.max_sigma},
            {"mean_sigma", mean_acc / mean_count},
            {"max_abs_dev_from_one", overall.max_abs_dev}};
        metrics["max_sigma_dev"] = overall.max_abs_dev;
    }

    json ranks = json::object();
    for (const auto& [id, snap] : finals) {
        if (is_weight_id(id)) continue;
        const int num = linalg::numerical_rank(snap->spectrum, 1e-6);
        ranks[id] = {{"numerical_rank", num},
                     {"effective_rank", num == 0 ? 0.0 : linalg::effective_rank(snap->spectrum)}};
    }
    metrics["ranks_final"] = ranks;

    // max per-epoch spectrum drift across consecutive snapshots of weight ids
    std::map<std::string, const linalg::Spectrum*> prev;
    double drift = 0.0;
    for (const auto& snap : report.snapshots) {
        if (!is_weight_id(snap.matrix_id)) continue;
        auto it = prev.find(snap.matrix_id);
        if (it != prev.end() && it->second->size() == snap.spectrum.size())
            for (std::size_t i = 0; i < snap.spectrum.size(); ++i)
                drift = std::max(drift,
                                 std::abs(snap.spectrum.sigmas[i] - it->second->sigmas[i]));
        prev[snap.matrix_id] = &snap.spectrum;
    }
    metrics["sigma_drift_max"] = drift;
    return metrics;
}

linalg::DenseMatrix encoder_representations(const TrainRunConfig& cfg,
                                            const models::WeightStack& stack,
                                            const training::ViewProvider& provider) {
    autodiff::Tape tape;
    auto bound = models::bind_stack(tape, stack);
    auto input = provider.clean();
    auto x = tape.leaf(input.x, false);
    auto outs = input.adj ? models::gcn_forward(tape, bound, cfg.encoder, input.adj, x)
                          : models::mlp_forward(tape, bound, cfg.encoder, x);
    return outs.back()->value;
}

RunOutcome run_one(const ResolvedRun& run, const fs::path& exp_dir) {
    RunOutcome outcome;
    outcome.name = run.name;
    outcome.dir = run.name;
    const fs::path dir = exp_dir / run.name;
    fs::create_directories(dir);

    try {
        json meta;
        meta["name"] = run.name;
        meta["train"] = to_json(run.train);
        meta["data"] = to_json(run.data);
        meta["notes"] = run.notes;

        if (run.data.source == DataSpec::Source::toy) {
            auto data = data::gen_toy_dataset(run.data.toy);
            training::ToyViews provider(data, run.data.toy);
            if (run.train.loss_kind == LossKind::byol) {
                auto result = training::train_ema(run.train, provider);
                training::write_trace_csv(dir.string(), result.report);
                training::write_loss_csv(dir.string(), result.losses);
                eval::write_ranks_csv(dir.string(), eval::derive_ranks(result.report));
                outcome.metrics = metrics_from_report(result.report, result.losses);
            } else {
                auto result = training::train_siamese(run.train, provider);
                training::write_trace_csv(dir.string(), result.report);
                training::write_loss_csv(dir.string(), result.losses);
                eval::write_ranks_csv(dir.string(), eval::derive_ranks(result.report));
                outcome.metrics = metrics_from_report(result.report, result.losses);
            }
        } else {
            auto bundle = run.data.source == DataSpec::Source::sbm
                              ? data::gen_synthetic_graph(run.data.sbm.n_nodes, run.data.sbm.n_blocks,
                                                          run.data.sbm.p_in, run.data.sbm.p_out,
                                                          run.data.sbm.feat_dim, run.train.seed)
                              : data::load_graph_bundle(run.data.bundle_dir);
            training::GraphViews provider(bundle, run.data.aug);
            auto result = training::train_ema(run.train, provider);
            training::write_trace_csv(dir.string(), result.report);
            training::write_loss_csv(dir.string(), result.losses);
            eval::write_ranks_csv(dir.string(), eval::derive_ranks(result.report));
            outcome.metrics = metrics_from_report(result.report, result.losses);

            if (run.run_probe) {
                auto h = encoder_representations(run.train, result.pair.online, provider);
                auto probe = eval::run_probe_protocol(h, bundle.labels, bundle.n_classes, run.probe);
                eval::write_probe_csv(dir.string(), probe);

                auto init_cfg = run.train;
                init_cfg.epochs = 0;
                auto init_result = training::train_ema(init_cfg, provider);
                auto h0 = encoder_representations(run.train, init_result.pair.online, provider);
                auto probe0 = eval::run_probe_protocol(h0, bundle.labels, bundle.n_classes, run.probe);

                outcome.metrics["probe"] = {
                    {"trained",
                     {{"mean_test_acc", probe.mean_test_acc}, {"std_test_acc", probe.std_test_acc}}},
                    {"random_init",
                     {{"mean_test_acc", probe0.mean_test_acc}, {"std_test_acc", probe0.std_test_acc}}}};
            }
        }

        std::ofstream(dir / "meta.json") << meta.dump(2) << "\n";
        outcome.ok = true;
    } catch (const std::exception& e) {
        outcome.ok = false;
        outcome.error = e.what();
    }
    return outcome;
}

} // namespace

json ExperimentSummary::to_json(const Preset& preset) const {
    json j;
    j["preset"] = {{"kind", kind_to_string(preset.kind)},
                   {"name", preset.name},
                   {"seed", preset.seed},
                   {"overrides", preset.overrides}};
    j["runs"] = json::array();
    for (const auto& run : runs) {
        json r = {{"name", run.name}, {"dir", run.dir}, {"ok", run.ok}};
        if (!run.error.empty()) r["error"] = run.error;
        if (!run.metrics.is_null()) r["metrics"] = run.metrics;
        j["runs"].push_back(std::move(r));
    }
    j["all_ok"] = all_ok;
    return j;
}

ExperimentSummary run_experiment(const Preset& preset_in, const std::string& output_root, int jobs,
                                 std::optional<std::uint64_t> seed_override,
                                 const std::string& bundle_override) {
    Preset preset = preset_in;
    if (seed_override) preset.seed = *seed_override;
    if (!bundle_override.empty()) preset.overrides["bundle"] = bundle_override;

    const fs::path exp_dir =
        fs::path(output_root) / (preset.output_dir.empty() ? preset.name : preset.output_dir);
    fs::create_directories(exp_dir);

    ExperimentSummary summary;
    summary.dir = exp_dir.string();

    if (preset.kind == PresetKind::complexity_bench) {
        auto bench = complexity_bench();
        write_bench_files(exp_dir.string(), bench);
        RunOutcome outcome;
        outcome.name = "bench";
        outcome.dir = ".";
        outcome.ok = true;
        // timings live in bench.csv / bench.json only, so summary.json stays
        // byte-stable across re-runs
        summary.runs.push_back(std::move(outcome));
        summary.all_ok = true;
        std::ofstream(exp_dir / "summary.json") << summary.to_json(preset).dump(2) << "\n";
        return summary;
    }

    const auto runs = resolve(preset);
    summary.runs.resize(runs.size());

    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= runs.size()) return;
            summary.runs[i] = run_one(runs[i], exp_dir);
        }
    };
    const int n_threads = std::max(1, std::min<int>(jobs, static_cast<int>(runs.size())));
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(n_threads));
    for (int i = 0; i < n_threads; ++i) pool.emplace_back(worker);
    for (auto& t : pool) t.join();

    summary.all_ok = std::all_of(summary.runs.begin(), summary.runs.end(),
                                 [](const RunOutcome& r) { return r.ok; });
    std::ofstream(exp_dir / "summary.json") << summary.to_json(preset).dump(2) << "\n";
    return summary;
}

// ---- plotting ----

namespace {

struct TraceRow {
    int epoch;
    std::string matrix_id;
    int sv_index;
    double sigma;
};

std::vector<TraceRow> read_trace(const fs::path& dir) {
    std::ifstream in(dir / "trace.csv");
    if (!in) throw std::runtime_error("missing trace.csv in " + dir.string());
    std::string line;
    std::getline(in, line);
    if (line != "epoch,matrix_id,sv_index,sigma")
        throw std::runtime_error("trace.csv in " + dir.string() + " is missing expected columns");
    std::vector<TraceRow> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ss(line);
        TraceRow row;
        std::string field;
        std::getline(ss, field, ',');
        row.epoch = std::stoi(field);
        std::getline(ss, row.matrix_id, ',');
        std::getline(ss, field, ',');
        row.sv_index = std::stoi(field);
        std::getline(ss, field, ',');
        row.sigma = std::stod(field);
        rows.push_back(std::move(row));
    }
    return rows;
}

bool run_has_regularizer(const fs::path& dir) {
    std::ifstream in(dir / "meta.json");
    if (!in) return false;
    json meta;
    in >> meta;
    for (double a : meta.at("train").at("werank").at("alphas").get<std::vector<double>>())
        if (a > 0.0) return true;
    return false;
}

} // namespace

std::vector<std::string> emit_plots(const std::vector<std::string>& run_dirs,
                                    const std::string& kind, const std::string& matrix_id,
                                    const std::string& out_file) {
    if (run_dirs.empty()) throw std::invalid_argument("emit_plots: no run directories given");
    std::vector<std::string> written;

    if (kind == "spectra") {
        for (const auto& dir : run_dirs) {
            auto rows = read_trace(dir);
            std::map<int, svg::Series> by_index;
            for (const auto& row : rows) {
                if (row.matrix_id != matrix_id) continue;
                auto& series = by_index[row.sv_index];
                series.label = matrix_id + " sigma_" + std::to_string(row.sv_index + 1);
                series.color_index = row.sv_index;
                series.points.emplace_back(row.epoch, row.sigma);
            }
            if (by_index.empty())
                throw std::runtime_error("emit_plots: no trace rows for matrix '" + matrix_id +
                                         "' in " + dir);
            std::vector<svg::Series> series;
            for (auto& [idx, s] : by_index) series.push_back(std::move(s));
            const auto path = fs::path(dir) / ("spectra_" + matrix_id + ".svg");
            std::ofstream(path) << svg::render_line_chart(
                "singular values of " + matrix_id, "epoch", "sigma", series);
            written.push_back(path.string());
        }
        return written;
    }

    if (kind == "ranks") {
        for (const auto& dir : run_dirs) {
            std::ifstream in(fs::path(dir) / "ranks.csv");
            if (!in) throw std::runtime_error("missing ranks.csv in " + dir);
            std::string line;
            std::getline(in, line);
            if (line != "epoch,matrix_id,numerical_rank,effective_rank")
                throw std::runtime_error("ranks.csv is missing expected columns");
            std::map<std::string, svg::Series> eff, num;
            int color = 0;
            while (std::getline(in, line)) {
                if (line.empty()) continue;
                std::istringstream ss(line);
                std::string epoch_s, id, num_s, eff_s;
                std::getline(ss, epoch_s, ',');
                std::getline(ss, id, ',');
                std::getline(ss, num_s, ',');
                std::getline(ss, eff_s, ',');
                if (id.rfind("cov", 0) != 0) continue;
                if (!eff.count(id)) {
                    eff[id] = {id + " effective", {}, false, color};
                    num[id] = {id + " numerical", {}, true, color};
                    ++color;
                }
                eff[id].points.emplace_back(std::stod(epoch_s), std::stod(eff_s));
                num[id].points.emplace_back(std::stod(epoch_s), std::stod(num_s));
            }
            if (eff.empty()) throw std::runtime_error("emit_plots: no covariance ranks in " + dir);
            std::vector<svg::Series> series;
            for (auto& [id, s] : eff) series.push_back(std::move(s));
            for (auto& [id, s] : num) series.push_back(std::move(s));
            const auto path = fs::path(dir) / "ranks.svg";
            std::ofstream(path) << svg::render_line_chart("representation ranks", "epoch", "rank",
                                                          series);
            written.push_back(path.string());
        }
        return written;
    }

    if (kind == "final") {
        std::vector<svg::Series> series;
        int color = 0;
        for (const auto& dir : run_dirs) {
            auto rows = read_trace(dir);
            int final_epoch = 0;
            for (const auto& row : rows)
                if (row.matrix_id == matrix_id) final_epoch = std::max(final_epoch, row.epoch);
            svg::Series s;
            s.label = fs::path(dir).filename().string();
            s.dotted = run_has_regularizer(dir); // regularized arms draw dotted
            s.color_index = color++;
            for (const auto& row : rows)
                if (row.matrix_id == matrix_id && row.epoch == final_epoch)
                    s.points.emplace_back(row.sv_index + 1, row.sigma);
            if (s.points.empty())
                throw std::runtime_error("emit_plots: no final spectrum for '" + matrix_id +
                                         "' in " + dir);
            series.push_back(std::move(s));
        }
        const fs::path path = out_file.empty() ? fs::path("final_spectra.svg") : fs::path(out_file);
        std::ofstream(path) << svg::render_line_chart("final spectrum of " + matrix_id,
                                                      "singular value index", "sigma", series);
        written.push_back(path.string());
        return written;
    }

    throw std::invalid_argument("emit_plots: unknown kind '" + kind +
                                "' (expected spectra, ranks or final)");
}

// ---- complexity bench ----

BenchResult complexity_bench(const std::vector<int>& dims) {
    using clock = std::chrono::steady_clock;
    losses::WERankConfig cfg;
    cfg.alphas = {1.0};
    cfg.normalize_by_d2 = false;

    BenchResult result;
    for (int d : dims) {
        Rng rng(static_cast<std::uint64_t>(1000 + d));
        linalg::DenseMatrix w(d, d);
        const double std = 1.0 / std::sqrt(static_cast<double>(d));
        for (double& v : w.values) v = std * rng.normal();
        const std::vector<linalg::DenseMatrix> weights = {w};

        // calibrate the repeat count so each sample spans >= ~50 ms
        auto time_once = [&](int iters) {
            const auto start = clock::now();
            double sink = 0.0;
            for (int i = 0; i < iters; ++i) sink += losses::werank_value(weights, cfg);
            const auto stop = clock::now();
            (void)sink;
            return std::chrono::duration<double>(stop - start).count();
        };
        int iters = 1;
        double t = time_once(1);
        if (t < 0.05) {
            iters = std::max(1, static_cast<int>(std::ceil(0.05 / std::max(t, 1e-6))));
            t = time_once(iters);
        }
        double best = t / iters;
        for (int rep = 1; rep < 3; ++rep) best = std::min(best, time_once(iters) / iters);
        result.rows.push_back({d, best});
    }

    // log-log least-squares slope
    const auto n = static_cast<double>(result.rows.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (const auto& row : result.rows) {
        const double x = std::log(static_cast<double>(row.dim));
        const double y = std::log(row.seconds);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    result.exponent = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    return result;
}

void write_bench_files(const std::string& dir, const BenchResult& result) {
    std::ofstream csv(fs::path(dir) / "bench.csv");
    csv << "dim,seconds\n";
    for (const auto& row : result.rows) csv << row.dim << "," << io::fmt(row.seconds) << "\n";

    json j;
    j["rows"] = json::array();
    for (const auto& row : result.rows)
        j["rows"].push_back({{"dim", row.dim}, {"seconds", row.seconds}});
    j["exponent"] = result.exponent;
    std::ofstream(fs::path(dir) / "bench.json") << j.dump(2) << "\n";
}

} // namespace werank::harness
