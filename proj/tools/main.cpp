#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "werank/harness.hpp"
#include "werank/io.hpp"

namespace {

std::string default_output_root() {
    if (const char* env = std::getenv("WERANK_OUT")) return env;
    return "out";
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"weight-regularized SSL training harness"};
    app.require_subcommand(1);

    // run
    std::string preset_path;
    std::string out_root = default_output_root();
    int jobs = 1;
    std::optional<std::uint64_t> seed_override;
    std::string bundle_dir;
    auto* run = app.add_subcommand("run", "resolve a preset file and execute every grid point");
    run->add_option("preset", preset_path, "preset JSON file")->required();
    run->add_option("--out", out_root, "output root directory (default $WERANK_OUT or ./out)");
    run->add_option("--jobs", jobs, "worker pool size")->check(CLI::PositiveNumber);
    std::uint64_t seed_value = 0;
    auto* seed_opt = run->add_option("--seed-override", seed_value, "replace the preset seed");
    run->add_option("--bundle", bundle_dir, "graph bundle directory (graph presets)");

    // plot
    std::vector<std::string> run_dirs;
    std::string plot_kind = "spectra";
    std::string matrix_id = "W1";
    std::string plot_out;
    auto* plot = app.add_subcommand("plot", "render SVG charts from run artifacts");
    plot->add_option("dirs", run_dirs, "run directories")->required();
    plot->add_option("--kind", plot_kind, "spectra | ranks | final");
    plot->add_option("--matrix", matrix_id, "matrix id to plot (default W1)");
    plot->add_option("--out", plot_out, "output file for combined plots");

    // bench
    std::string bench_out = default_output_root();
    auto* bench = app.add_subcommand("bench", "time the regularizer across layer widths");
    bench->add_option("--out", bench_out, "output directory for bench.csv / bench.json");

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed()) {
            if (*seed_opt) seed_override = seed_value;
            auto preset = werank::harness::Preset::parse_file(preset_path);
            auto summary = werank::harness::run_experiment(preset, out_root, jobs, seed_override,
                                                           bundle_dir);
            for (const auto& r : summary.runs)
                std::cout << (r.ok ? "[ok]   " : "[FAIL] ") << r.name
                          << (r.error.empty() ? "" : "  " + r.error) << "\n";
            std::cout << "summary: " << summary.dir << "/summary.json\n";
            return summary.all_ok ? 0 : 1;
        }
        if (plot->parsed()) {
            auto written = werank::harness::emit_plots(run_dirs, plot_kind, matrix_id, plot_out);
            for (const auto& path : written) std::cout << path << "\n";
            return 0;
        }
        if (bench->parsed()) {
            std::filesystem::create_directories(bench_out);
            auto result = werank::harness::complexity_bench();
            werank::harness::write_bench_files(bench_out, result);
            for (const auto& row : result.rows)
                std::cout << "d=" << row.dim << "  " << werank::io::fmt(row.seconds) << " s\n";
            std::cout << "fitted exponent: " << werank::io::fmt(result.exponent) << "\n";
            return 0;
        }
    } catch (const werank::harness::PresetError& e) {
        std::cerr << "preset error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
