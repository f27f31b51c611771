#include "werank/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "werank/rng.hpp"

namespace werank::data {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// substream labels
constexpr std::uint64_t kToyDrawStream = 0x10;
constexpr std::uint64_t kToyNoiseStream = 0x11;
constexpr std::uint64_t kSbmEdgeStream = 0x20;
constexpr std::uint64_t kSbmFeatStream = 0x21;
constexpr std::uint64_t kAugEdgeStream = 0x30;
constexpr std::uint64_t kAugFeatStream = 0x31;

void require(bool cond, const std::string& msg) {
    if (!cond) throw std::invalid_argument(msg);
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw BundleError(BundleError::Kind::missing_file, "missing file: " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::vector<std::string> non_empty_lines(const std::string& text) {
    std::vector<std::string> lines;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
        if (!line.empty()) lines.push_back(line);
    }
    return lines;
}

} // namespace

DenseMatrix gen_toy_dataset(const ToyDataConfig& cfg) {
    require(cfg.n_points > cfg.dim, "gen_toy_dataset: need n_points > dim");
    require(cfg.noisy_block_size >= 0 && cfg.noisy_block_size <= cfg.dim,
            "gen_toy_dataset: noisy_block_size must be within dim");

    for (std::uint64_t attempt = 0;; ++attempt) {
        Rng rng = Rng::substream(cfg.seed, kToyDrawStream, attempt);
        DenseMatrix x(cfg.n_points, cfg.dim);
        for (double& v : x.values) v = rng.normal();

        // center
        std::vector<double> mean(static_cast<std::size_t>(cfg.dim), 0.0);
        for (int i = 0; i < cfg.n_points; ++i)
            for (int j = 0; j < cfg.dim; ++j) mean[static_cast<std::size_t>(j)] += x.at(i, j);
        for (double& v : mean) v /= cfg.n_points;
        for (int i = 0; i < cfg.n_points; ++i)
            for (int j = 0; j < cfg.dim; ++j) x.at(i, j) -= mean[static_cast<std::size_t>(j)];

        // exact whitening: X <- X U diag(1/sqrt(lambda)) U^T
        auto cov = linalg::covariance(x);
        if (cov.eigvals.back() <= 1e-10 * std::max(cov.eigvals.front(), 1e-300))
            continue; // rank-deficient draw: retry with the next substream
        auto eig = linalg::sym_eig(cov.cov);
        DenseMatrix ws(cfg.dim, cfg.dim);
        for (int a = 0; a < cfg.dim; ++a)
            for (int b = 0; b < cfg.dim; ++b) {
                double s = 0.0;
                for (int k = 0; k < cfg.dim; ++k)
                    s += eig.eigvecs.at(a, k) * eig.eigvecs.at(b, k) /
                         std::sqrt(eig.eigvals[static_cast<std::size_t>(k)]);
                ws.at(a, b) = s;
            }
        return linalg::matmul(x, ws);
    }
}

DenseMatrix augment_toy(const DenseMatrix& x, const ToyDataConfig& cfg, std::uint64_t view_seed) {
    require(cfg.dim == x.cols, "augment_toy: config dim differs from data");
    DenseMatrix out = x;
    if (cfg.aug_amplitude == 0.0 || cfg.noisy_block_size == 0) return out;
    const double std = std::sqrt(cfg.aug_amplitude);
    Rng rng = Rng::substream(view_seed, kToyNoiseStream);
    const int first_noisy = cfg.dim - cfg.noisy_block_size;
    for (int i = 0; i < x.rows; ++i)
        for (int j = first_noisy; j < cfg.dim; ++j) out.at(i, j) += std * rng.normal();
    return out;
}

double AugmentConfig::effective(double p) const {
    double scaled = p * multiplier;
    if (cap_at_one) scaled = std::min(scaled, 1.0);
    return std::clamp(scaled, 0.0, 1.0);
}

GraphBundle load_graph_bundle(const std::string& dir) {
    const fs::path root(dir);

    json meta;
    try {
        meta = json::parse(read_file(root / "meta.json"));
    } catch (const json::exception& e) {
        throw BundleError(BundleError::Kind::parse_error,
                          "meta.json: " + std::string(e.what()));
    }

    GraphBundle bundle;
    bundle.n_nodes = meta.at("n_nodes").get<int>();
    const int feat_dim = meta.at("feat_dim").get<int>();
    bundle.n_classes = meta.at("n_classes").get<int>();
    const std::string encoding = meta.value("feature_encoding", std::string("csv"));

    // edges: deduplicate reversed duplicates, drop self-edges with a count
    std::set<std::pair<int, int>> seen;
    for (const auto& line : non_empty_lines(read_file(root / "edges.csv"))) {
        int src = 0, dst = 0;
        if (std::sscanf(line.c_str(), "%d,%d", &src, &dst) != 2)
            throw BundleError(BundleError::Kind::parse_error, "edges.csv: bad line '" + line + "'");
        if (src < 0 || src >= bundle.n_nodes || dst < 0 || dst >= bundle.n_nodes)
            throw BundleError(BundleError::Kind::bad_index,
                              "edges.csv: node index out of range in '" + line + "'");
        if (src == dst) {
            ++bundle.dropped_self_edges;
            continue;
        }
        seen.insert({std::min(src, dst), std::max(src, dst)});
    }
    bundle.edges.assign(seen.begin(), seen.end());

    // features
    bundle.features = DenseMatrix(bundle.n_nodes, feat_dim);
    if (encoding == "bin") {
        const std::string raw = read_file(root / "features.bin");
        const std::size_t expect = static_cast<std::size_t>(bundle.n_nodes) * feat_dim * 4;
        if (raw.size() != expect)
            throw BundleError(BundleError::Kind::row_count_mismatch,
                              "features.bin: got " + std::to_string(raw.size()) +
                                  " bytes, expected " + std::to_string(expect));
        for (std::size_t i = 0; i < bundle.features.values.size(); ++i) {
            float f;
            std::memcpy(&f, raw.data() + i * 4, 4);
            bundle.features.values[i] = static_cast<double>(f);
        }
    } else {
        const auto lines = non_empty_lines(read_file(root / "features.csv"));
        if (static_cast<int>(lines.size()) != bundle.n_nodes)
            throw BundleError(BundleError::Kind::row_count_mismatch,
                              "features.csv: " + std::to_string(lines.size()) + " rows for " +
                                  std::to_string(bundle.n_nodes) + " nodes");
        for (int i = 0; i < bundle.n_nodes; ++i) {
            std::istringstream row(lines[static_cast<std::size_t>(i)]);
            std::string cell;
            int j = 0;
            while (std::getline(row, cell, ',')) {
                if (j >= feat_dim)
                    throw BundleError(BundleError::Kind::row_count_mismatch,
                                      "features.csv: too many columns at row " + std::to_string(i));
                bundle.features.at(i, j++) = std::stod(cell);
            }
            if (j != feat_dim)
                throw BundleError(BundleError::Kind::row_count_mismatch,
                                  "features.csv: short row " + std::to_string(i));
        }
    }
    if (!bundle.features.all_finite())
        throw BundleError(BundleError::Kind::parse_error, "features: non-finite entries");

    // labels
    const auto label_lines = non_empty_lines(read_file(root / "labels.csv"));
    if (static_cast<int>(label_lines.size()) != bundle.n_nodes)
        throw BundleError(BundleError::Kind::row_count_mismatch,
                          "labels.csv: " + std::to_string(label_lines.size()) + " rows for " +
                              std::to_string(bundle.n_nodes) + " nodes");
    for (const auto& line : label_lines) {
        const int y = std::stoi(line);
        if (y < 0 || y >= bundle.n_classes)
            throw BundleError(BundleError::Kind::bad_index, "labels.csv: class id " + line +
                                                                " outside [0, " +
                                                                std::to_string(bundle.n_classes) + ")");
        bundle.labels.push_back(y);
    }

    // optional masks
    if (fs::exists(root / "masks.csv")) {
        const auto mask_lines = non_empty_lines(read_file(root / "masks.csv"));
        if (static_cast<int>(mask_lines.size()) != bundle.n_nodes)
            throw BundleError(BundleError::Kind::row_count_mismatch, "masks.csv: row count");
        SplitMasks masks;
        for (const auto& line : mask_lines) {
            int t = 0, v = 0, s = 0;
            if (std::sscanf(line.c_str(), "%d,%d,%d", &t, &v, &s) != 3)
                throw BundleError(BundleError::Kind::parse_error, "masks.csv: bad line '" + line + "'");
            masks.train.push_back(static_cast<char>(t != 0));
            masks.val.push_back(static_cast<char>(v != 0));
            masks.test.push_back(static_cast<char>(s != 0));
        }
        bundle.masks = std::move(masks);
    }
    return bundle;
}

void save_graph_bundle(const std::string& dir, const GraphBundle& bundle,
                       const std::string& feature_encoding) {
    const fs::path root(dir);
    fs::create_directories(root);

    json meta;
    meta["n_nodes"] = bundle.n_nodes;
    meta["feat_dim"] = bundle.features.cols;
    meta["n_classes"] = bundle.n_classes;
    meta["feature_encoding"] = feature_encoding;
    std::ofstream(root / "meta.json") << meta.dump(2) << "\n";

    {
        std::ofstream out(root / "edges.csv");
        for (const auto& [a, b] : bundle.edges) out << a << "," << b << "\n";
    }
    if (feature_encoding == "bin") {
        std::ofstream out(root / "features.bin", std::ios::binary);
        for (double v : bundle.features.values) {
            const float f = static_cast<float>(v);
            out.write(reinterpret_cast<const char*>(&f), 4);
        }
    } else {
        std::ofstream out(root / "features.csv");
        char buf[64];
        for (int i = 0; i < bundle.features.rows; ++i) {
            for (int j = 0; j < bundle.features.cols; ++j) {
                std::snprintf(buf, sizeof buf, "%.17g", bundle.features.at(i, j));
                out << (j ? "," : "") << buf;
            }
            out << "\n";
        }
    }
    {
        std::ofstream out(root / "labels.csv");
        for (int y : bundle.labels) out << y << "\n";
    }
    if (bundle.masks) {
        std::ofstream out(root / "masks.csv");
        for (int i = 0; i < bundle.n_nodes; ++i)
            out << int(bundle.masks->train[static_cast<std::size_t>(i)]) << ","
                << int(bundle.masks->val[static_cast<std::size_t>(i)]) << ","
                << int(bundle.masks->test[static_cast<std::size_t>(i)]) << "\n";
    }
}

GraphBundle gen_synthetic_graph(int n_nodes, int n_blocks, double p_in, double p_out,
                                int feat_dim, std::uint64_t seed) {
    require(n_nodes > 0 && n_blocks > 0 && feat_dim > 0, "gen_synthetic_graph: bad sizes");
    require(p_in >= 0.0 && p_in <= 1.0 && p_out >= 0.0 && p_out <= 1.0,
            "gen_synthetic_graph: probabilities must be in [0,1]");
    require(p_in > p_out, "gen_synthetic_graph: need p_in > p_out");

    GraphBundle g;
    g.n_nodes = n_nodes;
    g.n_classes = n_blocks;
    g.labels.resize(static_cast<std::size_t>(n_nodes));
    for (int i = 0; i < n_nodes; ++i) g.labels[static_cast<std::size_t>(i)] = i % n_blocks;

    Rng edge_rng = Rng::substream(seed, kSbmEdgeStream);
    for (int i = 0; i < n_nodes; ++i)
        for (int j = i + 1; j < n_nodes; ++j) {
            const bool same = g.labels[static_cast<std::size_t>(i)] == g.labels[static_cast<std::size_t>(j)];
            if (edge_rng.bernoulli(same ? p_in : p_out)) g.edges.emplace_back(i, j);
        }

    Rng feat_rng = Rng::substream(seed, kSbmFeatStream);
    g.features = DenseMatrix(n_nodes, feat_dim);
    for (int i = 0; i < n_nodes; ++i) {
        for (int j = 0; j < feat_dim; ++j) g.features.at(i, j) = feat_rng.normal();
        g.features.at(i, g.labels[static_cast<std::size_t>(i)] % feat_dim) += 1.0;
    }
    return g;
}

GraphBundle augment_graph(const GraphBundle& g, double p_f, double p_e, std::uint64_t seed) {
    require(p_f >= 0.0 && p_f <= 1.0 && p_e >= 0.0 && p_e <= 1.0,
            "augment_graph: probabilities must be in [0,1]");
    GraphBundle view = g;

    Rng edge_rng = Rng::substream(seed, kAugEdgeStream);
    view.edges.clear();
    for (const auto& e : g.edges)
        if (!edge_rng.bernoulli(p_e)) view.edges.push_back(e);

    Rng feat_rng = Rng::substream(seed, kAugFeatStream);
    const int d = g.features.cols;
    std::vector<char> masked(static_cast<std::size_t>(d), 0);
    for (int j = 0; j < d; ++j) masked[static_cast<std::size_t>(j)] = feat_rng.bernoulli(p_f);
    for (int i = 0; i < g.n_nodes; ++i)
        for (int j = 0; j < d; ++j)
            if (masked[static_cast<std::size_t>(j)]) view.features.at(i, j) = 0.0;
    return view;
}

} // namespace werank::data
