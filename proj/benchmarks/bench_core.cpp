#include <benchmark/benchmark.h>

#include "werank/linalg.hpp"
#include "werank/losses.hpp"
#include "werank/rng.hpp"

using werank::Rng;
using werank::linalg::DenseMatrix;

namespace {

DenseMatrix random_square(int d, std::uint64_t seed) {
    Rng rng(seed);
    DenseMatrix m(d, d);
    const double std = 1.0 / std::sqrt(static_cast<double>(d));
    for (double& v : m.values) v = std * rng.normal();
    return m;
}

} // namespace

static void BM_werank_eval(benchmark::State& state) {
    const int d = static_cast<int>(state.range(0));
    werank::losses::WERankConfig cfg;
    cfg.alphas = {1.0};
    cfg.normalize_by_d2 = false;
    const std::vector<DenseMatrix> weights = {random_square(d, 42)};
    for (auto _ : state) {
        benchmark::DoNotOptimize(werank::losses::werank_value(weights, cfg));
    }
    state.SetComplexityN(d);
}
BENCHMARK(BM_werank_eval)->RangeMultiplier(2)->Range(64, 512)->Complexity(benchmark::oNCubed);

static void BM_matmul(benchmark::State& state) {
    const int d = static_cast<int>(state.range(0));
    auto a = random_square(d, 1);
    auto b = random_square(d, 2);
    for (auto _ : state) {
        benchmark::DoNotOptimize(werank::linalg::matmul(a, b));
    }
    state.SetComplexityN(d);
}
BENCHMARK(BM_matmul)->RangeMultiplier(2)->Range(32, 256)->Complexity(benchmark::oNCubed);

static void BM_svd(benchmark::State& state) {
    const int d = static_cast<int>(state.range(0));
    auto a = random_square(d, 3);
    for (auto _ : state) {
        benchmark::DoNotOptimize(werank::linalg::svd(a));
    }
}
BENCHMARK(BM_svd)->RangeMultiplier(2)->Range(8, 64);

static void BM_covariance(benchmark::State& state) {
    const int d = static_cast<int>(state.range(0));
    Rng rng(4);
    DenseMatrix z(1000, d);
    for (double& v : z.values) v = rng.normal();
    for (auto _ : state) {
        benchmark::DoNotOptimize(werank::linalg::covariance(z));
    }
}
BENCHMARK(BM_covariance)->RangeMultiplier(2)->Range(8, 64);

BENCHMARK_MAIN();
