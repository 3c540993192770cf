#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "n3l/greedy.hpp"
#include "n3l/kernels.hpp"
#include "n3l/lines.hpp"

using namespace n3l;

namespace {

std::vector<real> random_matrix(std::size_t size, std::uint32_t seed) {
    std::mt19937 rng(seed);
    std::normal_distribution<double> dist(0.0, 1.0);
    std::vector<real> out(size);
    for (auto& x : out) x = static_cast<real>(dist(rng));
    return out;
}

template <bool Parallel>
void bm_gemm(benchmark::State& state) {
    const int d = static_cast<int>(state.range(0));
    const auto a = random_matrix(std::size_t(d) * d, 1), b = random_matrix(std::size_t(d) * d, 2);
    std::vector<real> c(std::size_t(d) * d);
    for (auto _ : state) {
        if constexpr (Parallel) kernels::omp::gemm_nn(d, d, d, a.data(), b.data(), c.data(), false);
        else kernels::serial::gemm_nn(d, d, d, a.data(), b.data(), c.data(), false);
        benchmark::DoNotOptimize(c.data());
    }
    state.SetItemsProcessed(state.iterations() * 2 * std::int64_t(d) * d * d);
}

template <bool Parallel>
void bm_generate_pool(benchmark::State& state) {
    const LineTable table(static_cast<int>(state.range(0)));
    const int count = static_cast<int>(state.range(1));
    for (auto _ : state) {
        auto pool = Parallel ? generate_pool(table, count, 7) : generate_pool_serial(table, count, 7);
        benchmark::DoNotOptimize(pool.data());
    }
    state.SetItemsProcessed(state.iterations() * count);
}

}  // namespace

BENCHMARK(bm_gemm<false>)->Name("gemm_nn/serial")->Arg(64)->Arg(256)->Unit(benchmark::kMicrosecond);
BENCHMARK(bm_gemm<true>)->Name("gemm_nn/omp")->Arg(64)->Arg(256)->Unit(benchmark::kMicrosecond)->UseRealTime();
BENCHMARK(bm_generate_pool<false>)->Name("generate_pool/serial")->Args({8, 256})->Args({16, 64})->Unit(benchmark::kMillisecond);
BENCHMARK(bm_generate_pool<true>)->Name("generate_pool/omp")->Args({8, 256})->Args({16, 64})->Unit(benchmark::kMillisecond)->UseRealTime();

BENCHMARK_MAIN();
