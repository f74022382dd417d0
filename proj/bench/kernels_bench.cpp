// Serial reference vs OpenMP kernels. Run with OMP_NUM_THREADS set to the core count.

#include <benchmark/benchmark.h>

#include <numeric>
#include <random>

#include "systemmatch/distance.hpp"
#include "systemmatch/kernels.hpp"

using namespace systemmatch;
using kernels::Execution;

namespace {

Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal;
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = normal(rng);
    return m;
}

template <Execution E>
void BM_EuclideanCost(benchmark::State& state) {
    const auto n = state.range(0);
    auto a = random_matrix(n, 50, 1), b = random_matrix(n, 50, 2);
    for (auto _ : state) {
        benchmark::DoNotOptimize(kernels::euclidean_cost(a, b, E));
    }
    state.SetItemsProcessed(state.iterations() * n * n);
}

template <Execution E>
void BM_SwapCosts(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    auto pts = random_matrix(static_cast<Eigen::Index>(n), 10, 3);
    auto dist = kernels::euclidean_cost(pts, pts);
    std::vector<std::size_t> medoids{0, 1, 2, 3, 4}, candidates(n - 5);
    std::iota(candidates.begin(), candidates.end(), 5);
    auto nearest = kernels::nearest_two(dist, medoids);
    for (auto _ : state) {
        benchmark::DoNotOptimize(kernels::swap_costs(dist, medoids, candidates, nearest, E));
    }
}

template <Execution E>
void BM_PairwiseEmd(benchmark::State& state) {
    std::vector<ConditionDataset> sets;
    for (int i = 0; i < 6; ++i) {
        auto m = random_matrix(state.range(0), 20, 10 + i).cwiseAbs();
        std::vector<std::string> genes, cells;
        for (int g = 0; g < 20; ++g) genes.push_back("g" + std::to_string(g));
        for (Eigen::Index c = 0; c < m.rows(); ++c) cells.push_back("c" + std::to_string(c));
        sets.emplace_back("d" + std::to_string(i), CellExpressionMatrix(m, genes, cells, NormState::log_normalized));
    }
    auto spec = parse_metric("emdxlog");
    for (auto _ : state) {
        benchmark::DoNotOptimize(pairwise_distance_matrix(sets, sets, spec, {}, E));
    }
}

}

BENCHMARK(BM_EuclideanCost<Execution::serial>)->Arg(200)->Arg(1000);
BENCHMARK(BM_EuclideanCost<Execution::parallel>)->Arg(200)->Arg(1000);
BENCHMARK(BM_SwapCosts<Execution::serial>)->Arg(500)->Arg(2000);
BENCHMARK(BM_SwapCosts<Execution::parallel>)->Arg(500)->Arg(2000);
BENCHMARK(BM_PairwiseEmd<Execution::serial>)->Arg(100)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_PairwiseEmd<Execution::parallel>)->Arg(100)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
