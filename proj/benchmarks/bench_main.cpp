#include <random>
#include <vector>

#include <benchmark/benchmark.h>

#include "condcls/clustering.hpp"
#include "condcls/compressor.hpp"
#include "condcls/linalg.hpp"
#include "condcls/router.hpp"

using condcls::DenseMatrix;

namespace {

DenseMatrix random_symmetric(std::size_t n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unif(-1.0, 1.0);
    DenseMatrix m(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i; j < n; ++j) m.at(i, j) = m.at(j, i) = unif(rng);
    return m;
}

condcls::clustering::IndicatorMatrix noisy_indicators(std::size_t K, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::exponential_distribution<double> expd(1.0);
    condcls::clustering::IndicatorMatrix ind;
    ind.num_classes = K;
    ind.vectors = DenseMatrix(K, K);
    for (std::size_t i = 0; i < K; ++i) {
        double sum = 0.0;
        std::vector<double> row(K);
        for (double& v : row) {
            v = expd(rng);
            sum += v;
        }
        row[i] += 3.0;  // self mass keeps the rows distinguishable
        sum += 3.0;
        for (std::size_t j = 0; j < K; ++j) ind.vectors.at(i, j) = row[j] / sum;
    }
    return ind;
}

void BM_JacobiEig(benchmark::State& state) {
    const DenseMatrix m = random_symmetric(static_cast<std::size_t>(state.range(0)), 1);
    for (auto _ : state) benchmark::DoNotOptimize(condcls::linalg::symmetric_eig(m));
}
BENCHMARK(BM_JacobiEig)->Arg(16)->Arg(32)->Arg(64)->Arg(100);

void BM_KMeans(benchmark::State& state) {
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    DenseMatrix pts(100, 6);
    for (std::size_t i = 0; i < 100; ++i)
        for (std::size_t d = 0; d < 6; ++d) pts.at(i, d) = unif(rng);
    for (auto _ : state) benchmark::DoNotOptimize(condcls::linalg::kmeans(pts, 6, 0));
}
BENCHMARK(BM_KMeans);

void BM_AssignClusters(benchmark::State& state) {
    const auto ind = noisy_indicators(static_cast<std::size_t>(state.range(0)), 3);
    for (auto _ : state)
        benchmark::DoNotOptimize(condcls::clustering::assign_clusters(ind, std::nullopt, 0));
}
BENCHMARK(BM_AssignClusters)->Arg(50)->Arg(100)->Unit(benchmark::kMillisecond);

void BM_ModelFlops(benchmark::State& state) {
    const auto ir = condcls::compressor::resnet18();
    for (auto _ : state) benchmark::DoNotOptimize(condcls::compressor::flops(ir));
}
BENCHMARK(BM_ModelFlops);

void BM_PlanDeepestRung(benchmark::State& state) {
    const auto ir = condcls::compressor::resnet18();
    for (auto _ : state)
        benchmark::DoNotOptimize(condcls::compressor::plan(ir, "L44", 2, 0.25));
}
BENCHMARK(BM_PlanDeepestRung);

void BM_Activate(benchmark::State& state) {
    const auto cm = condcls::router::confusion_matrix(
        {{0, 0}, {0, 0}, {0, 1}, {1, 1}, {1, 1}, {2, 2}, {2, 2}, {1, 2}, {3, 3}, {3, 3},
         {4, 4}, {4, 4}, {5, 5}, {5, 5}, {4, 5}},
        6);
    const condcls::router::ClusterConfidence v{{0.35, 0.25, 0.15, 0.1, 0.08, 0.07}};
    for (auto _ : state) benchmark::DoNotOptimize(condcls::router::activate(v, cm, 0.9));
}
BENCHMARK(BM_Activate);

}  // namespace

BENCHMARK_MAIN();
