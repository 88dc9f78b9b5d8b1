// Serial reference vs OpenMP path for the hot kernels.

#include <benchmark/benchmark.h>

#include <random>

#include "rulgp/kernels.hpp"
#include "rulgp/simgen.hpp"

using namespace rulgp;

namespace {

Eigen::MatrixXd random_features(Eigen::Index n, Eigen::Index d) {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> g;
  Eigen::MatrixXd x(n, d);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < d; ++j) x(i, j) = g(rng);
  return x;
}

Execution policy(const benchmark::State& state) {
  return state.range(1) ? Execution::Parallel : Execution::Serial;
}

void BM_Covariance(benchmark::State& state) {
  const auto x = random_features(state.range(0), 8);
  const Eigen::VectorXd l = Eigen::VectorXd::Constant(8, 2.0);
  for (auto _ : state) benchmark::DoNotOptimize(kernels::ard_exponential_symmetric(x, 1.0, l, policy(state)));
}

void BM_LengthScaleTraces(benchmark::State& state) {
  const auto x = random_features(state.range(0), 8);
  const Eigen::VectorXd l = Eigen::VectorXd::Constant(8, 2.0);
  const auto k = kernels::ard_exponential_symmetric(x, 1.0, l, Execution::Serial);
  const Eigen::MatrixXd w = k * 0.5;
  for (auto _ : state) benchmark::DoNotOptimize(kernels::ard_length_scale_traces(x, k, w, l, policy(state)));
}

void BM_FitEcmBatch(benchmark::State& state) {
  const auto profile = default_profile();
  const auto cell = simulate_cell(profile, Protocol::nca_like(), 600, "bench");
  std::vector<RelaxationCurve> curves;
  for (const auto& c : cell.cycles) {
    if (static_cast<long>(curves.size()) == state.range(0)) break;
    curves.push_back(c.relaxation);
  }
  for (auto _ : state) benchmark::DoNotOptimize(kernels::fit_ecm_batch(curves, policy(state)));
}

}  // namespace

BENCHMARK(BM_Covariance)->ArgsProduct({{250, 1000}, {0, 1}})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_LengthScaleTraces)->ArgsProduct({{250, 1000}, {0, 1}})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_FitEcmBatch)->ArgsProduct({{64, 256}, {0, 1}})->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
