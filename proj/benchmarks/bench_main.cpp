#include <benchmark/benchmark.h>

#include "domino/gp.hpp"
#include "domino/magma.hpp"
#include "domino/series.hpp"
#include "domino/walk.hpp"

using namespace domino;

namespace {

series::Dataset dataset(std::size_t count, std::size_t n) {
  series::SyntheticSpec spec;
  spec.seed = 99;
  return series::generate_synthetic(spec, series::make_grid(0.0, 1.0, n), count);
}

const gp::KernelParams kKernel{4.0, 6.0, std::nullopt, 0.5};

void BM_KernelMatrix(benchmark::State& state) {
  const auto n = state.range(0);
  const Eigen::VectorXd t = Eigen::VectorXd::LinSpaced(n, 0.0, double(n - 1));
  for (auto _ : state) benchmark::DoNotOptimize(gp::kernel_matrix(kKernel, t, t));
}
BENCHMARK(BM_KernelMatrix)->Arg(50)->Arg(250);

void BM_Factorize(benchmark::State& state) {
  const auto n = state.range(0);
  const Eigen::VectorXd t = Eigen::VectorXd::LinSpaced(n, 0.0, double(n - 1));
  Eigen::MatrixXd k = gp::kernel_matrix(kKernel, t, t);
  k.diagonal().array() += kKernel.noise_var;
  for (auto _ : state) benchmark::DoNotOptimize(gp::factorize_spd(k));
}
BENCHMARK(BM_Factorize)->Arg(50)->Arg(250);

void BM_Objective(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto d = dataset(2, n);
  gp::FitProblem p{d.grid().points(), d[0].values, {}, {}};
  for (auto _ : state) benchmark::DoNotOptimize(gp::evaluate_objective(p, kKernel, true));
}
BENCHMARK(BM_Objective)->Arg(50)->Arg(250);

void BM_EStep(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto d = dataset(9, n);
  const std::vector<gp::KernelParams> ki(9, gp::KernelParams{1.0, 3.0, std::nullopt, 0.3});
  for (auto _ : state) benchmark::DoNotOptimize(magma::e_step(d, kKernel, ki));
}
BENCHMARK(BM_EStep)->Arg(50)->Arg(250);

void BM_TrainDomino(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto d = dataset(10, n);
  std::vector<Eigen::VectorXd> paths;
  for (const auto& s : d.series()) paths.push_back(s.values);
  const walk::SampleBank bank(d.grid(), std::move(paths), 0.5);
  std::uint64_t seed = 0;
  for (auto _ : state) benchmark::DoNotOptimize(walk::train_domino(bank, walk::DominoConfig{}, ++seed));
}
BENCHMARK(BM_TrainDomino)->Arg(50)->Arg(250);

}  // namespace
BENCHMARK_MAIN();
