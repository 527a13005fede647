#include <random>

#include <benchmark/benchmark.h>

#include "nml/config.hpp"
#include "nml/embedder.hpp"
#include "nml/interactions.hpp"
#include "nml/losses.hpp"
#include "nml/metrics.hpp"
#include "nml/train.hpp"

namespace {

Eigen::MatrixXd unit_rows(Eigen::Index n, Eigen::Index d, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  Eigen::MatrixXd z(n, d);
  for (Eigen::Index i = 0; i < z.size(); ++i) z.data()[i] = g(rng);
  z.rowwise().normalize();
  return z;
}

std::vector<nml::ClassId> labels(std::size_t n, std::size_t k) {
  std::vector<nml::ClassId> y;
  for (std::size_t i = 0; i < n; ++i) y.push_back(static_cast<nml::ClassId>(i / k));
  return y;
}

void BM_PairwiseDistances(benchmark::State& state) {
  const auto z = unit_rows(state.range(0), 32, 1);
  for (auto _ : state) benchmark::DoNotOptimize(nml::pairwise_distances(z));
}
BENCHMARK(BM_PairwiseDistances)->Arg(80)->Arg(256);

void BM_TsintLossAndBackward(benchmark::State& state) {
  const auto n = state.range(0);
  const auto z = unit_rows(n, 32, 2);
  const auto y = labels(static_cast<std::size_t>(n), 4);
  const auto m = nml::observed_masks(y);
  const auto d = nml::pairwise_distances(z);
  nml::SelectionState s;
  nml::update_cut(s, nml::positive_percentile(d, m.positive, 0.5));
  const auto sel = nml::selection_mask(d, m.positive, s);
  for (auto _ : state) {
    const auto l = nml::tsint_loss(d, sel, m.negative, 0.5);
    benchmark::DoNotOptimize(nml::distance_backward(z, d, l.grad));
  }
}
BENCHMARK(BM_TsintLossAndBackward)->Arg(80)->Arg(256);

void BM_EvaluateRetrieval(benchmark::State& state) {
  const auto n = state.range(0);
  const auto z = unit_rows(n, 32, 3);
  const auto y = labels(static_cast<std::size_t>(n), 10);
  for (auto _ : state) benchmark::DoNotOptimize(nml::evaluate_retrieval(z, y));
}
BENCHMARK(BM_EvaluateRetrieval)->Arg(500)->Arg(1000);

void BM_DeskTrainingRun(benchmark::State& state) {
  nml::RunConfig c;
  c.data.synthetic.dim = 256;
  c.data.synthetic.separation = 2.0;
  c.model.depth = 1;
  c.model.out_dim = 32;
  c.epochs = 5;
  c.lr = 0.3;
  c.noise = 0.5;
  const auto data = nml::prepare_data(c);
  for (auto _ : state) benchmark::DoNotOptimize(nml::run_train(c, data).final_metrics);
}
BENCHMARK(BM_DeskTrainingRun)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
