// OpenMP kernels against their serial reference versions.

#include <benchmark/benchmark.h>

#include "rfdeep/forest.hpp"
#include "rfdeep/parallel.hpp"
#include "rfdeep/rng.hpp"
#include "rfdeep/synthetic.hpp"

using namespace rfdeep;

namespace {

struct Data {
  Matrix X;
  std::vector<int> y;
};

// 129 columns, the width of a deep feature row.
const Data& data() {
  static const Data d = [] {
    Data out{Matrix(800, 129), std::vector<int>(800)};
    SplitMix64 rng(1);
    for (int i = 0; i < out.X.rows; ++i) {
      out.y[i] = i % 2;
      for (int j = 0; j < out.X.cols; ++j) out.X.at(i, j) = rng.normal() + (j < 8 ? 0.7 * out.y[i] : 0.0);
    }
    return out;
  }();
  return d;
}

ForestParams params() {
  ForestParams p;
  p.n_trees = 64;
  return p;
}

void BM_FitForest(benchmark::State& state) {
  set_threads(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(fit_forest(data().X, data().y, params(), 7));
}

void BM_FitForestSerial(benchmark::State& state) {
  for (auto _ : state) benchmark::DoNotOptimize(serial::fit_forest(data().X, data().y, params(), 7));
}

void BM_PredictOod(benchmark::State& state) {
  set_threads(static_cast<int>(state.range(0)));
  const Forest f = fit_forest(data().X, data().y, params(), 7);
  for (auto _ : state) benchmark::DoNotOptimize(predict_ood(f, data().X));
}

void BM_PredictOodSerial(benchmark::State& state) {
  const Forest f = fit_forest(data().X, data().y, params(), 7);
  for (auto _ : state) benchmark::DoNotOptimize(serial::predict_ood(f, data().X));
}

void BM_ToyEncode(benchmark::State& state) {
  set_threads(static_cast<int>(state.range(0)));
  CohortSpec spec;
  spec.cohort_name = "bench";
  const SyntheticScan scan = generate_scan(spec, 0);
  const ToyEncoderConfig cfg;
  for (auto _ : state) benchmark::DoNotOptimize(toy_encode(scan.volume, cfg));
}

}  // namespace

BENCHMARK(BM_FitForest)->Arg(1)->Arg(4)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_FitForestSerial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_PredictOod)->Arg(1)->Arg(4)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_PredictOodSerial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ToyEncode)->Arg(1)->Arg(4)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
