#include <benchmark/benchmark.h>

#include <bcap/model.hpp>
#include <bcap/rng.hpp>

using namespace bcap;

namespace {

WhitenedDataset make_data(int p, int n, int T, Rng& rng) {
  TimeSeriesDataset ds;
  ds.p = p;
  ds.q = 3;
  for (int i = 0; i < n; ++i) {
    ds.ids.push_back(std::to_string(i));
    ds.signals.push_back(gaussian_matrix(T, p, rng));
    Vector x(3);
    x << 1.0, draw_normal(rng), draw_normal(rng);
    ds.covariates.push_back(x);
  }
  return whiten(ds);
}

ExpandedState make_state(const WhitenedDataset& w, int d, Rng& rng) {
  ExpandedState s;
  s.u = gaussian_matrix(w.p(), d, rng);
  s.lambda = 0.3 * gaussian_matrix(w.n(), d, rng);
  s.b = 0.3 * gaussian_matrix(d, w.q(), rng);
  s.tau = -0.5;
  return s;
}

void bm_log_posterior(benchmark::State& state) {
  Rng rng(7);
  const int p = int(state.range(0));
  const WhitenedDataset w = make_data(p, 50, 40, rng);
  const ExpandedState s = make_state(w, 2, rng);
  const Hyperparameters h = Hyperparameters::defaults(p);
  for (auto _ : state) benchmark::DoNotOptimize(log_posterior(s, w, h));
}

void bm_log_posterior_grad(benchmark::State& state) {
  Rng rng(8);
  const int p = int(state.range(0));
  const WhitenedDataset w = make_data(p, 50, 40, rng);
  const ExpandedState s = make_state(w, 2, rng);
  const Hyperparameters h = Hyperparameters::defaults(p);
  ExpandedState g;
  for (auto _ : state)
    benchmark::DoNotOptimize(log_posterior_grad(s, w, h, &g));
}

}  // namespace

BENCHMARK(bm_log_posterior)->Arg(5)->Arg(15);
BENCHMARK(bm_log_posterior_grad)->Arg(5)->Arg(15);

BENCHMARK_MAIN();
