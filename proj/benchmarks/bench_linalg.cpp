#include <benchmark/benchmark.h>

#include <bcap/linalg.hpp>
#include <bcap/rng.hpp>

using namespace bcap;

namespace {

Matrix random_spd(int p, Rng& rng) {
  Matrix g = gaussian_matrix(p, p, rng);
  return g * g.transpose() + 0.1 * double(p) * Matrix::Identity(p, p);
}

void bm_sym_eigen(benchmark::State& state) {
  Rng rng(42);
  const Matrix a = random_spd(int(state.range(0)), rng);
  for (auto _ : state) benchmark::DoNotOptimize(sym_eigen(a));
}

void bm_spd_log(benchmark::State& state) {
  Rng rng(43);
  const SpdMatrix a(random_spd(int(state.range(0)), rng));
  for (auto _ : state) benchmark::DoNotOptimize(spd_function(a, SpdFn::Log));
}

void bm_polar_factor(benchmark::State& state) {
  Rng rng(44);
  const Matrix u = gaussian_matrix(int(state.range(0)), 2, rng);
  for (auto _ : state) benchmark::DoNotOptimize(polar_factor(u));
}

void bm_tangent_map(benchmark::State& state) {
  Rng rng(45);
  const int p = int(state.range(0));
  const SpdMatrix sigma(random_spd(p, rng));
  const Matrix ref = spd_function(SpdMatrix(random_spd(p, rng)), SpdFn::InvSqrt);
  for (auto _ : state) benchmark::DoNotOptimize(tangent_map(sigma, ref));
}

}  // namespace

BENCHMARK(bm_sym_eigen)->Arg(5)->Arg(15)->Arg(50);
BENCHMARK(bm_spd_log)->Arg(5)->Arg(15)->Arg(50);
BENCHMARK(bm_polar_factor)->Arg(5)->Arg(15)->Arg(50);
BENCHMARK(bm_tangent_map)->Arg(5)->Arg(15);
