#include <benchmark/benchmark.h>

#include "phantom/cfa.hpp"
#include "phantom/efa.hpp"
#include "phantom/synth.hpp"

using namespace phantom;

namespace {

struct Fixture {
  num::SymMatrix r;
  cfa::CfaModel model;
};

// 6 factors x `per` items, sampled Likert data at n = 400.
Fixture make(int per) {
  const auto data = num::sample_factor_model(num::block_loadings(6, per, 0.7), num::compound_symmetry(6, 0.2), 400,
                                             11, {1, 5});
  Fixture f{num::correlation_matrix(data.as_double()), {}};
  f.model.factors = {"F1", "F2", "F3", "F4", "F5", "F6"};
  for (int i = 0; i < 6 * per; ++i) {
    f.model.items.push_back(data.items[static_cast<std::size_t>(i)]);
    f.model.assignment.push_back(i / per);
  }
  return f;
}

void BM_CfaFit(benchmark::State& state) {
  const auto f = make(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(cfa::fit_cfa(f.r, 400, f.model));
}
BENCHMARK(BM_CfaFit)->Arg(4)->Arg(10)->Unit(benchmark::kMillisecond);

void BM_MlGradient(benchmark::State& state) {
  const auto f = make(10);
  const cfa::MlDiscrepancy fn(f.r, f.model);
  const auto theta = fn.start();
  num::Vector g;
  for (auto _ : state) benchmark::DoNotOptimize(fn(theta, g));
}
BENCHMARK(BM_MlGradient);

void BM_Paf(benchmark::State& state) {
  const auto f = make(10);
  for (auto _ : state) benchmark::DoNotOptimize(efa::paf(f.r, 6));
}
BENCHMARK(BM_Paf)->Unit(benchmark::kMillisecond);

void BM_ObliqueRotation(benchmark::State& state) {
  const auto f = make(10);
  const auto unrotated = efa::paf(f.r, 6).loadings;
  for (auto _ : state) benchmark::DoNotOptimize(efa::rotate_oblique(unrotated));
}
BENCHMARK(BM_ObliqueRotation)->Unit(benchmark::kMillisecond);

void BM_RunEfa(benchmark::State& state) {
  const auto f = make(10);
  for (auto _ : state) benchmark::DoNotOptimize(efa::run_efa(f.r, 6));
}
BENCHMARK(BM_RunEfa)->Unit(benchmark::kMillisecond);

}  // namespace
