#include <benchmark/benchmark.h>

#include "phantom/assume.hpp"
#include "phantom/compare.hpp"
#include "phantom/rng.hpp"
#include "phantom/synth.hpp"

using namespace phantom;

namespace {

void BM_HenzeZirkler(benchmark::State& state) {
  const auto x = num::sample_mvn(num::SymMatrix::identity(state.range(1)), state.range(0), 5);
  for (auto _ : state) benchmark::DoNotOptimize(assume::henze_zirkler(x));
}
BENCHMARK(BM_HenzeZirkler)->Args({500, 5})->Args({401, 60})->Unit(benchmark::kMillisecond);

void BM_Linearity(benchmark::State& state) {
  const auto data = num::sample_factor_model(num::block_loadings(6, 10, 0.7), num::compound_symmetry(6, 0.2), 400,
                                             7, {1, 5});
  const auto x = data.as_double();
  for (auto _ : state) benchmark::DoNotOptimize(assume::linearity_diagnostics(x));
}
BENCHMARK(BM_Linearity)->Unit(benchmark::kMillisecond);

void BM_KruskalWallis(benchmark::State& state) {
  Rng rng(9);
  std::vector<std::vector<double>> groups(4);
  for (auto& g : groups)
    for (int i = 0; i < state.range(0); ++i) g.push_back(1 + static_cast<double>(rng.below(25)) / 5);
  for (auto _ : state) benchmark::DoNotOptimize(compare::kruskal_wallis(groups));
}
BENCHMARK(BM_KruskalWallis)->Arg(400);

}  // namespace
