#include <benchmark/benchmark.h>

#include "phantom/linalg.hpp"
#include "phantom/rng.hpp"
#include "phantom/synth.hpp"

using namespace phantom;
using num::Index;

namespace {

num::SymMatrix random_correlation(Index p, std::uint64_t seed) {
  Rng rng(seed);
  num::Matrix a(p, p + 5);
  for (Index i = 0; i < a.rows(); ++i)
    for (Index j = 0; j < a.cols(); ++j) a(i, j) = rng.normal();
  return num::cov_to_cor(num::SymMatrix(a * a.transpose()));
}

void BM_EigenSym(benchmark::State& state) {
  const auto m = random_correlation(state.range(0), 1);
  for (auto _ : state) benchmark::DoNotOptimize(num::eigen_sym(m));
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_EigenSym)->Arg(6)->Arg(42)->Arg(60)->Arg(102)->Complexity(benchmark::oNCubed);

void BM_CorrelationMatrix(benchmark::State& state) {
  const auto data = num::sample_mvn(num::SymMatrix::identity(state.range(0)), 400, 2);
  for (auto _ : state) benchmark::DoNotOptimize(num::correlation_matrix(data));
}
BENCHMARK(BM_CorrelationMatrix)->Arg(60)->Arg(102);

void BM_InverseSpd(benchmark::State& state) {
  const auto m = random_correlation(state.range(0), 3);
  for (auto _ : state) benchmark::DoNotOptimize(num::inverse_spd(m));
}
BENCHMARK(BM_InverseSpd)->Arg(60)->Arg(102);

}  // namespace
