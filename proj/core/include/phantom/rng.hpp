#pragma once

#include <cstdint>
#include <random>

namespace phantom {

/// Portable seeded generator.
///
/// The raw engine is std::mt19937_64, whose output sequence is fixed by the
/// standard. Uniform and normal deviates are derived here rather than through
/// <random> distributions, which are implementation-defined, so a seed yields
/// the same stream on every platform.
///
/// Streams: `Rng(seed, stream)` seeds the engine with
/// splitmix64(seed ^ splitmix64(stream)), giving independent substreams for
/// parallel work (one per request, per Monte Carlo replicate, per random start).
class Rng {
 public:
  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0);

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform();

  /// Uniform integer in [0, bound). bound must be > 0.
  std::uint64_t below(std::uint64_t bound);

  /// Standard normal (Marsaglia polar method).
  double normal();

  /// Chi-square with integer degrees of freedom (sum of squared normals).
  double chi_square(int df);

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

std::uint64_t splitmix64(std::uint64_t x);

}  // namespace phantom
