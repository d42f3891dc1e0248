#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

namespace nsg {

/// Mixes a master seed with a stream id into an independent 64-bit seed
/// (SplitMix64 finalizer applied to a counter). Every random stream in the
/// project is derived this way so results never depend on call order
/// across streams.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

/// Portable random source. std::mt19937_64 is fully specified by the
/// standard, but the std distributions are not, so the sampling helpers
/// here are implemented on top of raw engine output.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform integer in [0, n). n must be positive.
  std::size_t uniform_index(std::size_t n);

  /// Uniform double in [0, 1) with 53 bits of mantissa.
  double uniform01();

  bool bernoulli(double p) { return uniform01() < p; }

  /// Standard normal via Box-Muller (no cached second value).
  double normal();

  /// Draws an index with probability proportional to weights (non-negative).
  std::size_t categorical(std::span<const double> weights);

  template <typename T>
  void shuffle(std::vector<T>& values) {
    for (std::size_t i = values.size(); i > 1; --i) {
      std::swap(values[i - 1], values[uniform_index(i)]);
    }
  }

  /// Child generator for a named sub-stream.
  Rng fork(std::uint64_t stream) { return Rng(derive_seed(next_u64(), stream)); }

 private:
  std::mt19937_64 engine_;
};

}  // namespace nsg
