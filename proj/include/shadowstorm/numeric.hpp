#pragma once

#include <array>
#include <cstdint>
#include <limits>
#include <span>

namespace shadowstorm {

/// Correctly rounded sum of `values` (Shewchuk partials). The result does not
/// depend on the order of the inputs.
double exact_sum(std::span<const double> values);

/// SplitMix64 finalizer; used for seeding and for deriving sub-stream seeds.
std::uint64_t splitmix64(std::uint64_t& state);

/// Deterministically combines a seed with a list of stream labels.
std::uint64_t derive_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> labels);

/**
 * xoshiro256** 1.0 (Blackman and Vigna). State is filled from the seed with
 * four SplitMix64 outputs. `uniform()` takes the top 53 bits of a draw and
 * scales by 2^-53, giving doubles in [0, 1). Outputs are identical on every
 * platform.
 */
class Xoshiro256 {
 public:
  using result_type = std::uint64_t;

  explicit Xoshiro256(std::uint64_t seed);

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()();
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Integer in [lo, hi] inclusive.
  int uniform_int(int lo, int hi);

 private:
  std::array<std::uint64_t, 4> s_;
};

}  // namespace shadowstorm
