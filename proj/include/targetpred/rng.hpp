#pragma once

#include <array>
#include <cstdint>
#include <limits>
#include <random>

namespace targetpred {

/// SplitMix64 step. Used both as a seed expander and to derive stream keys.
constexpr std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Combine a seed with stream coordinates into a new, well-mixed key.
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0,
                                    std::uint64_t c = 0) {
  std::uint64_t st = seed;
  std::uint64_t k = splitmix64(st);
  st = k ^ (a + 0x632be59bd9b4e019ULL);
  k = splitmix64(st);
  st = k ^ (b + 0x85157af5ULL);
  k = splitmix64(st);
  st = k ^ (c + 0x2545f4914f6cdd1dULL);
  return splitmix64(st);
}

/// xoshiro256** generator with a splittable seeding scheme.
///
/// `Rng::stream(seed, i, j)` gives a generator whose output depends only on
/// (seed, i, j), so per-draw / per-subject streams are independent of the
/// order in which they are consumed. Satisfies UniformRandomBitGenerator, so
/// the standard distributions can be used on it directly.
class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t seed = 0) {
    std::uint64_t st = seed;
    for (auto& w : s_) w = splitmix64(st);
  }

  static Rng stream(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0, std::uint64_t c = 0) {
    return Rng(derive_seed(seed, a, b, c));
  }

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() {
    const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  /// Uniform on the open interval (0, 1).
  double uniform() { return (static_cast<double>((*this)() >> 11) + 0.5) * 0x1.0p-53; }

  double normal() { return normal_(*this); }

  /// Gamma with shape/rate parametrization.
  double gamma(double shape, double rate) {
    return std::gamma_distribution<double>(shape, 1.0 / rate)(*this);
  }

  double chi_squared(double dof) { return gamma(0.5 * dof, 0.5); }

  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) { return std::uniform_int_distribution<std::uint64_t>(0, n - 1)(*this); }

 private:
  static constexpr std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

  std::array<std::uint64_t, 4> s_{};
  std::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace targetpred
