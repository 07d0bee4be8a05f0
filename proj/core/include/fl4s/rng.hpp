#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <utility>

namespace fl4s {

/// SplitMix64 generator. Every draw is computed with integer arithmetic or
/// from the top 53 bits of a 64-bit word, so a seed produces the same
/// sequence on every platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) noexcept : seed_(seed), state_(seed) {}

  /// Independent stream for a (seed, tag) pair, e.g. one per cluster.
  static Rng derive(std::uint64_t seed, std::uint64_t stream) noexcept;
  static Rng derive(std::uint64_t seed, std::string_view stream) noexcept;

  std::uint64_t seed() const noexcept { return seed_; }

  std::uint64_t next_u64() noexcept;
  /// Uniform in [0, 1).
  double uniform() noexcept;
  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [0, n). n must be > 0.
  std::uint64_t below(std::uint64_t n) noexcept;
  double normal() noexcept;
  double normal(double mean, double stddev) noexcept { return mean + stddev * normal(); }
  /// Poisson draw (inversion for small means, normal approximation above 500).
  std::uint64_t poisson(double mean) noexcept;

  template <typename T>
  void shuffle(std::span<T> items) noexcept {
    for (std::size_t i = items.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  std::uint64_t seed_;
  std::uint64_t state_;
};

std::uint64_t mix64(std::uint64_t x) noexcept;
std::uint64_t fnv1a64(std::string_view bytes) noexcept;

}  // namespace fl4s
