#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace jam {

/// Counter-based generator: draw n is splitmix64(key + n * golden), so a
/// sequence depends only on (seed, stream) and never on the standard
/// library's distribution implementations.
class SeededRng {
 public:
  explicit SeededRng(std::uint64_t seed, std::uint64_t stream = 0) noexcept;

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t counter() const noexcept { return counter_; }

  std::uint64_t next_u64() noexcept;
  /// Uniform in [0, 1) with 53 random bits.
  double uniform() noexcept;
  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [0, n). n must be > 0.
  std::uint64_t uniform_index(std::uint64_t n) noexcept;
  /// Standard normal via Box-Muller (two uniforms per draw).
  double normal() noexcept;

  /// Independent generator for a named sub-stream; does not advance this one.
  SeededRng fork(std::uint64_t stream) const noexcept;

  template <typename T>
  void shuffle(std::span<T> values) noexcept {
    for (std::size_t i = values.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(uniform_index(i));
      std::swap(values[i - 1], values[j]);
    }
  }
  template <typename T>
  void shuffle(std::vector<T>& values) noexcept {
    shuffle(std::span<T>(values));
  }

 private:
  std::uint64_t seed_;
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

std::uint64_t splitmix64(std::uint64_t x) noexcept;

/// Deterministic 64-bit mix of several values (used to derive per-record salts).
std::uint64_t hash_combine(std::uint64_t a, std::uint64_t b) noexcept;

}  // namespace jam
