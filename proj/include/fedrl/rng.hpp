#pragma once

#include <cstdint>
#include <limits>
#include <random>

namespace fedrl {

/// SplitMix64 finalizer; used to derive independent seeds from (root, tag...) tuples.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t root) noexcept { return mix64(root); }

template <typename... Tags>
constexpr std::uint64_t derive_seed(std::uint64_t root, std::uint64_t tag, Tags... rest) noexcept {
  return derive_seed(mix64(root ^ mix64(tag)), static_cast<std::uint64_t>(rest)...);
}

/// Purposes of the named random streams. A stream is identified by
/// (root seed, purpose, index...) so that no consumer perturbs another.
enum class Stream : std::uint64_t {
  Environment = 1,
  Policy = 2,
  Evaluation = 3,
  Server = 4,
  Scenario = 5,
  Initialization = 6,
};

/// Seeded random stream. Draws are computed from raw engine output so the
/// sequence is identical across standard library implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  template <typename... Tags>
  static Rng named(std::uint64_t root, Stream purpose, Tags... index) {
    return Rng(derive_seed(root, static_cast<std::uint64_t>(purpose),
                           static_cast<std::uint64_t>(index)...));
  }

  /// Uniform double in [0, 1) with 53 bits of precision.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  /// Uniform integer in [0, n). n must be > 0.
  std::uint64_t below(std::uint64_t n) {
    // Lemire-style rejection keeps the result unbiased.
    const std::uint64_t threshold = (std::numeric_limits<std::uint64_t>::max() - n + 1) % n;
    for (;;) {
      const std::uint64_t r = engine_();
      if (r >= threshold) return r % n;
    }
  }

  bool bernoulli(double p) { return uniform() < p; }

  std::uint64_t next_seed() { return engine_(); }

  bool operator==(const Rng&) const = default;

 private:
  std::mt19937_64 engine_;
};

}  // namespace fedrl
