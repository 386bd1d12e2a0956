#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numbers>

namespace amc {

/// SplitMix64 finalizer.
constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Folds a tuple of integers into a single 64-bit stream key.
constexpr std::uint64_t derive_key(std::initializer_list<std::uint64_t> parts) noexcept {
  std::uint64_t k = 0x6A09E667F3BCC908ULL;
  for (auto p : parts) k = splitmix64(k ^ splitmix64(p));
  return k;
}

/// Counter-based generator.
///
/// A stream is identified by a key derived from an arbitrary tuple such as
/// (master_seed, frame_index, user, scatterer). Draw i of the stream is
/// splitmix64(key + i * golden), so any stream can be reproduced without
/// touching any other stream. Uniform doubles take the top 53 bits; normal
/// variates use the Box-Muller transform, one pair per call.
class CounterRng {
public:
  explicit CounterRng(std::uint64_t key) noexcept : state_(key) {}
  CounterRng(std::initializer_list<std::uint64_t> parts) noexcept : state_(derive_key(parts)) {}

  std::uint64_t next_u64() noexcept {
    state_ += 0x9E3779B97F4A7C15ULL;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  /// Uniform on [0, 1).
  double uniform() noexcept { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Uniform on [lo, hi).
  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

  /// Uniform integer on [0, n). Uses rejection to avoid modulo bias.
  std::uint64_t below(std::uint64_t n) noexcept {
    if (n <= 1) return 0;
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
    std::uint64_t v;
    do {
      v = next_u64();
    } while (v >= limit);
    return v % n;
  }

  /// Standard normal N(0, 1).
  double normal() noexcept {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double phi = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(phi);
    has_spare_ = true;
    return r * std::cos(phi);
  }

private:
  std::uint64_t state_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

// Stream tags, so that independent uses of the same seed never collide.
namespace stream {
inline constexpr std::uint64_t kGeometry = 0x47454F4D;
inline constexpr std::uint64_t kScatterAngle = 0x53434154;
inline constexpr std::uint64_t kScatterGain = 0x4741494E;
inline constexpr std::uint64_t kMonteCarlo = 0x4D434245;
inline constexpr std::uint64_t kInit = 0x494E4954;
inline constexpr std::uint64_t kShuffle = 0x53485546;
inline constexpr std::uint64_t kSplit = 0x53504C54;
inline constexpr std::uint64_t kExplore = 0x45585052;
inline constexpr std::uint64_t kReplay = 0x5245504C;
}  // namespace stream

}  // namespace amc
