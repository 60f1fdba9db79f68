#pragma once

#include <cstdint>
#include <limits>

namespace gravem {

/// SplitMix64 finalizer. Bijective on 64-bit words.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Derives an independent stream key from a root seed and a tuple of counters.
/// Keys depend only on their arguments, so work can be scheduled in any order.
constexpr std::uint64_t derive_key(std::uint64_t root) noexcept { return mix64(root + 0x9e3779b97f4a7c15ULL); }

template <class... Rest>
constexpr std::uint64_t derive_key(std::uint64_t root, std::uint64_t first, Rest... rest) noexcept {
  return derive_key(mix64(root + 0x9e3779b97f4a7c15ULL) ^ mix64(first + 0x632be59bd9b4e019ULL), static_cast<std::uint64_t>(rest)...);
}

/// A SplitMix64 generator positioned at a derived key. Satisfies
/// UniformRandomBitGenerator so it plugs into <random> distributions.
class Substream {
public:
  using result_type = std::uint64_t;

  constexpr explicit Substream(std::uint64_t key) noexcept : state_(key) {}

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

  constexpr result_type operator()() noexcept {
    state_ += 0x9e3779b97f4a7c15ULL;
    return mix64(state_);
  }

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform() noexcept { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

private:
  std::uint64_t state_;
};

}  // namespace gravem
