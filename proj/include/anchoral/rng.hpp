#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace anchoral {

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Derives an independent stream seed from a base seed and a tag path,
/// e.g. derive_seed(filter_seed, {round, class}).
inline std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> tags) {
  std::uint64_t h = splitmix64(base);
  for (auto t : tags) h = splitmix64(h ^ splitmix64(t + 0x632be59bd9b4e019ULL));
  return h;
}

// Stream tags.
inline constexpr std::uint64_t kFilterStream = 0xF1;
inline constexpr std::uint64_t kStrategyStream = 0x57;
inline constexpr std::uint64_t kInitStream = 0x11;
inline constexpr std::uint64_t kShuffleStream = 0x5A;

/// Uniform double in [0, 1) with 53 random bits; stable across standard libraries.
inline double uniform01(Rng &rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

/// Uniform integer in [0, n) by rejection; stable across standard libraries.
inline std::uint64_t uniform_index(Rng &rng, std::uint64_t n) {
  const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
  std::uint64_t r;
  do { r = rng(); } while (r >= limit);
  return r % n;
}

}  // namespace anchoral
