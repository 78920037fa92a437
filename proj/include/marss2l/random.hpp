#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

namespace marss2l {

// std::*_distribution output is implementation-defined; these helpers only
// depend on the engine's bit stream so fixtures are identical across toolchains.
using Rng = std::mt19937_64;

inline double uniform01(Rng& rng) { return double(rng() >> 11) * 0x1.0p-53; }
inline double uniform(Rng& rng, double lo, double hi) { return lo + (hi - lo) * uniform01(rng); }
inline bool bernoulli(Rng& rng, double p) { return uniform01(rng) < p; }

inline std::size_t uniform_index(Rng& rng, std::size_t n) {
  return n == 0 ? 0 : std::size_t(uniform01(rng) * double(n)) % n;
}

inline double normal(Rng& rng, double mean = 0.0, double sd = 1.0) {
  double u1 = uniform01(rng), u2 = uniform01(rng);
  if (u1 < 1e-300) u1 = 1e-300;
  return mean + sd * std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

inline double log_uniform(Rng& rng, double lo, double hi) {
  return std::exp(uniform(rng, std::log(lo), std::log(hi)));
}

/// Independent stream derived from a base seed and a tuple of indices (splitmix64 mixing).
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) {
  auto mix = [](std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  };
  return mix(mix(mix(seed) ^ a) ^ (b * 0x2545f4914f6cdd1dull));
}

}  // namespace marss2l
