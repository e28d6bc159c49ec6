#pragma once

#include <cstdint>
#include <random>

namespace driftprobe::util {

// Engine used by every resampling routine. mt19937_64's output sequence is
// fixed by the standard, so seed -> result is stable across toolchains as long
// as we avoid the implementation-defined std:: distributions.
using Engine = std::mt19937_64;

// Uniform integer in [0, n) by rejection, identical on every platform.
inline std::uint64_t uniform_index(Engine& rng, std::uint64_t n) {
  if (n <= 1) return 0;
  const std::uint64_t limit = Engine::max() - (Engine::max() % n);
  std::uint64_t x;
  do {
    x = rng();
  } while (x >= limit);
  return x % n;
}

// Uniform double in [0, 1) from the top 53 bits.
inline double uniform_unit(Engine& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// SplitMix64 finaliser; derives independent child seeds from (seed, stream).
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace driftprobe::util
