#pragma once

#include <cstdint>
#include <random>

namespace mlbias {

// SplitMix64 finalizer; used to derive independent generator seeds from a
// base seed and a stream index.
constexpr std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

inline std::mt19937_64 make_rng(std::uint64_t seed, std::uint64_t stream = 0) {
  return std::mt19937_64(mix_seed(seed ^ mix_seed(stream + 0x5851F42D4C957F2DULL)));
}

// Uniform index in [0, n). std::uniform_int_distribution is not portable
// across standard libraries, so sampling is done by rejection on the raw
// 64-bit output.
inline std::size_t uniform_index(std::mt19937_64& rng, std::size_t n) {
  const std::uint64_t bound = static_cast<std::uint64_t>(n);
  const std::uint64_t limit = UINT64_MAX - (UINT64_MAX % bound);
  std::uint64_t r = rng();
  while (r >= limit) r = rng();
  return static_cast<std::size_t>(r % bound);
}

// Fisher-Yates with uniform_index, reproducible across platforms.
template <typename It>
void shuffle(It first, It last, std::mt19937_64& rng) {
  const auto n = static_cast<std::size_t>(last - first);
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = uniform_index(rng, i);
    std::swap(first[i - 1], first[j]);
  }
}

}  // namespace mlbias
