#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace mffals {

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Derives an independent substream seed from a base seed and a path of tags,
/// e.g. derive_seed(run_seed, {kIterationTag, t}).
inline std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> path) {
  std::uint64_t h = splitmix64(base);
  for (std::uint64_t p : path) h = splitmix64(h ^ splitmix64(p + 0x632BE59BD9B4E019ULL));
  return h;
}

namespace seed_tag {
inline constexpr std::uint64_t kInitDesign = 1;
inline constexpr std::uint64_t kInitSim = 2;
inline constexpr std::uint64_t kIterationSim = 3;
inline constexpr std::uint64_t kCandidates = 4;
inline constexpr std::uint64_t kAcquisition = 5;
inline constexpr std::uint64_t kModelFit = 6;
inline constexpr std::uint64_t kValidation = 7;
inline constexpr std::uint64_t kTurboRestart = 8;
inline constexpr std::uint64_t kProbe = 9;
}  // namespace seed_tag

}  // namespace mffals
