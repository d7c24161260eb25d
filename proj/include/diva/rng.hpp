#pragma once

#include <cstdint>
#include <random>

namespace diva {

using Rng = std::mt19937_64;

/// SplitMix64 finalizer; a bijective 64-bit mixer.
constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Independent stream for (seed, counter). Streams for distinct counters do
/// not depend on the order in which they are created.
inline Rng derive_stream(std::uint64_t seed, std::uint64_t counter) {
  return Rng(splitmix64(splitmix64(seed) ^ splitmix64(counter + 0x632be59bd9b4e019ULL)));
}

/// Named sub-streams so that unrelated consumers of one seed never overlap.
enum class StreamTag : std::uint64_t {
  corpus = 1,
  split = 2,
  simulate = 3,
  init = 4,
  batches = 5,
  masking = 6,
  dropout = 7,
  latent_noise = 8,
};

inline Rng derive_stream(std::uint64_t seed, StreamTag tag, std::uint64_t counter = 0) {
  return derive_stream(splitmix64(seed ^ (static_cast<std::uint64_t>(tag) << 56)), counter);
}

}  // namespace diva
