#pragma once

#include <cstdint>
#include <random>

namespace tumorcal {

using Rng = std::mt19937_64;

/// Purpose of a derived stream; keeps streams for different phases of one step disjoint.
enum class StreamTag : std::uint32_t { initialize = 1, resample = 2, mutate = 3, generate = 4, predictive = 5 };

/// Independent generator for (seed, step, index, tag). Any worker can rebuild the stream of any
/// particle, so results do not depend on how particles are split across threads.
inline Rng make_stream(std::uint64_t seed, std::uint64_t step, std::uint64_t index, StreamTag tag) {
  auto lo = [](std::uint64_t v) { return static_cast<std::uint32_t>(v & 0xffffffffu); };
  auto hi = [](std::uint64_t v) { return static_cast<std::uint32_t>(v >> 32); };
  std::seed_seq seq{lo(seed), hi(seed), lo(step), hi(step), lo(index), hi(index), static_cast<std::uint32_t>(tag)};
  return Rng(seq);
}

}  // namespace tumorcal
