#pragma once

#include <cstdint>
#include <random>

namespace gscaec {

/// Independent sub-streams derived from one user seed.
enum class Stream : std::uint64_t {
  plant = 1,
  far_end = 2,
  noise = 3,
  interferer = 4,
  nonstationarity = 5,
  file_offset = 6,
};

/// SplitMix64 finalizer; used to decorrelate (seed, stream) pairs.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt);

inline std::mt19937_64 make_engine(std::uint64_t seed, Stream s) {
  return std::mt19937_64(mix_seed(seed, static_cast<std::uint64_t>(s)));
}

}  // namespace gscaec
