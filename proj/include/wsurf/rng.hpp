#pragma once

#include <cstdint>

#include <boost/random/mersenne_twister.hpp>
#include <boost/random/normal_distribution.hpp>

namespace wsurf {

using Engine = boost::random::mt19937_64;
using StandardNormal = boost::random::normal_distribution<double>;

/// splitmix64 output function; a bijection on 64-bit words.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// Master seed plus the batch -> sub-seed rule
///   sub_seed(b) = mix64(master + (b + 1) * 0x9E3779B97F4A7C15).
/// The multiplier is odd, so b -> master + (b+1)*c is injective mod 2^64, and
/// mix64 is a bijection: distinct batches always get distinct sub-seeds.
struct RngSpec {
  std::uint64_t master_seed = 0;

  constexpr std::uint64_t sub_seed(std::uint64_t batch) const noexcept {
    return mix64(master_seed + (batch + 1) * 0x9E3779B97F4A7C15ULL);
  }

  Engine engine_for(std::uint64_t batch) const { return Engine(sub_seed(batch)); }
};

}  // namespace wsurf
