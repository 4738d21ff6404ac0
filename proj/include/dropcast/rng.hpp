#pragma once

#include <cstdint>
#include <random>

namespace dropcast {

using Rng = std::mt19937_64;

constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Child stream for item `index` of a stream seeded with `seed`:
// seed XOR hash(index). Every random stream in the project is derived this
// way from the single user-facing seed.
constexpr std::uint64_t sub_seed(std::uint64_t seed, std::uint64_t index) {
  return seed ^ splitmix64(index);
}

// Distinct purposes get distinct salts so that e.g. the split stream and
// the initializer stream never coincide.
namespace salt {
inline constexpr std::uint64_t generator = 0x67656e0000000000ULL;
inline constexpr std::uint64_t sampling = 0x73616d7000000000ULL;
inline constexpr std::uint64_t split = 0x73706c7400000000ULL;
inline constexpr std::uint64_t init = 0x696e697400000000ULL;
inline constexpr std::uint64_t shuffle = 0x7368756600000000ULL;
inline constexpr std::uint64_t forest = 0x666f726500000000ULL;
}  // namespace salt

inline Rng make_rng(std::uint64_t seed, std::uint64_t salt_value, std::uint64_t index = 0) {
  return Rng(splitmix64(sub_seed(seed ^ salt_value, index)));
}

}  // namespace dropcast
