#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace flexmarket {

/// splitmix64 finalizer; used to derive independent stream seeds from keys.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Generator whose state depends only on the key, so draws for one
/// (seed, bus, field, sample) tuple never shift when other draws are added.
inline std::mt19937_64 keyed_stream(std::initializer_list<std::uint64_t> key) {
  std::uint64_t h = 0x2545f4914f6cdd1dULL;
  for (std::uint64_t k : key) h = mix64(h ^ mix64(k));
  return std::mt19937_64(h);
}

/// Stream tags for the different random quantities of a scenario.
enum class StreamTag : std::uint64_t {
  kBaseSupply = 1,
  kBidCost = 2,
  kPerturbCost = 3,
  kPerturbQuantity = 4,
};

}  // namespace flexmarket
