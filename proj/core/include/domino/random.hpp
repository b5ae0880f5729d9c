#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace domino {

using Rng = std::mt19937_64;

// SplitMix64 finalizer. Used for every seed derivation in the project so
// that all randomness traces back to one explicit base seed.
constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Mixes a base seed with an ordered list of coordinates, e.g.
/// derive_seed(base, {run, length, fold}). Order matters.
constexpr std::uint64_t derive_seed(std::uint64_t base,
                                    std::initializer_list<std::uint64_t> coords) noexcept {
  std::uint64_t h = splitmix64(base);
  for (std::uint64_t c : coords) h = splitmix64(h ^ splitmix64(c + 0x632be59bd9b4e019ULL));
  return h;
}

}  // namespace domino
