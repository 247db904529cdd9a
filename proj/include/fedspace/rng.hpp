#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace fedspace {

using Rng = std::mt19937_64;

// SplitMix64 finalizer. Used to derive independent stream seeds from a master
// seed plus a tuple of stream identifiers.
inline constexpr std::uint64_t mix_seed(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t master,
                                 std::initializer_list<std::uint64_t> ids) noexcept {
  std::uint64_t h = mix_seed(master);
  for (auto id : ids) h = mix_seed(h ^ mix_seed(id + 0x632be59bd9b4e019ULL));
  return h;
}

}  // namespace fedspace
