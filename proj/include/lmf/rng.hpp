#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace lmf {

// splitmix64 finalizer; used to derive independent per-component seeds
// from a single root seed.
inline std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t split_seed(std::uint64_t root, std::string_view tag) {
  std::uint64_t h = root;
  for (char c : tag) h = mix_seed(h ^ static_cast<std::uint64_t>(static_cast<unsigned char>(c)));
  return h;
}

inline std::uint64_t split_seed(std::uint64_t root, std::string_view tag, std::uint64_t index) {
  return mix_seed(split_seed(root, tag) ^ mix_seed(index));
}

using Rng = std::mt19937_64;

inline Rng make_rng(std::uint64_t seed) { return Rng(seed); }

}  // namespace lmf
