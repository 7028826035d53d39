#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace kgrl {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Every random consumer derives its seed from one root seed plus a fixed
// label (and an optional step counter), so a single --seed flag pins the
// whole run.
inline std::uint64_t fanout_seed(std::uint64_t root, std::string_view label, std::uint64_t counter = 0) {
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
  for (char c : label) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return splitmix64(splitmix64(root ^ h) + counter);
}

inline std::mt19937_64 make_rng(std::uint64_t root, std::string_view label, std::uint64_t counter = 0) {
  return std::mt19937_64(fanout_seed(root, label, counter));
}

}  // namespace kgrl
