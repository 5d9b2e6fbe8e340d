#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace icogs {

inline uint64_t splitmix64(uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

inline uint64_t fnv1a(std::string_view s) {
  uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

/// Seed of the named sub-stream of `seed` ("init", "virtual_pose", "scene", ...).
inline uint64_t stream_seed(uint64_t seed, std::string_view name) { return splitmix64(seed ^ fnv1a(name)); }

inline std::mt19937_64 make_stream(uint64_t seed, std::string_view name) {
  return std::mt19937_64(stream_seed(seed, name));
}

} // namespace icogs
