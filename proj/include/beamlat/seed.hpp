#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <random>
#include <span>
#include <vector>

namespace beamlat {

using Seed = std::uint64_t;

// splitmix64 finalizer.
constexpr Seed mix64(Seed x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Order-sensitive hash of a master seed and a tuple of coordinates. All
// per-call randomness in the engine is derived through this function, so
// results do not depend on evaluation order or worker count.
inline Seed derive_seed(Seed master, std::initializer_list<std::uint64_t> parts) noexcept {
  Seed h = mix64(master);
  for (std::uint64_t p : parts) h = mix64(h ^ mix64(p + 0x632be59bd9b4e019ULL));
  return h;
}

inline std::uint64_t hash_path(std::span<const int> path) noexcept {
  std::uint64_t h = 0x84222325cbf29ce4ULL ^ path.size();
  for (int v : path) h = mix64(h ^ static_cast<std::uint64_t>(static_cast<std::uint32_t>(v)));
  return h;
}

using Rng = std::mt19937_64;

inline std::vector<double> gaussian_vector(Rng& rng, std::size_t d) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> out(d);
  for (double& v : out) v = normal(rng);
  return out;
}

inline std::vector<double> gaussian_vector(Seed seed, std::size_t d) {
  Rng rng(seed);
  return gaussian_vector(rng, d);
}

}  // namespace beamlat
