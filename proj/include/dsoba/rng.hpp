#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace dsoba {

using Rng = std::mt19937_64;

/// SplitMix64 finalizer; used to derive independent child seeds.
constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t child) {
  return splitmix64(splitmix64(parent) ^ splitmix64(child + 0x632be59bd9b4e019ULL));
}

/// One independent stream per node, split from a run seed. Node i's stream
/// depends only on (seed, i), so every variant sees the same draws.
inline std::vector<Rng> make_node_streams(std::uint64_t seed, int n_nodes) {
  std::vector<Rng> streams;
  streams.reserve(static_cast<std::size_t>(n_nodes));
  for (int i = 0; i < n_nodes; ++i) {
    streams.emplace_back(derive_seed(seed, static_cast<std::uint64_t>(i)));
  }
  return streams;
}

inline double standard_normal(Rng& rng) {
  return std::normal_distribution<double>(0.0, 1.0)(rng);
}

inline double uniform(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

}  // namespace dsoba
