#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <random>

namespace charfactor {

/// SplitMix64 finalizer.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Engine whose state depends only on (seed, index, role), so streams can
/// be created in any order or thread.
inline std::mt19937_64 make_stream(std::uint64_t seed, std::uint64_t index, std::uint64_t role = 0) {
  const std::uint64_t key = splitmix64(splitmix64(splitmix64(seed) ^ index) ^ (role * 0xd1b54a32d192ed03ULL));
  std::seed_seq seq{static_cast<std::uint32_t>(key), static_cast<std::uint32_t>(key >> 32)};
  return std::mt19937_64(seq);
}

template <typename Derived>
void fill_normal(Eigen::MatrixBase<Derived>& m, std::mt19937_64& rng, double sd = 1.0) {
  std::normal_distribution<double> dist(0.0, sd);
  for (Eigen::Index c = 0; c < m.cols(); ++c) {
    for (Eigen::Index r = 0; r < m.rows(); ++r) m(r, c) = dist(rng);
  }
}

}  // namespace charfactor
