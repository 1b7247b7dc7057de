#pragma once

#include <cstdint>
#include <random>

#include <Eigen/Dense>

namespace bcap {

using Rng = std::mt19937_64;

// SplitMix64 finalizer. Used only to derive decorrelated seeds for
// substreams; the streams themselves are mt19937_64.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Named substream families so e.g. a simulator seeded with s and chain 0 of a
// sampler seeded with s never see the same mt19937_64 stream.
namespace stream {
constexpr std::uint64_t kSimulate = 0x53494d0000000000ULL;
constexpr std::uint64_t kChain = 0x4348410000000000ULL;
constexpr std::uint64_t kSelect = 0x53454c0000000000ULL;
constexpr std::uint64_t kReplication = 0x5245500000000000ULL;
constexpr std::uint64_t kInit = 0x494e490000000000ULL;
}  // namespace stream

inline Rng substream(std::uint64_t seed, std::uint64_t purpose,
                     std::uint64_t index = 0) {
  return Rng(splitmix64(seed ^ purpose) + index);
}

// One standard normal. A fresh distribution object per call keeps this a pure
// function of the engine state (std::normal_distribution caches internally).
inline double draw_normal(Rng& rng) {
  std::normal_distribution<double> dist(0.0, 1.0);
  return dist(rng);
}

inline Eigen::MatrixXd gaussian_matrix(int rows, int cols, Rng& rng) {
  Eigen::MatrixXd m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = draw_normal(rng);
  return m;
}

}  // namespace bcap
