#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <random>

namespace vou {

// Loops in this project are low-dimensional (the reference configuration is
// scalar). Bounded-size dynamic matrices keep the API shape-generic while
// staying heap-free inside the replay loops.
inline constexpr int kMaxDim = 4;

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, kMaxDim, kMaxDim>;
using Vec = Eigen::Matrix<double, Eigen::Dynamic, 1, 0, kMaxDim, 1>;

/// Discrete control step index. Milliseconds are plain doubles; conversions
/// between the two happen only at simulator and configuration boundaries.
using Step = std::int64_t;

inline double l1_norm(const Vec& v) { return v.template lpNorm<1>(); }

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Derives an independent, reproducible engine for one (seed, stream, index)
/// triple. Every randomness consumer (plant disturbance, prediction noise,
/// hop service times, ...) owns its own stream so traces stay identical no
/// matter how the consumers interleave.
inline std::mt19937_64 make_stream(std::uint64_t seed, std::uint64_t stream,
                                   std::uint64_t index = 0) {
  return std::mt19937_64(splitmix64(seed + splitmix64(stream + splitmix64(index))));
}

}  // namespace vou
