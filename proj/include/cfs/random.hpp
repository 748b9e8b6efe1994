#pragma once

#include <cstdint>
#include <random>

#include <Eigen/Dense>

namespace cfs {

using Rng = std::mt19937_64;

// Independent streams are derived from (seed, stream) through seed_seq so that
// the Phi matrix, the noise and the sampler never share a generator.
inline Rng make_rng(std::uint64_t seed, std::uint64_t stream = 0) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
  return Rng(seq);
}

/// SplitMix64 mix of (seed, tag); gives well-separated seeds for sub-tasks.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (tag + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

namespace stream {
inline constexpr std::uint64_t cs_matrix = 1;
inline constexpr std::uint64_t noise = 2;
inline constexpr std::uint64_t sampler = 3;
inline constexpr std::uint64_t init = 4;
}  // namespace stream

inline double standard_normal(Rng& rng) { return std::normal_distribution<double>(0.0, 1.0)(rng); }

inline double uniform01(Rng& rng) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng); }

/// Draw from Inv-Gamma(shape, scale): the reciprocal of Gamma(shape, rate = scale).
inline double inverse_gamma_draw(double shape, double scale, Rng& rng) {
  return 1.0 / std::gamma_distribution<double>(shape, 1.0 / scale)(rng);
}

inline Eigen::VectorXd dirichlet_draw(const Eigen::VectorXd& alpha, Rng& rng) {
  Eigen::VectorXd g(alpha.size());
  for (Eigen::Index r = 0; r < alpha.size(); ++r) {
    g[r] = std::gamma_distribution<double>(alpha[r], 1.0)(rng);
  }
  return g / g.sum();
}

}  // namespace cfs
