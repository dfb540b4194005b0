#pragma once

// Portable seeded randomness. std::normal_distribution and friends are
// implementation-defined, so sampling is built directly on SplitMix64
// (a 64-bit counter-based generator: a Weyl sequence passed through a
// fixed mixing function) to make every trace reproducible across standard
// libraries.

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>

#include <Eigen/Core>

namespace indirect {

/// Independent random streams derived from one user seed.
enum class Stream : std::uint64_t {
  kTransformInit = 1,
  kPrototypeInit = 2,
  kPromptSampling = 3,
  kKMeans = 4,
  kUnitEmbeddings = 5,
  kAutoencoderInit = 6,
};

class SplitMix64 {
 public:
  using result_type = std::uint64_t;

  explicit SplitMix64(std::uint64_t seed) : counter_(seed) {}
  SplitMix64(std::uint64_t seed, Stream stream)
      : counter_(mix(seed ^ (static_cast<std::uint64_t>(stream) * kGolden))) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() { return mix(counter_ += kGolden); }

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

  /// Standard normal via Box-Muller (cosine branch only).
  double normal() {
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  /// Uniform integer in [0, bound) by rejection; bound > 0.
  std::uint64_t below(std::uint64_t bound) {
    const std::uint64_t limit = max() - max() % bound;
    std::uint64_t x;
    do {
      x = (*this)();
    } while (x >= limit);
    return x % bound;
  }

 private:
  static constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

  static std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  std::uint64_t counter_;
};

/// rows x cols matrix of i.i.d. N(0, stddev^2) entries, filled row by row.
inline Eigen::MatrixXd gaussian_matrix(Eigen::Index rows, Eigen::Index cols, double stddev,
                                       SplitMix64& rng) {
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = stddev * rng.normal();
  }
  return m;
}

}  // namespace indirect
