#pragma once

#include <cstdint>
#include <random>

#include "stereopose/geometry.hpp"

namespace stereopose {

std::uint64_t splitmix64(std::uint64_t x);

/// mt19937_64 with platform-independent uniform/normal draws, so generated
/// files are identical across standard library implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(splitmix64(seed)) {}

  /// Independent stream keyed by (seed, index).
  static Rng stream(std::uint64_t seed, std::uint64_t index) {
    return Rng(splitmix64(seed) ^ splitmix64(index + 0x9E3779B97F4A7C15ULL));
  }

  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [0, n).
  int uniform_int(int n);
  double normal();
  double normal(double mean, double sigma) { return mean + sigma * normal(); }
  bool bernoulli(double p) { return uniform() < p; }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

/// Haar-uniform rotation (normalized Gaussian quaternion).
Mat3 random_rotation(Rng& rng);

}  // namespace stereopose
