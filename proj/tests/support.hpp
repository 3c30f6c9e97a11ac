#pragma once

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>

#include "marvin/kinematics.hpp"

namespace test {

inline std::filesystem::path data_dir() { return MARVIN_DATA_DIR; }

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Seeded value generators for the property tests.
class Gen {
 public:
  explicit Gen(std::uint64_t seed) : rng_(seed) {}

  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng_); }
  int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng_); }
  bool coin(double p = 0.5) { return std::bernoulli_distribution(p)(rng_); }
  double normal(double sigma) { return std::normal_distribution<double>(0.0, sigma)(rng_); }

  /// Mixes ordinary magnitudes with tiny and huge ones, plus exact zeros.
  double magnitude(double scale) {
    switch (integer(0, 5)) {
      case 0: return 0.0;
      case 1: return uniform(-1e-6, 1e-6) * scale;
      case 2: return uniform(-100.0, 100.0) * scale;
      default: return uniform(-1.0, 1.0) * scale;
    }
  }

  marvin::kin::Twist2D twist(double scale = 2.0) { return {magnitude(scale), magnitude(scale), magnitude(3.0 * scale)}; }

  std::mt19937_64& engine() { return rng_; }

 private:
  std::mt19937_64 rng_;
};

}  // namespace test
