#pragma once

#include <Eigen/Core>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>

namespace cgsplat {

// Seeded RNG with named sub-streams, so that all randomness in a run flows
// from one seed and enabling/disabling a feature does not shift the draws of
// unrelated streams. Distributions are implemented directly on the engine
// output so results are identical across standard libraries.
class Rng {
 public:
  explicit Rng(uint64_t seed) : engine_(seed), base_seed_(seed) {}

  Rng stream(const std::string& name) const {
    uint64_t h = 1469598103934665603ull;  // FNV-1a
    for (char c : name) {
      h ^= static_cast<uint8_t>(c);
      h *= 1099511628211ull;
    }
    return Rng(seed_mix(base_seed_, h));
  }

  // Uniform in [0, 1).
  double uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [lo, hi] via rejection-free Lemire-style reduction;
  // bias is negligible for the small ranges used here.
  int uniform_int(int lo, int hi) {
    const uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
    return lo + static_cast<int>(engine_() % span);
  }

  double normal(double mean = 0.0, double sigma = 1.0) {
    if (have_spare_) {
      have_spare_ = false;
      return mean + sigma * spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    spare_ = r * std::sin(2.0 * M_PI * u2);
    have_spare_ = true;
    return mean + sigma * r * std::cos(2.0 * M_PI * u2);
  }

  Eigen::Vector3d normal3(double sigma = 1.0) {
    return {normal(0.0, sigma), normal(0.0, sigma), normal(0.0, sigma)};
  }

  Eigen::Quaterniond random_rotation() {
    // Shoemake's method for uniform rotations.
    const double u1 = uniform(), u2 = uniform(), u3 = uniform();
    const double a = std::sqrt(1.0 - u1), b = std::sqrt(u1);
    return Eigen::Quaterniond(a * std::sin(2.0 * M_PI * u2),
                              a * std::cos(2.0 * M_PI * u2),
                              b * std::sin(2.0 * M_PI * u3),
                              b * std::cos(2.0 * M_PI * u3))
        .normalized();
  }

  std::mt19937_64& engine() { return engine_; }

  // The (mixed) seed of this stream; usable to seed other components.
  uint64_t seed() const { return base_seed_; }

 private:
  static uint64_t seed_mix(uint64_t a, uint64_t b) {
    uint64_t x = a ^ (b + 0x9e3779b97f4a7c15ull + (a << 6) + (a >> 2));
    x ^= x >> 30;
    x *= 0xbf58476d1ce4e5b9ull;
    x ^= x >> 27;
    x *= 0x94d049bb133111ebull;
    x ^= x >> 31;
    return x;
  }

  std::mt19937_64 engine_;
  uint64_t base_seed_ = 0;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace cgsplat
