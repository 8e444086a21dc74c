#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "exstyle/common.hpp"

namespace exstyle {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

/// Seeded generator with its own uniform/normal transforms so that sampled
/// streams are identical across standard library implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(splitmix64(seed)) {}

  /// Independent substream derived from (seed, stream); used to make each
  /// training step's batch a pure function of the config seed.
  static Rng derive(std::uint64_t seed, std::uint64_t stream) {
    return Rng(splitmix64(seed ^ splitmix64(stream + 0x51ed27f5a1aa8157ull)));
  }

  std::uint64_t next() { return eng_(); }

  /// Uniform in [0, 1).
  double uniform() { return double(eng_() >> 11) * 0x1.0p-53; }

  /// Uniform integer in [0, n).
  std::uint64_t uniform_int(std::uint64_t n) {
    // rejection sampling to avoid modulo bias
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t v = eng_();
    while (v >= limit) v = eng_();
    return v % n;
  }

  /// Standard normal via Box-Muller.
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform(), u2 = uniform();
    while (u1 <= 1e-300) u1 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double t = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(t);
    have_spare_ = true;
    return r * std::cos(t);
  }

  template <typename Scalar>
  void fill_normal(Mat<Scalar>& m, double stddev) {
    for (Index i = 0; i < m.size(); ++i) m.data()[i] = Scalar(normal() * stddev);
  }

  template <typename Scalar>
  void fill_uniform(Mat<Scalar>& m, double lo, double hi) {
    for (Index i = 0; i < m.size(); ++i)
      m.data()[i] = Scalar(lo + (hi - lo) * uniform());
  }

 private:
  std::mt19937_64 eng_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

/// Variance-scaled initialization for rectified layers.
template <typename Scalar>
void he_init(Parameter<Scalar>& p, Index fan_in, Rng& rng) {
  rng.fill_normal(p.value, std::sqrt(2.0 / double(fan_in)));
  p.grad.setZero();
}

}  // namespace exstyle
