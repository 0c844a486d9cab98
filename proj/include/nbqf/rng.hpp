#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include <boost/random/exponential_distribution.hpp>
#include <boost/random/normal_distribution.hpp>

namespace nbqf {

/// SplitMix64 finalizer; used to derive independent child seeds.
inline std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Deterministic child seed for stream `index` of a run seeded with `seed`.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
  return mix_seed(seed ^ mix_seed(index + 1));
}

class Rng;

/// Marsaglia-Tsang gamma generator with the shape-dependent constants hoisted.
class GammaShape {
 public:
  explicit GammaShape(double shape)
      : small_(shape < 1.0), inv_shape_(1.0 / shape), d_((small_ ? shape + 1.0 : shape) - 1.0 / 3.0),
        c_(1.0 / std::sqrt(9.0 * d_)) {}

  inline double operator()(Rng& rng) const;

 private:
  bool small_;
  double inv_shape_;
  double d_;
  double c_;
};

/// Pseudorandom source owned by exactly one sampler. Not thread-safe.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(mix_seed(seed)) {}

  /// Uniform on the open interval (0, 1).
  double uniform() {
    return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53;
  }

  double normal() { return normal_(engine_); }

  double normal(double mean, double sd) { return mean + sd * normal(); }

  double exponential() { return exponential_(engine_); }

  /// Gamma with the given shape and scale.
  double gamma(double shape, double scale = 1.0) { return scale * GammaShape(shape)(*this); }

  /// Inverse-gamma with the given shape and rate (scale of the reciprocal gamma).
  double inverse_gamma(double shape, double rate) { return rate / gamma(shape, 1.0); }

  std::int64_t poisson(double mean) {
    return poisson_(engine_, std::poisson_distribution<std::int64_t>::param_type(mean));
  }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  boost::random::normal_distribution<double> normal_;
  boost::random::exponential_distribution<double> exponential_;
  std::poisson_distribution<std::int64_t> poisson_;
};

inline double GammaShape::operator()(Rng& rng) const {
  double x = 0.0;
  double v = 0.0;
  while (true) {
    do {
      x = rng.normal();
      v = 1.0 + c_ * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = rng.uniform();
    const double x2 = x * x;
    if (u < 1.0 - 0.0331 * x2 * x2) break;
    if (std::log(u) < 0.5 * x2 + d_ * (1.0 - v + std::log(v))) break;
  }
  const double g = d_ * v;
  return small_ ? g * std::pow(rng.uniform(), inv_shape_) : g;
}

}  // namespace nbqf
