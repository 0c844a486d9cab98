#pragma once

#include <cstdint>

#include "nbqf/rng.hpp"

namespace nbqf {

/// Mean of PG(b, c): b / (2c) tanh(c / 2), with the limit b / 4 at c = 0.
double pg_mean(double b, double c);

/// Variance of PG(b, c); b / 24 at c = 0.
double pg_variance(double b, double c);

/// Random variates from the Polya-Gamma distribution PG(b, c), b > 0.
///
/// PG(1, c) uses the exact alternating-series rejection sampler; integer b up
/// to kMaxSummed adds independent PG(1, c) draws; any other b uses the
/// truncated gamma-series representation with a deterministic tail term that
/// makes the mean exact.
class PgSampler {
 public:
  static constexpr int kDefaultTruncation = 200;
  static constexpr int kMinTruncation = 50;
  static constexpr int kMaxSummed = 64;

  explicit PgSampler(std::uint64_t seed, int truncation = kDefaultTruncation);

  /// Throws std::invalid_argument for b <= 0 or non-finite arguments.
  double draw(double b, double c);

  /// Exact PG(1, c) draw.
  double draw_unit(double c);

  /// Truncated-series PG(b, c) draw, usable for any b > 0.
  double draw_series(double b, double c);

  int truncation() const { return truncation_; }
  Rng& rng() { return rng_; }

 private:
  double truncated_inverse_gaussian(double z);

  Rng rng_;
  int truncation_;
};

}  // namespace nbqf
