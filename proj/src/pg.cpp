#include "nbqf/pg.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace nbqf {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kPi2 = kPi * kPi;
// Crossover point of the two proposal pieces for J*(1, z).
constexpr double kTrunc = 2.0 / kPi;

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

// Coefficients of the alternating series for the J*(1, 0) density.
double series_term(int n, double x) {
  const double k = (n + 0.5) * kPi;
  if (x > kTrunc) return k * std::exp(-0.5 * k * k * x);
  if (x <= 0.0) return 0.0;
  const double log_term = -1.5 * (std::log(0.5 * kPi) + std::log(x)) + std::log(k) -
                          2.0 * (n + 0.5) * (n + 0.5) / x;
  return std::exp(log_term);
}

// Probability of proposing from the truncated exponential piece.
double exponential_mass(double z) {
  const double fz = 0.125 * kPi2 + 0.5 * z * z;
  const double b = std::sqrt(1.0 / kTrunc) * (kTrunc * z - 1.0);
  const double a = -std::sqrt(1.0 / kTrunc) * (kTrunc * z + 1.0);
  const double x0 = std::log(fz) + fz * kTrunc;
  const double xb = x0 - z + std::log(normal_cdf(b));
  const double xa = x0 + z + std::log(normal_cdf(a));
  const double q_over_p = 4.0 / kPi * (std::exp(xb) + std::exp(xa));
  return 1.0 / (1.0 + q_over_p);
}

void check_arguments(double b, double c) {
  if (!std::isfinite(b) || !std::isfinite(c)) {
    throw std::invalid_argument("pg: arguments must be finite");
  }
  if (!(b > 0.0)) throw std::invalid_argument("pg: shape b must be positive");
}

}  // namespace

double pg_mean(double b, double c) {
  c = std::abs(c);
  if (c < 1e-8) return 0.25 * b;
  return b / (2.0 * c) * std::tanh(0.5 * c);
}

double pg_variance(double b, double c) {
  c = std::abs(c);
  if (c < 1e-4) return b / 24.0 * (1.0 - c * c / 5.0);
  const double sech = 1.0 / std::cosh(0.5 * c);
  return b / (4.0 * c * c * c) * (std::sinh(c) - c) * sech * sech;
}

PgSampler::PgSampler(std::uint64_t seed, int truncation) : rng_(seed), truncation_(truncation) {
  if (truncation < kMinTruncation) {
    throw std::invalid_argument("PgSampler: series truncation must be at least " +
                                std::to_string(kMinTruncation));
  }
}

double PgSampler::draw(double b, double c) {
  check_arguments(b, c);
  c = std::abs(c);
  if (b == std::floor(b) && b <= kMaxSummed) {
    double sum = 0.0;
    for (int k = 0; k < static_cast<int>(b); ++k) sum += draw_unit(c);
    return sum;
  }
  return draw_series(b, c);
}

double PgSampler::truncated_inverse_gaussian(double z) {
  double x = kTrunc + 1.0;
  if (1.0 / kTrunc > z) {
    // mu > t: propose from a truncated gamma and accept with exp(-z^2 x / 2).
    double alpha = 0.0;
    while (rng_.uniform() > alpha) {
      double e1 = rng_.exponential();
      double e2 = rng_.exponential();
      while (e1 * e1 > 2.0 * e2 / kTrunc) {
        e1 = rng_.exponential();
        e2 = rng_.exponential();
      }
      x = 1.0 + e1 * kTrunc;
      x = kTrunc / (x * x);
      alpha = std::exp(-0.5 * z * z * x);
    }
    return x;
  }
  const double mu = 1.0 / z;
  while (x > kTrunc) {
    double y = rng_.normal();
    y *= y;
    const double half_mu = 0.5 * mu;
    const double mu_y = mu * y;
    x = mu + half_mu * mu_y - half_mu * std::sqrt(4.0 * mu_y + mu_y * mu_y);
    if (rng_.uniform() > mu / (mu + x)) x = mu * mu / x;
  }
  return x;
}

double PgSampler::draw_unit(double c) {
  check_arguments(1.0, c);
  const double z = 0.5 * std::abs(c);
  const double fz = 0.125 * kPi2 + 0.5 * z * z;
  const double mass = exponential_mass(z);
  while (true) {
    double x = rng_.uniform() < mass ? kTrunc + rng_.exponential() / fz
                                     : truncated_inverse_gaussian(z);
    double s = series_term(0, x);
    const double y = rng_.uniform() * s;
    for (int n = 1;; ++n) {
      if (n % 2 == 1) {
        s -= series_term(n, x);
        if (y <= s) return 0.25 * x;
      } else {
        s += series_term(n, x);
        if (y > s) break;
      }
    }
  }
}

double PgSampler::draw_series(double b, double c) {
  check_arguments(b, c);
  const double d2 = c * c / (4.0 * kPi2);
  double sum = 0.0;
  double mean_part = 0.0;
  const GammaShape gamma(b);
  for (int k = 1; k <= truncation_; ++k) {
    const double denom = (k - 0.5) * (k - 0.5) + d2;
    sum += gamma(rng_) / denom;
    mean_part += 1.0 / denom;
  }
  const double scale = 1.0 / (2.0 * kPi2);
  const double tail = pg_mean(b, c) - b * scale * mean_part;
  return scale * sum + std::max(tail, 0.0);
}

}  // namespace nbqf
