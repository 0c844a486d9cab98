#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

namespace nbqf {

/// Type-7 (linear interpolation) sample quantile.
inline double sample_quantile(std::vector<double> values, double prob) {
  if (values.empty()) throw std::invalid_argument("sample_quantile: no values");
  std::sort(values.begin(), values.end());
  const double h = (values.size() - 1) * prob;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (h - lo) * (values[hi] - values[lo]);
}

inline double sample_quantile(const Eigen::Ref<const Eigen::VectorXd>& v, double prob) {
  return sample_quantile(std::vector<double>(v.data(), v.data() + v.size()), prob);
}

inline double log_sum_exp(const Eigen::Ref<const Eigen::VectorXd>& v) {
  const double top = v.maxCoeff();
  if (!std::isfinite(top)) return top;
  return top + std::log((v.array() - top).exp().sum());
}

/// Unbiased sample variance.
inline double sample_variance(const Eigen::Ref<const Eigen::VectorXd>& v) {
  if (v.size() < 2) return 0.0;
  const double m = v.mean();
  return (v.array() - m).square().sum() / (v.size() - 1.0);
}

/// Outcome of one Metropolis-Hastings step.
struct MhResult {
  bool accepted;
  double probability;
};

/// Posterior mean with an equal-tailed interval.
struct Interval {
  double mean = 0.0;
  double lower = 0.0;
  double upper = 0.0;

  bool covers(double x) const { return lower <= x && x <= upper; }
};

inline Interval summarize(const Eigen::Ref<const Eigen::VectorXd>& draws, double mass = 0.95) {
  const double tail = 0.5 * (1.0 - mass);
  return {draws.mean(), sample_quantile(draws, tail), sample_quantile(draws, 1.0 - tail)};
}

}  // namespace nbqf
