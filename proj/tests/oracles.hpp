#pragma once

// Independent reference implementations used only by the tests.

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <vector>

#include <Eigen/Dense>

namespace oracle {

// Gamma(5, 1) via the finite Erlang sum.
inline double erlang5_cdf(double x) {
  if (x <= 0.0) return 0.0;
  double term = 1.0, sum = 1.0;
  for (int k = 1; k < 5; ++k) {
    term *= x / k;
    sum += term;
  }
  return 1.0 - std::exp(-x) * sum;
}

inline double erlang5_pdf(double x) {
  if (x <= 0.0) return 0.0;
  return std::pow(x, 4) * std::exp(-x) / 24.0;
}

inline double bisect(const std::function<double(double)>& f, double target, double lo, double hi,
                     int iters = 200) {
  for (int i = 0; i < iters; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (f(mid) < target) lo = mid; else hi = mid;
  }
  return 0.5 * (lo + hi);
}

inline double erlang5_quantile(double tau) { return bisect(erlang5_cdf, tau, 0.0, 200.0); }

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

inline double normal_quantile(double tau) { return bisect(normal_cdf, tau, -40.0, 40.0); }

// Composite Simpson rule with n (even) intervals.
inline double simpson(const std::function<double(double)>& f, double a, double b, int n) {
  const double h = (b - a) / n;
  double s = f(a) + f(b);
  for (int i = 1; i < n; ++i) s += (i % 2 ? 4.0 : 2.0) * f(a + i * h);
  return s * h / 3.0;
}

// Two-sample Kolmogorov-Smirnov p-value (asymptotic).
inline double ks_pvalue(std::vector<double> a, std::vector<double> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  const double na = a.size(), nb = b.size();
  while (i < a.size() && j < b.size()) {
    const double x = std::min(a[i], b[j]);
    while (i < a.size() && a[i] <= x) ++i;
    while (j < b.size() && b[j] <= x) ++j;
    d = std::max(d, std::abs(i / na - j / nb));
  }
  const double ne = na * nb / (na + nb);
  const double lambda = (std::sqrt(ne) + 0.12 + 0.11 / std::sqrt(ne)) * d;
  double p = 0.0;
  for (int k = 1; k <= 100; ++k) {
    p += 2.0 * ((k % 2) ? 1.0 : -1.0) * std::exp(-2.0 * k * k * lambda * lambda);
  }
  return std::clamp(p, 0.0, 1.0);
}

// Chi-square upper tail via the Wilson-Hilferty approximation.
inline double chisq_pvalue(double stat, double dof) {
  const double z = (std::cbrt(stat / dof) - (1.0 - 2.0 / (9.0 * dof))) / std::sqrt(2.0 / (9.0 * dof));
  return 1.0 - normal_cdf(z);
}

// PG(b, c) variance from the infinite-gamma representation, summed directly.
inline double pg_series_variance(double b, double c, int terms = 2000000) {
  const double pi2 = std::numbers::pi * std::numbers::pi;
  double s = 0.0;
  for (int k = terms; k >= 1; --k) {
    const double d = (k - 0.5) * (k - 0.5) + c * c / (4.0 * pi2);
    s += 1.0 / (d * d);
  }
  return b * s / (4.0 * pi2 * pi2);
}

inline double pg_series_mean(double b, double c, int terms = 2000000) {
  const double pi2 = std::numbers::pi * std::numbers::pi;
  double s = 0.0;
  for (int k = terms; k >= 1; --k) s += 1.0 / ((k - 0.5) * (k - 0.5) + c * c / (4.0 * pi2));
  return b * s / (2.0 * pi2);
}

// Conditional of coordinate i of MVN(mu, inverse(Q)).
inline std::pair<double, double> gaussian_conditional(const Eigen::MatrixXd& q,
                                                      const Eigen::VectorXd& mu,
                                                      const Eigen::VectorXd& v, int i) {
  const Eigen::MatrixXd cov = q.inverse();
  const int n = static_cast<int>(q.rows());
  std::vector<int> rest;
  for (int j = 0; j < n; ++j) if (j != i) rest.push_back(j);
  Eigen::MatrixXd s22(n - 1, n - 1);
  Eigen::VectorXd s12(n - 1), dv(n - 1);
  for (int a = 0; a < n - 1; ++a) {
    s12(a) = cov(i, rest[a]);
    dv(a) = v(rest[a]) - mu(rest[a]);
    for (int b = 0; b < n - 1; ++b) s22(a, b) = cov(rest[a], rest[b]);
  }
  const Eigen::VectorXd w = s22.ldlt().solve(s12);
  return {mu(i) + w.dot(dv), cov(i, i) - w.dot(s12)};
}

// Two-pass sample mean and covariance of the rows of x.
inline std::pair<Eigen::VectorXd, Eigen::MatrixXd> two_pass_cov(const Eigen::MatrixXd& x) {
  const Eigen::VectorXd mean = x.colwise().mean();
  Eigen::MatrixXd c = Eigen::MatrixXd::Zero(x.cols(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const Eigen::VectorXd d = x.row(r).transpose() - mean;
    c += d * d.transpose();
  }
  return {mean, c / (x.rows() - 1.0)};
}

// Standard error of the mean of an autocorrelated series by batch means.
inline double batch_means_se(const std::vector<double>& v, int batches = 50) {
  const std::size_t size = v.size() / batches;
  std::vector<double> means(batches, 0.0);
  for (int b = 0; b < batches; ++b) {
    for (std::size_t k = 0; k < size; ++k) means[b] += v[b * size + k];
    means[b] /= size;
  }
  double m = 0.0;
  for (double x : means) m += x;
  m /= batches;
  double s = 0.0;
  for (double x : means) s += (x - m) * (x - m);
  return std::sqrt(s / (batches - 1.0) / batches);
}

// Posterior mean of a scalar with log density `logpost` by grid integration.
inline double grid_mean(const std::function<double(double)>& logpost, double a, double b,
                        int points = 20001) {
  std::vector<double> lp(points);
  double top = -INFINITY;
  const double h = (b - a) / (points - 1);
  for (int k = 0; k < points; ++k) {
    lp[k] = logpost(a + k * h);
    top = std::max(top, lp[k]);
  }
  double w = 0.0, s = 0.0;
  for (int k = 0; k < points; ++k) {
    const double e = std::exp(lp[k] - top);
    w += e;
    s += e * (a + k * h);
  }
  return s / w;
}

}  // namespace oracle
