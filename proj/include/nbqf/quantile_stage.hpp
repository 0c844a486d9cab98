#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "nbqf/basis.hpp"
#include "nbqf/gmrf.hpp"
#include "nbqf/rng.hpp"
#include "nbqf/stats.hpp"

namespace nbqf {

/// Individual exposures grouped by area or time point, with optional
/// group-level outcomes and covariates.
struct ExposurePanel {
  std::vector<std::vector<double>> x;
  /// Group labels as they appear in input files; defaults to 0..n-1.
  std::vector<std::int64_t> ids;
  /// Counts per group; empty when not available.
  std::vector<std::int64_t> y;
  /// n x q covariates; zero columns when absent.
  Eigen::MatrixXd covariates;

  int groups() const { return static_cast<int>(x.size()); }

  /// Throws DataError for empty groups, non-finite values or size mismatches.
  void validate() const;
};

enum class QuantileMode { independent, gmrf };

struct QuantileModelConfig {
  QuantileMode mode = QuantileMode::gmrf;
  double prior_variance = 100.0;
  double ig_shape = 0.1;
  double ig_rate = 0.1;
  int iterations = 10000;
  int burn_in = 5000;
  int thin = 1;
  double median_step = 0.1;
  double shape_step = 0.05;
  double target_acceptance = 0.35;
  double floor = 0.01;
  int rho_points = RhoGrid::kDefaultPoints;
  std::uint64_t seed = 1;

  /// Throws ConfigError.
  void validate() const;
};

/// Current values of every stage-1 parameter.
struct QuantileState {
  Eigen::VectorXd median;      // theta_{0,i}
  Eigen::MatrixXd shape;       // raw theta*_{l,i}, L x n
  double hyper_median = 0.0;   // theta_0
  Eigen::VectorXd hyper_shape; // theta_l
  double sigma0_sq = 1.0;
  double sigma1_sq = 1.0;
  double rho0 = 0.5;
  double rho1 = 0.5;
};

/// Sum of log f(x_j) under the quantile curve; -infinity if any x_j falls
/// outside its support.
double group_loglik(const QuantileCurve& curve, const std::vector<double>& x);
double group_loglik(const ThetaVector& theta, const QuantilePieceBasis& basis,
                    const std::vector<double>& x);

struct NormalParams {
  double mean;
  double var;
};

struct InverseGammaParams {
  double shape;
  double rate;
};

/// Conjugate conditional of the common mean of v ~ MVN(mean 1, sigma^2 (D - rho W)^-1)
/// under a N(0, prior_variance) prior.
NormalParams hypermean_conditional(const Eigen::Ref<const Eigen::VectorXd>& v, double rho,
                                   double sigma_sq, const GmrfSpec& graph, double prior_variance);

/// Conjugate conditional of sigma^2 given centered blocks (columns of z) that
/// share (sigma^2, rho), under an InvGamma(prior_shape, prior_rate) prior.
InverseGammaParams variance_conditional(const Eigen::Ref<const Eigen::MatrixXd>& z, double rho,
                                        const GmrfSpec& graph, double prior_shape,
                                        double prior_rate);

/// Starting values: sample medians, floored least-squares fit of the
/// empirical deciles, then widened until every exposure is in support.
QuantileState initial_state(const ExposurePanel& panel, const QuantilePieceBasis& basis,
                            const QuantileModelConfig& config);

/// Single-chain stage-1 Metropolis-within-Gibbs sampler.
class QuantileSampler {
 public:
  /// `graph` is required in gmrf mode and must outlive the sampler.
  QuantileSampler(const ExposurePanel& panel, const QuantilePieceBasis& basis,
                  const QuantileModelConfig& config, const GmrfSpec* graph = nullptr);

  QuantileState& state() { return state_; }
  const QuantileState& state() const { return state_; }
  /// Call after editing state() directly.
  void refresh();

  using MhResult = nbqf::MhResult;

  /// Random-walk updates with the given proposal scale.
  MhResult update_median(int i, double step);
  MhResult update_shape(int l, int i, double step);
  void update_hypermeans();
  void update_variances();
  void update_dependence();

  /// One full sweep. While `adapt` is set, per-site proposal scales follow a
  /// Robbins-Monro recursion toward the target acceptance rate.
  void sweep(bool adapt);

  double cached_loglik(int i) const { return loglik_[i]; }
  double median_step(int i) const { return median_step_(i); }
  double shape_step(int l, int i) const { return shape_step_(l - 1, i); }
  Rng& rng() { return rng_; }

  /// Acceptance counts, (L+1) x n with row 0 for theta_0, and the number of
  /// sweeps since the last reset_counters().
  const Eigen::MatrixXd& accepted() const { return accepted_; }
  long counted_sweeps() const { return counted_sweeps_; }
  void reset_counters();

 private:
  double loglik_with(int i, double median, const Eigen::Ref<const Eigen::VectorXd>& shape) const;
  double prior_logdensity(double value, int i, int row) const;

  const ExposurePanel& panel_;
  const QuantilePieceBasis& basis_;
  QuantileModelConfig config_;
  const GmrfSpec* graph_;
  std::optional<RhoGrid> grid_;
  Rng rng_;
  QuantileState state_;
  Eigen::VectorXd loglik_;
  Eigen::VectorXd median_step_;
  Eigen::MatrixXd shape_step_;
  Eigen::MatrixXd accepted_;  // (L+1) x n, row 0 for theta_0
  long counted_sweeps_ = 0;
  long sweeps_ = 0;
};

/// Retained stage-1 draws.
struct QuantileChain {
  int groups = 0;
  int pieces = 0;
  double floor = 0.01;
  Eigen::MatrixXd median;              // draws x n
  std::vector<Eigen::MatrixXd> shape;  // L entries, each draws x n, raw theta*
  Eigen::VectorXd hyper_median;
  Eigen::MatrixXd hyper_shape;         // draws x L
  Eigen::VectorXd sigma0_sq;
  Eigen::VectorXd sigma1_sq;
  Eigen::VectorXd rho0;
  Eigen::VectorXd rho1;
  /// Post-burn-in acceptance rates, (L+1) x n with row 0 for theta_0.
  Eigen::MatrixXd acceptance;
  std::vector<std::string> warnings;

  int draws() const { return static_cast<int>(median.rows()); }
  /// max(theta*, floor).
  double shape_at(int draw, int l, int i) const;
  /// Floored coefficients of group i at one draw.
  ThetaVector theta(int draw, int i) const;
};

QuantileChain run_quantile_mcmc(const ExposurePanel& panel, const QuantilePieceBasis& basis,
                                const QuantileModelConfig& config,
                                const GmrfSpec* graph = nullptr);

/// Posterior mean and covariance of the floored (theta_0, ..., theta_L) of one group.
struct ThetaSummary {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
};

/// Throws NumericalError when the chain has fewer than L + 2 draws.
std::vector<ThetaSummary> posterior_theta_summary(const QuantileChain& chain);

/// Pointwise posterior mean and equal-tailed interval of Q_i(tau).
struct CurveBand {
  Eigen::MatrixXd mean;  // n x levels
  Eigen::MatrixXd lower;
  Eigen::MatrixXd upper;
};

CurveBand curve_bands(const QuantileChain& chain, const QuantilePieceBasis& basis,
                      const std::vector<double>& levels, double mass = 0.95);

}  // namespace nbqf
