#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "nbqf/basis.hpp"
#include "nbqf/pg.hpp"
#include "nbqf/quantile_stage.hpp"
#include "nbqf/stats.hpp"

namespace nbqf {

/// log P(Y = y) for the negative binomial with size xi and log-odds eta, so
/// that E[Y] = xi exp(eta) and Var[Y] = mu + mu^2 / xi.
double nb_logpmf(std::int64_t y, double xi, double eta);

enum class ExposureMode { known_qf, estimated_qf, mean };

struct HealthConfig {
  int degree = 2;
  ExposureMode mode = ExposureMode::known_qf;
  double prior_variance = 100.0;
  double xi_max = 1000.0;
  double xi_initial = 1.0;
  /// Variance of the truncated-normal xi proposal before adaptation.
  double xi_proposal_variance = 0.25;
  double xi_target_acceptance = 0.4;
  bool random_intercepts = false;
  double ig_shape = 0.1;
  double ig_rate = 0.1;
  int iterations = 5000;
  int burn_in = 2500;
  int thin = 1;
  int pg_truncation = PgSampler::kDefaultTruncation;
  bool store_latent = false;
  std::uint64_t seed = 1;

  /// Throws ConfigError.
  void validate() const;
};

/// Exposure information for one of the three modes.
struct ExposureInputs {
  ExposureMode mode = ExposureMode::known_qf;
  const QuantilePieceBasis* basis = nullptr;
  /// known_qf: n x (L+1) coefficients (theta_0, ..., theta_L) per group.
  Eigen::MatrixXd theta;
  /// estimated_qf: stage-1 posterior mean and covariance per group.
  std::vector<ThetaSummary> summaries;
  /// mean: scalar exposure per group.
  Eigen::VectorXd means;

  static ExposureInputs known(const QuantilePieceBasis& basis, Eigen::MatrixXd theta);
  static ExposureInputs estimated(const QuantilePieceBasis& basis, std::vector<ThetaSummary> s);
  static ExposureInputs mean_exposure(Eigen::VectorXd means);

  int groups() const;
};

/// Retained stage-2 draws.
struct HealthChain {
  ExposureMode mode = ExposureMode::known_qf;
  int degree = 2;
  /// Exposure coefficients: Bernstein coefficients, or the single slope in mean mode.
  Eigen::MatrixXd beta;
  /// Intercept followed by covariate coefficients.
  Eigen::MatrixXd gamma;
  Eigen::VectorXd xi;
  /// Random-intercept variance; empty without random intercepts.
  Eigen::VectorXd sigma_eps_sq;
  /// Integral of beta(tau) over [0, 1] per draw.
  Eigen::VectorXd integral;
  /// Pointwise log-likelihood, draws x n.
  Eigen::MatrixXd loglik;
  /// Exposure contribution to eta (integral of beta(tau) Q_i(tau)), draws x n.
  Eigen::MatrixXd exposure_term;
  /// Optional latent draws (store_latent).
  Eigen::MatrixXd omega;
  Eigen::MatrixXd eps;
  std::vector<Eigen::MatrixXd> theta;  // one n x (L+1) matrix per draw
  double xi_acceptance = 0.0;

  int draws() const { return static_cast<int>(xi.size()); }
};

struct GaussianParams {
  Eigen::VectorXd mean;
  Eigen::MatrixXd covariance;
};

/// Conditional of regression coefficients given Polya-Gamma weights omega and
/// working responses z under a N(0, prior_variance I) prior.
GaussianParams coefficient_conditional(const Eigen::Ref<const Eigen::MatrixXd>& design,
                                       const Eigen::Ref<const Eigen::VectorXd>& omega,
                                       const Eigen::Ref<const Eigen::VectorXd>& z,
                                       double prior_variance);

/// Conditional of a group's quantile coefficients given the prior MVN(mean,
/// precision^-1) and one pseudo-observation r ~ N(v' theta, 1 / omega).
GaussianParams theta_conditional(const Eigen::Ref<const Eigen::VectorXd>& prior_mean,
                                 const Eigen::Ref<const Eigen::MatrixXd>& prior_precision,
                                 const Eigen::Ref<const Eigen::VectorXd>& v, double omega,
                                 double r);

/// Single-chain stage-2 sampler.
class HealthSampler {
 public:
  /// `panel` supplies counts and optional covariates; inputs must match config.mode.
  HealthSampler(const ExposurePanel& panel, const ExposureInputs& inputs, const HealthConfig& config);

  void augment_omega();
  void update_coefficients();
  void update_theta();
  void update_random_intercepts();
  MhResult update_xi(double proposal_variance);
  void sweep(bool adapt);

  int groups() const { return static_cast<int>(y_.size()); }
  int feature_count() const { return features_; }
  const Eigen::MatrixXd& design() const { return design_; }
  const Eigen::VectorXd& coefficients() const { return coef_; }
  void set_coefficients(const Eigen::Ref<const Eigen::VectorXd>& c);
  const Eigen::VectorXd& omega() const { return omega_; }
  void set_omega(const Eigen::Ref<const Eigen::VectorXd>& w) { omega_ = w; }
  const Eigen::VectorXd& eps() const { return eps_; }
  double xi() const { return xi_; }
  void set_xi(double xi) { xi_ = xi; }
  double sigma_eps_sq() const { return sigma_eps_sq_; }
  double xi_proposal_variance() const { return xi_variance_; }
  bool last_xi_accepted() const { return last_accept_; }
  const Eigen::MatrixXd& theta() const { return theta_; }
  const Eigen::MatrixXd& cross() const { return cross_; }
  const BernsteinBasis& bernstein() const { return bernstein_; }

  Eigen::VectorXd eta() const;
  /// Exposure part of eta per group.
  Eigen::VectorXd exposure_term() const;
  /// Integral of beta(tau), or the slope in mean mode.
  double beta_integral() const;
  Eigen::VectorXd pointwise_loglik() const;

  Rng& rng() { return pg_.rng(); }

 private:
  void set_features(int i);

  HealthConfig config_;
  std::vector<std::int64_t> y_;
  BernsteinBasis bernstein_;
  Eigen::MatrixXd cross_;  // (p+1) x (L+1); empty in mean mode
  int features_ = 0;
  Eigen::MatrixXd design_;
  Eigen::VectorXd coef_;
  Eigen::VectorXd omega_;
  Eigen::VectorXd eps_;
  double sigma_eps_sq_ = 1.0;
  double xi_ = 1.0;
  double xi_variance_ = 0.25;
  long sweeps_ = 0;
  bool last_accept_ = false;
  Eigen::MatrixXd theta_;  // n x (L+1) current coefficients (quantile modes)
  std::vector<Eigen::VectorXd> prior_mean_;
  std::vector<Eigen::MatrixXd> prior_precision_;
  PgSampler pg_;
};

HealthChain run_health_mcmc(const ExposurePanel& panel, const ExposureInputs& inputs,
                            const HealthConfig& config);

struct WaicResult {
  double waic = 0.0;
  double lppd = 0.0;
  double p_waic = 0.0;
};

/// Columns of `loglik` are observations, rows are draws. Throws NumericalError
/// with fewer than two draws. Exactly invariant to the order of the draws.
WaicResult waic(const Eigen::Ref<const Eigen::MatrixXd>& loglik);

struct EffectSummary {
  std::vector<double> tau;
  std::vector<Interval> beta_curve;
  Interval integral;
  Interval percent_increase;
  Interval attributable;
};

/// Per-draw attributable events: sum_i xi (exp(b0 + exposure_i) - exp(b0)).
Eigen::VectorXd attributable_draws(const HealthChain& chain);

EffectSummary effect_summaries(const HealthChain& chain, double mass = 0.95);

struct DegreeSelection {
  HealthChain chain;
  WaicResult waic;
  std::vector<std::pair<int, WaicResult>> candidates;
};

/// Fits every candidate Bernstein degree and keeps the lowest WAIC.
DegreeSelection select_degree(const ExposurePanel& panel, const ExposureInputs& inputs,
                              HealthConfig config, const std::vector<int>& degrees = {2, 3});

}  // namespace nbqf
