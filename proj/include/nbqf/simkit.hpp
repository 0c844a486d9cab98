#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "nbqf/basis.hpp"
#include "nbqf/health_stage.hpp"
#include "nbqf/quantile_stage.hpp"
#include "nbqf/rng.hpp"
#include "nbqf/stats.hpp"

namespace nbqf {

enum class Scenario { S1, S2, S3, S4, S5, S6 };

Scenario parse_scenario(const std::string& name);
std::string scenario_name(Scenario s);

/// True coefficient function of each scenario.
double beta_true(Scenario s, double tau);

/// Integral of beta_true over [0, 1] by high-order quadrature.
double beta_true_integral(Scenario s);

struct ScenarioSpec {
  Scenario scenario = Scenario::S1;
  int groups = 200;
  int individuals = 100;
  double median_mean = 7.2;
  double shape_mean = 0.9;
  double sigma0_sq = 1.0;
  double rho0 = 0.9;
  double sigma1_sq = 0.02;
  double rho1 = 0.9;
  double beta0 = -3.5;
  double xi_true = 1.0;
  int pieces = 4;
  double floor = 0.01;
  int replicates = 20;
  /// One quantile world for every replicate; otherwise a new world each time.
  bool shared_world = true;
  std::uint64_t seed = 1;

  /// Throws ConfigError.
  void validate() const;
  /// n = 1000, D = 100.
  static ScenarioSpec full_scale(Scenario s);
};

/// Floored coefficients (theta_0, theta_1, ..., theta_L) per group, n x (L+1),
/// from the chain-graph GMRF processes.
Eigen::MatrixXd simulate_quantile_process(const ScenarioSpec& spec, Rng& rng);

/// m draws Q(U) with U uniform on (kLowerClip, 1 - kUpperClip).
std::vector<double> simulate_exposures(const Eigen::Ref<const Eigen::VectorXd>& theta,
                                       const QuantilePieceBasis& basis, int m, Rng& rng);

/// Midpoint rule with `points` nodes for the integral of f(tau) Q(tau).
double weighted_quantile_integral(const Eigen::Ref<const Eigen::VectorXd>& theta,
                                  const QuantilePieceBasis& basis,
                                  const std::function<double(double)>& f, int points = 501);

struct SimulatedWorld {
  Eigen::MatrixXd theta;
  ExposurePanel panel;
  /// Integral of Q_i over [0, 1].
  Eigen::VectorXd mean_exposure;
};

SimulatedWorld simulate_world(const ScenarioSpec& spec, const QuantilePieceBasis& basis,
                              std::uint64_t seed);

struct HealthTruth {
  /// Integral of beta(tau) Q_i(tau) per group.
  Eigen::VectorXd exposure_term;
  Eigen::VectorXd eta;
  double integral = 0.0;
  double attributable = 0.0;
  std::vector<double> beta_curve;  // on tau = 0, 0.01, ..., 1
};

HealthTruth health_truth(const SimulatedWorld& world, const ScenarioSpec& spec,
                         const QuantilePieceBasis& basis);

/// Gamma-mixed Poisson counts with mean xi exp(eta).
std::vector<std::int64_t> simulate_counts(const Eigen::Ref<const Eigen::VectorXd>& eta, double xi,
                                          Rng& rng);

// ---------------------------------------------------------------------------
// Metrics

/// Estimates (posterior mean and interval) paired with truths for one target.
struct TargetSeries {
  std::vector<Interval> estimate;
  std::vector<double> truth;

  void add(const Interval& e, double t) {
    estimate.push_back(e);
    truth.push_back(t);
  }
};

struct TargetMetrics {
  double relative_bias = 0.0;  // NaN when not defined
  double bias = 0.0;
  double mse = 0.0;
  double relative_mse = 0.0;   // NaN without a reference
  double coverage = 0.0;       // percent
  int count = 0;
};

/// Averages over every (estimate, truth) pair. With `relative` unset the
/// relative bias is reported as NaN.
TargetMetrics target_metrics(const TargetSeries& series, bool relative = true);

/// Everything one fitted model contributes to the metrics for one replicate.
struct EstimateRecord {
  int replicate = 0;
  ExposureMode mode = ExposureMode::mean;
  bool failed = false;
  std::string error;
  Interval integral;
  double integral_sd = 0.0;
  Interval attributable;
  std::vector<Interval> predictive;
  std::vector<Interval> beta_curve;  // empty in mean mode
  WaicResult waic;
};

/// Summaries of a stage-2 chain in the form the metrics need.
EstimateRecord record_from_chain(const HealthChain& chain, int replicate);

struct ModeMetrics {
  ExposureMode mode = ExposureMode::mean;
  TargetMetrics integral;
  TargetMetrics beta_curve;
  TargetMetrics predictive;
  TargetMetrics attributable;
  int failures = 0;
};

/// Metrics per mode; relative MSE uses the mean mode as reference when present.
std::vector<ModeMetrics> study_metrics(const std::vector<EstimateRecord>& records,
                                       const std::vector<HealthTruth>& truths);

struct StudyOptions {
  std::vector<ExposureMode> modes{ExposureMode::mean, ExposureMode::known_qf};
  HealthConfig health;
  QuantileModelConfig quantile;
};

struct StudyReport {
  ScenarioSpec spec;
  std::vector<EstimateRecord> records;
  std::vector<HealthTruth> truths;
  std::vector<ModeMetrics> metrics;
  /// Fraction of replicates where WAIC prefers the mean model over known_qf
  /// and over estimated_qf (NaN when either fit is missing).
  double mean_preferred_known = 0.0;
  double mean_preferred_estimated = 0.0;
  /// Stage-1 fits performed (one per world when estimated_qf is requested).
  int stage1_fits = 0;
  /// Mean stage-1 acceptance rate over all fits.
  double stage1_acceptance = 0.0;
};

/// Seeds of the world behind replicate d and of its counts.
std::uint64_t world_seed(const ScenarioSpec& spec, int replicate);
std::uint64_t count_seed(const ScenarioSpec& spec, int replicate);

/// Everything the study simulates for one replicate.
struct ReplicateData {
  SimulatedWorld world;
  HealthTruth truth;
  std::vector<std::int64_t> y;
};
ReplicateData simulate_replicate(const ScenarioSpec& spec, const QuantilePieceBasis& basis, int replicate);

StudyReport run_study(const ScenarioSpec& spec, const StudyOptions& options);

std::string mode_name(ExposureMode m);
ExposureMode parse_mode(const std::string& name);

}  // namespace nbqf
