#include "nbqf/simkit.hpp"

#include <cmath>
#include <limits>
#include <map>
#include <stdexcept>

#include "nbqf/errors.hpp"
#include "nbqf/gmrf.hpp"

namespace nbqf {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

}  // namespace

Scenario parse_scenario(const std::string& name) {
  static const std::map<std::string, Scenario> table{
      {"S1", Scenario::S1}, {"S2", Scenario::S2}, {"S3", Scenario::S3},
      {"S4", Scenario::S4}, {"S5", Scenario::S5}, {"S6", Scenario::S6}};
  const auto it = table.find(name);
  if (it == table.end()) throw ConfigError("unknown scenario '" + name + "' (expected S1..S6)");
  return it->second;
}

std::string scenario_name(Scenario s) { return "S" + std::to_string(static_cast<int>(s) + 1); }

double beta_true(Scenario s, double tau) {
  switch (s) {
    case Scenario::S1: return 0.5;
    case Scenario::S2: return tau;
    case Scenario::S3: return 1.5 * tau * tau;
    case Scenario::S4: return tau < 0.5 ? 4.0 / 3.0 * tau : 2.0 / 3.0;
    case Scenario::S5: return std::exp(-tau * tau / 0.328);
    case Scenario::S6: return 1.0 - tau;
  }
  return 0.0;
}

double beta_true_integral(Scenario s) {
  const auto gl = gauss_legendre(kGaussNodes);
  double total = 0.0;
  // Split at 0.5 so the S4 jump falls on a panel edge.
  for (double a : {0.0, 0.5}) {
    for (std::size_t k = 0; k < gl.nodes.size(); ++k) {
      total += 0.25 * gl.weights[k] * beta_true(s, a + 0.25 * (gl.nodes[k] + 1.0));
    }
  }
  return total;
}

void ScenarioSpec::validate() const {
  if (groups < 2) throw ConfigError("scenario: need at least 2 groups for the chain graph");
  if (individuals < 1) throw ConfigError("scenario: need at least one individual per group");
  if (!(sigma0_sq > 0.0 && sigma1_sq > 0.0)) throw ConfigError("scenario: variances must be positive");
  if (!(rho0 >= 0.0 && rho0 < 1.0 && rho1 >= 0.0 && rho1 < 1.0)) {
    throw ConfigError("scenario: dependence parameters must lie in [0, 1)");
  }
  if (!(xi_true > 0.0)) throw ConfigError("scenario: xi must be positive");
  if (pieces < 1) throw ConfigError("scenario: need at least one quantile piece");
  if (!(floor > 0.0)) throw ConfigError("scenario: floor must be positive");
  if (replicates < 1) throw ConfigError("scenario: need at least one replicate");
}

ScenarioSpec ScenarioSpec::full_scale(Scenario s) {
  ScenarioSpec spec;
  spec.scenario = s;
  spec.groups = 1000;
  spec.replicates = 100;
  return spec;
}

Eigen::MatrixXd simulate_quantile_process(const ScenarioSpec& spec, Rng& rng) {
  const auto graph = GmrfSpec::chain(spec.groups);
  Eigen::MatrixXd theta(spec.groups, spec.pieces + 1);
  theta.col(0) = sample_gmrf(graph, {spec.sigma0_sq, spec.rho0, spec.median_mean}, rng);
  for (int l = 1; l <= spec.pieces; ++l) {
    theta.col(l) = sample_gmrf(graph, {spec.sigma1_sq, spec.rho1, spec.shape_mean}, rng).cwiseMax(spec.floor);
  }
  return theta;
}

std::vector<double> simulate_exposures(const Eigen::Ref<const Eigen::VectorXd>& theta,
                                       const QuantilePieceBasis& basis, int m, Rng& rng) {
  const QuantileCurve q(basis, theta(0), theta.tail(theta.size() - 1));
  std::vector<double> x(m);
  const double width = 1.0 - kLowerClip - kUpperClip;
  for (double& v : x) v = q(kLowerClip + width * rng.uniform());
  return x;
}

double weighted_quantile_integral(const Eigen::Ref<const Eigen::VectorXd>& theta,
                                  const QuantilePieceBasis& basis,
                                  const std::function<double(double)>& f, int points) {
  const QuantileCurve q(basis, theta(0), theta.tail(theta.size() - 1));
  double s = 0.0;
  for (int k = 0; k < points; ++k) {
    const double tau = (k + 0.5) / points;
    s += f(tau) * q(tau);
  }
  return s / points;
}

SimulatedWorld simulate_world(const ScenarioSpec& spec, const QuantilePieceBasis& basis,
                              std::uint64_t seed) {
  spec.validate();
  Rng rng(seed);
  SimulatedWorld w;
  w.theta = simulate_quantile_process(spec, rng);
  w.panel.x.resize(spec.groups);
  w.panel.ids.resize(spec.groups);
  w.mean_exposure.resize(spec.groups);
  for (int i = 0; i < spec.groups; ++i) {
    w.panel.ids[i] = i;
    w.panel.x[i] = simulate_exposures(w.theta.row(i).transpose(), basis, spec.individuals, rng);
    w.mean_exposure(i) = weighted_quantile_integral(w.theta.row(i).transpose(), basis,
                                                    [](double) { return 1.0; });
  }
  return w;
}

HealthTruth health_truth(const SimulatedWorld& world, const ScenarioSpec& spec,
                         const QuantilePieceBasis& basis) {
  const int n = static_cast<int>(world.theta.rows());
  HealthTruth t;
  t.exposure_term.resize(n);
  t.eta.resize(n);
  const auto beta = [&](double tau) { return beta_true(spec.scenario, tau); };
  for (int i = 0; i < n; ++i) {
    t.exposure_term(i) = weighted_quantile_integral(world.theta.row(i).transpose(), basis, beta);
    t.eta(i) = spec.beta0 + t.exposure_term(i);
    t.attributable += spec.xi_true * (std::exp(t.eta(i)) - std::exp(spec.beta0));
  }
  t.integral = beta_true_integral(spec.scenario);
  for (int k = 0; k <= 100; ++k) t.beta_curve.push_back(beta(k / 100.0));
  return t;
}

std::vector<std::int64_t> simulate_counts(const Eigen::Ref<const Eigen::VectorXd>& eta, double xi,
                                          Rng& rng) {
  std::vector<std::int64_t> y(eta.size());
  for (Eigen::Index i = 0; i < eta.size(); ++i) {
    const double lambda = rng.gamma(xi, std::exp(eta(i)));
    y[i] = lambda > 0.0 ? rng.poisson(lambda) : 0;
  }
  return y;
}

// ---------------------------------------------------------------------------

TargetMetrics target_metrics(const TargetSeries& series, bool relative) {
  TargetMetrics m;
  const std::size_t n = series.estimate.size();
  m.count = static_cast<int>(n);
  m.relative_mse = kNaN;
  if (n == 0) {
    m.relative_bias = m.bias = m.mse = m.coverage = kNaN;
    return m;
  }
  double rel = 0.0, bias = 0.0, mse = 0.0, cover = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const double err = series.estimate[k].mean - series.truth[k];
    rel += err / series.truth[k];
    bias += err;
    mse += err * err;
    cover += series.estimate[k].covers(series.truth[k]) ? 1.0 : 0.0;
  }
  m.relative_bias = relative ? rel / n : kNaN;
  m.bias = bias / n;
  m.mse = mse / n;
  m.coverage = 100.0 * cover / n;
  return m;
}

EstimateRecord record_from_chain(const HealthChain& chain, int replicate) {
  EstimateRecord r;
  r.replicate = replicate;
  r.mode = chain.mode;
  r.integral = summarize(chain.integral);
  r.integral_sd = std::sqrt(sample_variance(chain.integral));
  r.attributable = summarize(attributable_draws(chain));
  for (Eigen::Index i = 0; i < chain.exposure_term.cols(); ++i) {
    r.predictive.push_back(summarize(chain.exposure_term.col(i)));
  }
  if (chain.mode != ExposureMode::mean) r.beta_curve = effect_summaries(chain).beta_curve;
  r.waic = waic(chain.loglik);
  return r;
}

std::vector<ModeMetrics> study_metrics(const std::vector<EstimateRecord>& records,
                                       const std::vector<HealthTruth>& truths) {
  std::vector<ModeMetrics> out;
  for (auto mode : {ExposureMode::mean, ExposureMode::known_qf, ExposureMode::estimated_qf}) {
    TargetSeries integral, curve, predictive, attributable;
    int failures = 0;
    bool seen = false;
    for (const auto& r : records) {
      if (r.mode != mode) continue;
      seen = true;
      if (r.failed) {
        ++failures;
        continue;
      }
      const auto& t = truths.at(r.replicate);
      integral.add(r.integral, t.integral);
      attributable.add(r.attributable, t.attributable);
      for (std::size_t i = 0; i < r.predictive.size(); ++i) predictive.add(r.predictive[i], t.exposure_term(i));
      for (std::size_t j = 0; j < r.beta_curve.size(); ++j) curve.add(r.beta_curve[j], t.beta_curve[j]);
    }
    if (!seen) continue;
    ModeMetrics m;
    m.mode = mode;
    m.integral = target_metrics(integral);
    m.beta_curve = target_metrics(curve, false);
    m.predictive = target_metrics(predictive);
    m.attributable = target_metrics(attributable);
    m.failures = failures;
    out.push_back(m);
  }
  if (!out.empty() && out.front().mode == ExposureMode::mean) {
    const ModeMetrics ref = out.front();
    for (auto& m : out) {
      m.integral.relative_mse = m.integral.mse / ref.integral.mse;
      m.predictive.relative_mse = m.predictive.mse / ref.predictive.mse;
      m.attributable.relative_mse = m.attributable.mse / ref.attributable.mse;
    }
  }
  return out;
}

std::string mode_name(ExposureMode m) {
  switch (m) {
    case ExposureMode::mean: return "mean";
    case ExposureMode::known_qf: return "quantile";
    case ExposureMode::estimated_qf: return "quantile with errors";
  }
  return "";
}

ExposureMode parse_mode(const std::string& name) {
  if (name == "mean") return ExposureMode::mean;
  if (name == "known_qf" || name == "known" || name == "quantile") return ExposureMode::known_qf;
  if (name == "estimated_qf" || name == "estimated" || name == "quantile with errors") {
    return ExposureMode::estimated_qf;
  }
  throw ConfigError("unknown exposure mode '" + name + "' (expected mean, known_qf or estimated_qf)");
}

std::uint64_t world_seed(const ScenarioSpec& spec, int replicate) {
  return derive_seed(spec.seed, 1000 + (spec.shared_world ? 0 : static_cast<std::uint64_t>(replicate)));
}

std::uint64_t count_seed(const ScenarioSpec& spec, int replicate) {
  return derive_seed(spec.seed, 3000 + static_cast<std::uint64_t>(replicate));
}

ReplicateData simulate_replicate(const ScenarioSpec& spec, const QuantilePieceBasis& basis, int replicate) {
  ReplicateData r;
  r.world = simulate_world(spec, basis, world_seed(spec, replicate));
  r.truth = health_truth(r.world, spec, basis);
  Rng rng(count_seed(spec, replicate));
  r.y = simulate_counts(r.truth.eta, spec.xi_true, rng);
  r.world.panel.y = r.y;
  return r;
}

StudyReport run_study(const ScenarioSpec& spec, const StudyOptions& options) {
  spec.validate();
  options.health.validate();
  options.quantile.validate();
  if (options.modes.empty()) throw ConfigError("study: no exposure modes requested");
  const QuantilePieceBasis basis(BaseFamily::gamma, spec.pieces);
  const auto graph = GmrfSpec::chain(spec.groups);
  const bool need_stage1 = std::find(options.modes.begin(), options.modes.end(),
                                     ExposureMode::estimated_qf) != options.modes.end();

  StudyReport report;
  report.spec = spec;

  std::optional<SimulatedWorld> world;
  std::vector<ThetaSummary> summaries;
  std::optional<HealthTruth> truth;
  double acceptance_total = 0.0;
  for (int d = 0; d < spec.replicates; ++d) {
    if (!world || !spec.shared_world) {
      const std::uint64_t index = spec.shared_world ? 0 : static_cast<std::uint64_t>(d);
      world = simulate_world(spec, basis, world_seed(spec, d));
      truth = health_truth(*world, spec, basis);
      if (need_stage1) {
        auto qc = options.quantile;
        qc.seed = derive_seed(spec.seed, 2000 + index);
        const auto chain = run_quantile_mcmc(world->panel, basis, qc, &graph);
        summaries = posterior_theta_summary(chain);
        acceptance_total += chain.acceptance.mean();
        ++report.stage1_fits;
      }
    }
    report.truths.push_back(*truth);

    Rng count_rng(count_seed(spec, d));
    ExposurePanel panel;
    panel.y = simulate_counts(truth->eta, spec.xi_true, count_rng);

    for (auto mode : options.modes) {
      HealthConfig hc = options.health;
      hc.mode = mode;
      hc.seed = derive_seed(spec.seed, 4000 + 10 * static_cast<std::uint64_t>(d) + static_cast<int>(mode));
      ExposureInputs inputs;
      switch (mode) {
        case ExposureMode::mean: inputs = ExposureInputs::mean_exposure(world->mean_exposure); break;
        case ExposureMode::known_qf: inputs = ExposureInputs::known(basis, world->theta); break;
        case ExposureMode::estimated_qf: inputs = ExposureInputs::estimated(basis, summaries); break;
      }
      try {
        report.records.push_back(record_from_chain(run_health_mcmc(panel, inputs, hc), d));
      } catch (const NumericalError& e) {
        EstimateRecord r;
        r.replicate = d;
        r.mode = mode;
        r.failed = true;
        r.error = e.what();
        report.records.push_back(r);
      }
    }
  }
  if (report.stage1_fits > 0) report.stage1_acceptance = acceptance_total / report.stage1_fits;
  report.metrics = study_metrics(report.records, report.truths);

  auto preference = [&](ExposureMode other) {
    int compared = 0, mean_wins = 0;
    for (int d = 0; d < spec.replicates; ++d) {
      const EstimateRecord* a = nullptr;
      const EstimateRecord* b = nullptr;
      for (const auto& r : report.records) {
        if (r.replicate != d || r.failed) continue;
        if (r.mode == ExposureMode::mean) a = &r;
        if (r.mode == other) b = &r;
      }
      if (!a || !b) continue;
      ++compared;
      mean_wins += a->waic.waic < b->waic.waic;
    }
    return compared == 0 ? kNaN : static_cast<double>(mean_wins) / compared;
  };
  report.mean_preferred_known = preference(ExposureMode::known_qf);
  report.mean_preferred_estimated = preference(ExposureMode::estimated_qf);
  return report;
}

}  // namespace nbqf
