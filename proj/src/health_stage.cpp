#include "nbqf/health_stage.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "nbqf/errors.hpp"

namespace nbqf {

namespace {

double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

double log_normal_cdf(double x) { return std::log(0.5 * std::erfc(-x / std::numbers::sqrt2)); }

// Equal-tailed summary of each column.
std::vector<Interval> column_intervals(const Eigen::MatrixXd& draws, double mass) {
  std::vector<Interval> out;
  for (Eigen::Index c = 0; c < draws.cols(); ++c) out.push_back(summarize(draws.col(c), mass));
  return out;
}

}  // namespace

double nb_logpmf(std::int64_t y, double xi, double eta) {
  const double yy = static_cast<double>(y);
  // log q = -softplus(-eta), log(1 - q) = -softplus(eta).
  return std::lgamma(yy + xi) - std::lgamma(xi) - std::lgamma(yy + 1.0) - xi * softplus(eta) -
         yy * softplus(-eta);
}

void HealthConfig::validate() const {
  if (degree < 0 || degree > BernsteinBasis::kMaxDegree) {
    throw ConfigError("health model: Bernstein degree out of range");
  }
  if (!(prior_variance > 0.0)) throw ConfigError("health model: prior variance must be positive");
  if (!(xi_max > 0.0)) throw ConfigError("health model: xi upper bound must be positive");
  if (!(xi_initial > 0.0 && xi_initial < xi_max)) {
    throw ConfigError("health model: initial xi must lie in (0, xi_max)");
  }
  if (!(xi_proposal_variance > 0.0)) throw ConfigError("health model: xi proposal variance must be positive");
  if (!(xi_target_acceptance > 0.0 && xi_target_acceptance < 1.0)) {
    throw ConfigError("health model: xi target acceptance must be in (0, 1)");
  }
  if (!(ig_shape > 0.0 && ig_rate > 0.0)) throw ConfigError("health model: inverse-gamma prior must be positive");
  if (iterations <= 0) throw ConfigError("health model: iterations must be positive");
  if (burn_in < 0 || burn_in >= iterations) throw ConfigError("health model: burn-in must be in [0, iterations)");
  if (thin < 1) throw ConfigError("health model: thin must be at least 1");
  if (pg_truncation < PgSampler::kMinTruncation) throw ConfigError("health model: PG truncation too small");
}

ExposureInputs ExposureInputs::known(const QuantilePieceBasis& basis, Eigen::MatrixXd theta) {
  ExposureInputs e;
  e.mode = ExposureMode::known_qf;
  e.basis = &basis;
  e.theta = std::move(theta);
  return e;
}

ExposureInputs ExposureInputs::estimated(const QuantilePieceBasis& basis, std::vector<ThetaSummary> s) {
  ExposureInputs e;
  e.mode = ExposureMode::estimated_qf;
  e.basis = &basis;
  e.summaries = std::move(s);
  return e;
}

ExposureInputs ExposureInputs::mean_exposure(Eigen::VectorXd means) {
  ExposureInputs e;
  e.mode = ExposureMode::mean;
  e.means = std::move(means);
  return e;
}

int ExposureInputs::groups() const {
  switch (mode) {
    case ExposureMode::known_qf: return static_cast<int>(theta.rows());
    case ExposureMode::estimated_qf: return static_cast<int>(summaries.size());
    case ExposureMode::mean: return static_cast<int>(means.size());
  }
  return 0;
}

GaussianParams coefficient_conditional(const Eigen::Ref<const Eigen::MatrixXd>& design,
                                       const Eigen::Ref<const Eigen::VectorXd>& omega,
                                       const Eigen::Ref<const Eigen::VectorXd>& z,
                                       double prior_variance) {
  const Eigen::Index k = design.cols();
  Eigen::MatrixXd precision = design.transpose() * omega.asDiagonal() * design;
  precision.diagonal().array() += 1.0 / prior_variance;
  Eigen::LLT<Eigen::MatrixXd> llt(precision);
  if (llt.info() != Eigen::Success) throw NumericalError("coefficient precision is not positive definite");
  GaussianParams p;
  p.mean = llt.solve(design.transpose() * omega.cwiseProduct(z));
  p.covariance = llt.solve(Eigen::MatrixXd::Identity(k, k));
  return p;
}

GaussianParams theta_conditional(const Eigen::Ref<const Eigen::VectorXd>& prior_mean,
                                 const Eigen::Ref<const Eigen::MatrixXd>& prior_precision,
                                 const Eigen::Ref<const Eigen::VectorXd>& v, double omega,
                                 double r) {
  const Eigen::Index k = prior_mean.size();
  const Eigen::MatrixXd precision = prior_precision + omega * v * v.transpose();
  Eigen::LLT<Eigen::MatrixXd> llt(precision);
  if (llt.info() != Eigen::Success) throw NumericalError("theta precision is not positive definite");
  GaussianParams p;
  p.mean = llt.solve(prior_precision * prior_mean + omega * r * v);
  p.covariance = llt.solve(Eigen::MatrixXd::Identity(k, k));
  return p;
}

// ---------------------------------------------------------------------------

HealthSampler::HealthSampler(const ExposurePanel& panel, const ExposureInputs& inputs,
                             const HealthConfig& config)
    : config_(config),
      y_(panel.y),
      bernstein_(config.mode == ExposureMode::mean ? 0 : config.degree),
      pg_(config.seed, config.pg_truncation) {
  config_.validate();
  if (inputs.mode != config.mode) {
    throw ConfigError("exposure inputs do not match the configured exposure mode");
  }
  const int n = static_cast<int>(y_.size());
  if (n == 0) throw DataError("health model: no counts supplied");
  for (auto v : y_) {
    if (v < 0) throw DataError("health model: negative count");
  }
  if (inputs.groups() != n) {
    throw ConfigError("exposure inputs cover " + std::to_string(inputs.groups()) +
                      " groups but there are " + std::to_string(n) + " counts");
  }
  const Eigen::Index q = panel.covariates.cols();
  if (q > 0 && panel.covariates.rows() != n) throw DataError("covariate rows do not match count rows");

  if (config.mode == ExposureMode::mean) {
    features_ = 1;
    if (!inputs.means.allFinite()) throw DataError("mean exposures must be finite");
  } else {
    if (inputs.basis == nullptr) throw ConfigError("quantile exposure modes need a quantile basis");
    features_ = bernstein_.size();
    cross_ = cross_integral(bernstein_, *inputs.basis).values;
    const int L1 = inputs.basis->pieces() + 1;
    theta_.resize(n, L1);
    if (config.mode == ExposureMode::known_qf) {
      if (inputs.theta.cols() != L1) throw ConfigError("known coefficients have the wrong width");
      theta_ = inputs.theta;
    } else {
      prior_mean_.resize(n);
      prior_precision_.resize(n);
      for (int i = 0; i < n; ++i) {
        const auto& s = inputs.summaries[i];
        if (s.mean.size() != L1 || s.cov.rows() != L1 || s.cov.cols() != L1) {
          throw ConfigError("stage-1 summary of group " + std::to_string(i) + " has the wrong size");
        }
        Eigen::MatrixXd lambda = s.cov;
        lambda.diagonal().array() += 1e-8 * lambda.trace() / L1;
        Eigen::LLT<Eigen::MatrixXd> llt(lambda);
        if (llt.info() != Eigen::Success || !(lambda.trace() > 0.0)) {
          throw ConfigError("stage-1 covariance of group " + std::to_string(i) +
                            " is not positive definite");
        }
        prior_mean_[i] = s.mean;
        prior_precision_[i] = llt.solve(Eigen::MatrixXd::Identity(L1, L1));
        theta_.row(i) = s.mean.transpose();
      }
    }
  }

  design_.resize(n, features_ + 1 + q);
  for (int i = 0; i < n; ++i) {
    if (config.mode == ExposureMode::mean) {
      design_(i, 0) = inputs.means(i);
    } else {
      set_features(i);
    }
    design_(i, features_) = 1.0;
    if (q > 0) design_.row(i).tail(q) = panel.covariates.row(i);
  }

  xi_ = config.xi_initial;
  xi_variance_ = config.xi_proposal_variance;
  double ybar = 0.0;
  for (auto v : y_) ybar += static_cast<double>(v);
  ybar /= n;
  coef_ = Eigen::VectorXd::Zero(design_.cols());
  coef_(features_) = std::log((ybar + 0.5) / xi_);
  eps_ = Eigen::VectorXd::Zero(n);
  omega_.resize(n);
  const Eigen::VectorXd e = eta();
  for (int i = 0; i < n; ++i) omega_(i) = pg_mean(static_cast<double>(y_[i]) + xi_, e(i));
}

void HealthSampler::set_features(int i) {
  design_.row(i).head(features_) = (cross_ * theta_.row(i).transpose()).transpose();
}

void HealthSampler::set_coefficients(const Eigen::Ref<const Eigen::VectorXd>& c) {
  if (c.size() != coef_.size()) throw std::invalid_argument("coefficient size mismatch");
  coef_ = c;
}

Eigen::VectorXd HealthSampler::eta() const { return design_ * coef_ + eps_; }

Eigen::VectorXd HealthSampler::exposure_term() const {
  return design_.leftCols(features_) * coef_.head(features_);
}

double HealthSampler::beta_integral() const {
  if (config_.mode == ExposureMode::mean) return coef_(0);
  return bernstein_.integral(coef_.head(features_));
}

Eigen::VectorXd HealthSampler::pointwise_loglik() const {
  const Eigen::VectorXd e = eta();
  Eigen::VectorXd ll(groups());
  for (int i = 0; i < groups(); ++i) ll(i) = nb_logpmf(y_[i], xi_, e(i));
  return ll;
}

void HealthSampler::augment_omega() {
  const Eigen::VectorXd e = eta();
  for (int i = 0; i < groups(); ++i) omega_(i) = pg_.draw(static_cast<double>(y_[i]) + xi_, e(i));
}

void HealthSampler::update_coefficients() {
  const int n = groups();
  // omega * z = kappa = (y - xi) / 2; subtract the random intercepts first.
  Eigen::VectorXd rhs(n);
  for (int i = 0; i < n; ++i) rhs(i) = 0.5 * (static_cast<double>(y_[i]) - xi_) - omega_(i) * eps_(i);
  Eigen::MatrixXd precision = design_.transpose() * omega_.asDiagonal() * design_;
  precision.diagonal().array() += 1.0 / config_.prior_variance;
  Eigen::LLT<Eigen::MatrixXd> llt(precision);
  if (llt.info() != Eigen::Success) throw NumericalError("coefficient precision is not positive definite");
  const Eigen::VectorXd mean = llt.solve(design_.transpose() * rhs);
  Eigen::VectorXd e(coef_.size());
  for (Eigen::Index k = 0; k < e.size(); ++k) e(k) = pg_.rng().normal();
  coef_ = mean + llt.matrixU().solve(e);
}

void HealthSampler::update_theta() {
  if (config_.mode != ExposureMode::estimated_qf) return;
  const Eigen::VectorXd v = cross_.transpose() * coef_.head(features_);
  const Eigen::VectorXd e = eta();
  const Eigen::Index k = theta_.cols();
  for (int i = 0; i < groups(); ++i) {
    const double rest = e(i) - v.dot(theta_.row(i));
    const double r = 0.5 * (static_cast<double>(y_[i]) - xi_) / omega_(i) - rest;
    const Eigen::MatrixXd precision = prior_precision_[i] + omega_(i) * v * v.transpose();
    Eigen::LLT<Eigen::MatrixXd> llt(precision);
    if (llt.info() != Eigen::Success) throw NumericalError("theta precision is not positive definite");
    const Eigen::VectorXd mean = llt.solve(prior_precision_[i] * prior_mean_[i] + omega_(i) * r * v);
    Eigen::VectorXd z(k);
    for (Eigen::Index j = 0; j < k; ++j) z(j) = pg_.rng().normal();
    theta_.row(i) = (mean + llt.matrixU().solve(z)).transpose();
    set_features(i);
  }
}

void HealthSampler::update_random_intercepts() {
  if (!config_.random_intercepts) return;
  const Eigen::VectorXd fixed = design_ * coef_;
  for (int i = 0; i < groups(); ++i) {
    const double var = 1.0 / (omega_(i) + 1.0 / sigma_eps_sq_);
    const double kappa = 0.5 * (static_cast<double>(y_[i]) - xi_);
    eps_(i) = pg_.rng().normal(var * (kappa - omega_(i) * fixed(i)), std::sqrt(var));
  }
  sigma_eps_sq_ = pg_.rng().inverse_gamma(config_.ig_shape + 0.5 * groups(),
                                          config_.ig_rate + 0.5 * eps_.squaredNorm());
}

MhResult HealthSampler::update_xi(double proposal_variance) {
  const double sd = std::sqrt(proposal_variance);
  double proposal = -1.0;
  while (!(proposal > 0.0)) proposal = pg_.rng().normal(xi_, sd);
  if (proposal >= config_.xi_max) return {false, 0.0};
  const Eigen::VectorXd e = eta();
  double delta = 0.0;
  for (int i = 0; i < groups(); ++i) {
    delta += nb_logpmf(y_[i], proposal, e(i)) - nb_logpmf(y_[i], xi_, e(i));
  }
  // Truncated-normal proposal: q(a | b) is proportional to phi((a - b) / sd) / Phi(b / sd).
  const double log_ratio = delta + log_normal_cdf(xi_ / sd) - log_normal_cdf(proposal / sd);
  const double prob = log_ratio >= 0.0 ? 1.0 : std::exp(log_ratio);
  if (pg_.rng().uniform() < prob) {
    xi_ = proposal;
    return {true, prob};
  }
  return {false, prob};
}

void HealthSampler::sweep(bool adapt) {
  augment_omega();
  update_coefficients();
  update_theta();
  update_random_intercepts();
  const auto r = update_xi(xi_variance_);
  if (adapt) {
    const double rate = std::pow(static_cast<double>(sweeps_) + 1.0, -0.6);
    xi_variance_ *= std::exp(rate * (r.probability - config_.xi_target_acceptance));
  }
  last_accept_ = r.accepted;
  ++sweeps_;
}

HealthChain run_health_mcmc(const ExposurePanel& panel, const ExposureInputs& inputs,
                            const HealthConfig& config) {
  HealthSampler sampler(panel, inputs, config);
  const int n = sampler.groups();
  const int p = sampler.feature_count();
  const int kept = (config.iterations - config.burn_in + config.thin - 1) / config.thin;
  const Eigen::Index q = sampler.design().cols() - p;

  HealthChain chain;
  chain.mode = config.mode;
  chain.degree = config.mode == ExposureMode::mean ? 0 : config.degree;
  chain.beta.resize(kept, p);
  chain.gamma.resize(kept, q);
  chain.xi.resize(kept);
  if (config.random_intercepts) chain.sigma_eps_sq.resize(kept);
  chain.integral.resize(kept);
  chain.loglik.resize(kept, n);
  chain.exposure_term.resize(kept, n);
  if (config.store_latent) {
    chain.omega.resize(kept, n);
    chain.eps.resize(kept, n);
  }

  long accepted = 0;
  int row = 0;
  for (int it = 0; it < config.iterations; ++it) {
    sampler.sweep(it < config.burn_in);
    if (it < config.burn_in) continue;
    accepted += sampler.last_xi_accepted();
    if ((it - config.burn_in) % config.thin != 0) continue;
    const auto& c = sampler.coefficients();
    chain.beta.row(row) = c.head(p).transpose();
    chain.gamma.row(row) = c.tail(q).transpose();
    chain.xi(row) = sampler.xi();
    if (config.random_intercepts) chain.sigma_eps_sq(row) = sampler.sigma_eps_sq();
    chain.integral(row) = sampler.beta_integral();
    chain.loglik.row(row) = sampler.pointwise_loglik().transpose();
    chain.exposure_term.row(row) = sampler.exposure_term().transpose();
    if (config.store_latent) {
      chain.omega.row(row) = sampler.omega().transpose();
      chain.eps.row(row) = sampler.eps().transpose();
      if (config.mode != ExposureMode::mean) chain.theta.push_back(sampler.theta());
    }
    ++row;
  }
  chain.xi_acceptance = static_cast<double>(accepted) / (config.iterations - config.burn_in);
  return chain;
}

WaicResult waic(const Eigen::Ref<const Eigen::MatrixXd>& loglik) {
  const Eigen::Index S = loglik.rows();
  if (S < 2) throw NumericalError("WAIC needs at least two draws");
  WaicResult r;
  Eigen::VectorXd col(S);
  for (Eigen::Index i = 0; i < loglik.cols(); ++i) {
    col = loglik.col(i);
    std::sort(col.data(), col.data() + S);
    r.lppd += log_sum_exp(col) - std::log(static_cast<double>(S));
    r.p_waic += sample_variance(col);
  }
  r.waic = -2.0 * (r.lppd - r.p_waic);
  return r;
}

Eigen::VectorXd attributable_draws(const HealthChain& chain) {
  Eigen::VectorXd out(chain.draws());
  for (int s = 0; s < chain.draws(); ++s) {
    const double b0 = chain.gamma(s, 0);
    double total = 0.0;
    for (Eigen::Index i = 0; i < chain.exposure_term.cols(); ++i) {
      total += std::exp(b0 + chain.exposure_term(s, i)) - std::exp(b0);
    }
    out(s) = chain.xi(s) * total;
  }
  return out;
}

EffectSummary effect_summaries(const HealthChain& chain, double mass) {
  EffectSummary e;
  const BernsteinBasis basis(chain.degree);
  Eigen::MatrixXd curve(chain.draws(), 101);
  for (int k = 0; k <= 100; ++k) {
    const double tau = k / 100.0;
    e.tau.push_back(tau);
    const Eigen::VectorXd K = basis.evaluate(tau);
    curve.col(k) = chain.beta * K;
  }
  e.beta_curve = column_intervals(curve, mass);
  e.integral = summarize(chain.integral, mass);
  const Eigen::VectorXd pct = 100.0 * (chain.integral.array().exp() - 1.0);
  e.percent_increase = summarize(pct, mass);
  e.attributable = summarize(attributable_draws(chain), mass);
  return e;
}

DegreeSelection select_degree(const ExposurePanel& panel, const ExposureInputs& inputs,
                              HealthConfig config, const std::vector<int>& degrees) {
  if (degrees.empty()) throw ConfigError("degree selection needs at least one candidate");
  std::optional<DegreeSelection> best;
  std::vector<std::pair<int, WaicResult>> candidates;
  for (int p : degrees) {
    config.degree = p;
    auto chain = run_health_mcmc(panel, inputs, config);
    const auto w = waic(chain.loglik);
    candidates.emplace_back(p, w);
    if (!best || w.waic < best->waic.waic) best = DegreeSelection{std::move(chain), w, {}};
    if (config.mode == ExposureMode::mean) break;
  }
  best->candidates = std::move(candidates);
  return std::move(*best);
}

}  // namespace nbqf
