#include "nbqf/quantile_stage.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "nbqf/errors.hpp"
#include "nbqf/stats.hpp"

namespace nbqf {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr int kRepairLimit = 200;

double normal_logkernel(double x, double mean, double var) {
  const double d = x - mean;
  return -0.5 * d * d / var;
}

// Least squares of empirical deciles on the basis with shape >= floor, by
// repeatedly pinning negative-side coefficients at the floor.
Eigen::VectorXd fit_shape(const QuantilePieceBasis& basis, const std::vector<double>& x,
                          double median, double floor) {
  const int L = basis.pieces();
  Eigen::MatrixXd design(9, L);
  Eigen::VectorXd target(9);
  for (int k = 1; k <= 9; ++k) {
    const double tau = k / 10.0;
    for (int l = 1; l <= L; ++l) design(k - 1, l - 1) = basis(l, tau);
    target(k - 1) = sample_quantile(x, tau) - median;
  }
  Eigen::VectorXd shape = Eigen::VectorXd::Constant(L, floor);
  std::vector<bool> pinned(L, false);
  for (int pass = 0; pass <= L; ++pass) {
    std::vector<int> free;
    for (int l = 0; l < L; ++l) {
      if (!pinned[l]) free.push_back(l);
    }
    if (free.empty()) break;
    Eigen::VectorXd rhs = target;
    for (int l = 0; l < L; ++l) {
      if (pinned[l]) rhs -= floor * design.col(l);
    }
    Eigen::MatrixXd sub(9, free.size());
    for (std::size_t c = 0; c < free.size(); ++c) sub.col(c) = design.col(free[c]);
    const Eigen::VectorXd sol = sub.colPivHouseholderQr().solve(rhs);
    bool changed = false;
    for (std::size_t c = 0; c < free.size(); ++c) {
      const double v = std::isfinite(sol(c)) ? sol(c) : floor;
      if (v < floor) {
        pinned[free[c]] = true;
        changed = true;
      }
      shape(free[c]) = std::max(v, floor);
    }
    if (!changed) break;
  }
  return shape;
}

}  // namespace

void ExposurePanel::validate() const {
  const int n = groups();
  if (n == 0) throw DataError("exposure panel has no groups");
  if (!ids.empty() && static_cast<int>(ids.size()) != n) {
    throw DataError("exposure panel: group id count does not match group count");
  }
  for (int i = 0; i < n; ++i) {
    const auto label = ids.empty() ? static_cast<std::int64_t>(i) : ids[i];
    if (x[i].empty()) throw DataError("group " + std::to_string(label) + " has no exposures");
    for (double v : x[i]) {
      if (!std::isfinite(v)) {
        throw DataError("group " + std::to_string(label) + " has a non-finite exposure");
      }
    }
  }
  if (!y.empty() && static_cast<int>(y.size()) != n) {
    throw DataError("exposure panel: count vector length does not match group count");
  }
  for (auto v : y) {
    if (v < 0) throw DataError("exposure panel: negative count");
  }
  if (covariates.cols() > 0 && covariates.rows() != n) {
    throw DataError("exposure panel: covariate rows do not match group count");
  }
}

void QuantileModelConfig::validate() const {
  if (iterations <= 0) throw ConfigError("quantile model: iterations must be positive");
  if (burn_in < 0 || burn_in >= iterations) {
    throw ConfigError("quantile model: burn-in must be in [0, iterations)");
  }
  if (thin < 1) throw ConfigError("quantile model: thin must be at least 1");
  if (!(median_step > 0.0) || !(shape_step > 0.0)) {
    throw ConfigError("quantile model: proposal step sizes must be positive");
  }
  if (!(target_acceptance > 0.0 && target_acceptance < 1.0)) {
    throw ConfigError("quantile model: target acceptance must be in (0, 1)");
  }
  if (!(floor > 0.0)) throw ConfigError("quantile model: floor must be positive");
  if (!(prior_variance > 0.0) || !(ig_shape > 0.0) || !(ig_rate > 0.0)) {
    throw ConfigError("quantile model: prior parameters must be positive");
  }
  if (rho_points < 1) throw ConfigError("quantile model: rho grid needs at least one point");
}

double group_loglik(const QuantileCurve& curve, const std::vector<double>& x) {
  double s = 0.0;
  for (double v : x) {
    const double ld = curve.log_density(v);
    if (ld == kNegInf) return kNegInf;
    s += ld;
  }
  return s;
}

double group_loglik(const ThetaVector& theta, const QuantilePieceBasis& basis,
                    const std::vector<double>& x) {
  return group_loglik(QuantileCurve(basis, theta), x);
}

NormalParams hypermean_conditional(const Eigen::Ref<const Eigen::VectorXd>& v, double rho,
                                   double sigma_sq, const GmrfSpec& graph, double prior_variance) {
  // 1'(D - rho W) = (1 - rho) d' because W is symmetric with row sums d.
  const auto& d = graph.degrees();
  const double precision = (1.0 - rho) * d.sum() / sigma_sq + 1.0 / prior_variance;
  return {(1.0 - rho) * d.dot(v) / sigma_sq / precision, 1.0 / precision};
}

InverseGammaParams variance_conditional(const Eigen::Ref<const Eigen::MatrixXd>& z, double rho,
                                        const GmrfSpec& graph, double prior_shape,
                                        double prior_rate) {
  double q = 0.0;
  for (Eigen::Index b = 0; b < z.cols(); ++b) q += graph.quad_form(z.col(b), rho);
  return {prior_shape + 0.5 * static_cast<double>(z.size()), prior_rate + 0.5 * q};
}

QuantileState initial_state(const ExposurePanel& panel, const QuantilePieceBasis& basis,
                            const QuantileModelConfig& config) {
  const int n = panel.groups();
  const int L = basis.pieces();
  QuantileState s;
  s.median.resize(n);
  s.shape.resize(L, n);
  for (int i = 0; i < n; ++i) {
    const auto& x = panel.x[i];
    double median = sample_quantile(x, 0.5);
    Eigen::VectorXd shape = fit_shape(basis, x, median, config.floor);
    const double lo = *std::min_element(x.begin(), x.end());
    const double hi = *std::max_element(x.begin(), x.end());
    int guard = 0;
    while (true) {
      QuantileCurve q(basis, median, shape);
      if (q.support_lower() <= lo && q.support_upper() >= hi) break;
      if (++guard > kRepairLimit) {
        throw NumericalError("could not find starting values covering group " + std::to_string(i));
      }
      if (q.support_lower() > lo) {
        if (basis.is_lower_piece(1)) {
          shape(0) *= 2.0;
        } else {
          median -= (q.support_lower() - lo) + 1e-6 * (1.0 + std::abs(lo));
        }
      }
      if (q.support_upper() < hi) shape(L - 1) *= 2.0;
    }
    s.median(i) = median;
    s.shape.col(i) = shape;
  }
  s.hyper_median = s.median.mean();
  s.hyper_shape = s.shape.rowwise().mean();
  s.sigma0_sq = 1.0;
  s.sigma1_sq = 1.0;
  s.rho0 = 0.5;
  s.rho1 = 0.5;
  return s;
}

// ---------------------------------------------------------------------------

QuantileSampler::QuantileSampler(const ExposurePanel& panel, const QuantilePieceBasis& basis,
                                 const QuantileModelConfig& config, const GmrfSpec* graph)
    : panel_(panel), basis_(basis), config_(config), graph_(graph), rng_(config.seed) {
  config_.validate();
  panel_.validate();
  const int n = panel.groups();
  const int L = basis.pieces();
  if (config.mode == QuantileMode::gmrf) {
    if (graph == nullptr) throw ConfigError("gmrf mode requires an adjacency structure");
    if (graph->size() != n) {
      throw ConfigError("adjacency has " + std::to_string(graph->size()) + " nodes but the panel has " +
                        std::to_string(n) + " groups");
    }
    grid_.emplace(*graph, config.rho_points);
  }
  state_ = initial_state(panel, basis, config_);
  median_step_ = Eigen::VectorXd::Constant(n, config.median_step);
  shape_step_ = Eigen::MatrixXd::Constant(L, n, config.shape_step);
  accepted_ = Eigen::MatrixXd::Zero(L + 1, n);
  refresh();
}

void QuantileSampler::refresh() {
  const int n = panel_.groups();
  loglik_.resize(n);
  for (int i = 0; i < n; ++i) loglik_(i) = loglik_with(i, state_.median(i), state_.shape.col(i));
}

double QuantileSampler::loglik_with(int i, double median,
                                    const Eigen::Ref<const Eigen::VectorXd>& shape) const {
  const Eigen::VectorXd floored = shape.cwiseMax(config_.floor);
  return group_loglik(QuantileCurve(basis_, median, floored), panel_.x[i]);
}

double QuantileSampler::prior_logdensity(double value, int i, int row) const {
  if (config_.mode == QuantileMode::independent) {
    return normal_logkernel(value, 0.0, config_.prior_variance);
  }
  GmrfHyper h;
  if (row == 0) {
    h = {state_.sigma0_sq, state_.rho0, state_.hyper_median};
    const auto c = car_conditional(i, state_.median, h, *graph_);
    return normal_logkernel(value, c.mean, c.var);
  }
  h = {state_.sigma1_sq, state_.rho1, state_.hyper_shape(row - 1)};
  const auto c = car_conditional(i, state_.shape.row(row - 1).transpose(), h, *graph_);
  return normal_logkernel(value, c.mean, c.var);
}

QuantileSampler::MhResult QuantileSampler::update_median(int i, double step) {
  if (step == 0.0) return {true, 1.0};
  const double current = state_.median(i);
  const double proposal = current + step * rng_.normal();
  const double ll = loglik_with(i, proposal, state_.shape.col(i));
  const double log_ratio = ll - loglik_(i) + prior_logdensity(proposal, i, 0) -
                           prior_logdensity(current, i, 0);
  const double prob = log_ratio >= 0.0 ? 1.0 : std::exp(log_ratio);
  if (rng_.uniform() < prob) {
    state_.median(i) = proposal;
    loglik_(i) = ll;
    return {true, prob};
  }
  return {false, prob};
}

QuantileSampler::MhResult QuantileSampler::update_shape(int l, int i, double step) {
  if (step == 0.0) return {true, 1.0};
  const double current = state_.shape(l - 1, i);
  const double proposal = current + step * rng_.normal();
  double ll = loglik_(i);
  // Below the floor the likelihood does not depend on theta*.
  if (std::max(proposal, config_.floor) != std::max(current, config_.floor)) {
    Eigen::VectorXd shape = state_.shape.col(i);
    shape(l - 1) = proposal;
    ll = loglik_with(i, state_.median(i), shape);
  }
  const double log_ratio = ll - loglik_(i) + prior_logdensity(proposal, i, l) -
                           prior_logdensity(current, i, l);
  const double prob = log_ratio >= 0.0 ? 1.0 : std::exp(log_ratio);
  if (rng_.uniform() < prob) {
    state_.shape(l - 1, i) = proposal;
    loglik_(i) = ll;
    return {true, prob};
  }
  return {false, prob};
}

void QuantileSampler::update_hypermeans() {
  if (config_.mode != QuantileMode::gmrf) return;
  auto draw = [&](const NormalParams& p) { return rng_.normal(p.mean, std::sqrt(p.var)); };
  state_.hyper_median = draw(hypermean_conditional(state_.median, state_.rho0, state_.sigma0_sq,
                                                   *graph_, config_.prior_variance));
  for (int l = 0; l < basis_.pieces(); ++l) {
    state_.hyper_shape(l) = draw(hypermean_conditional(state_.shape.row(l).transpose(), state_.rho1,
                                                       state_.sigma1_sq, *graph_,
                                                       config_.prior_variance));
  }
}

void QuantileSampler::update_variances() {
  if (config_.mode != QuantileMode::gmrf) return;
  const Eigen::VectorXd z0 = state_.median.array() - state_.hyper_median;
  const auto p0 = variance_conditional(z0, state_.rho0, *graph_, config_.ig_shape, config_.ig_rate);
  state_.sigma0_sq = rng_.inverse_gamma(p0.shape, p0.rate);
  const Eigen::MatrixXd z = (state_.shape.colwise() - state_.hyper_shape).transpose();
  const auto p1 = variance_conditional(z, state_.rho1, *graph_, config_.ig_shape, config_.ig_rate);
  state_.sigma1_sq = rng_.inverse_gamma(p1.shape, p1.rate);
}

void QuantileSampler::update_dependence() {
  if (config_.mode != QuantileMode::gmrf) return;
  const int L = basis_.pieces();
  const Eigen::VectorXd z0 = state_.median.array() - state_.hyper_median;
  state_.rho0 = grid_->draw(graph_->adjacency_form(z0), state_.sigma0_sq, 1, rng_);
  double a = 0.0;
  for (int l = 0; l < L; ++l) {
    const Eigen::VectorXd z = state_.shape.row(l).transpose().array() - state_.hyper_shape(l);
    a += graph_->adjacency_form(z);
  }
  state_.rho1 = grid_->draw(a, state_.sigma1_sq, L, rng_);
}

void QuantileSampler::sweep(bool adapt) {
  const int n = panel_.groups();
  const int L = basis_.pieces();
  const double rate = std::pow(static_cast<double>(sweeps_) + 1.0, -0.6);
  auto adjust = [&](double& step, double prob) {
    step *= std::exp(rate * (prob - config_.target_acceptance));
  };
  for (int i = 0; i < n; ++i) {
    const auto r = update_median(i, median_step_(i));
    accepted_(0, i) += r.accepted;
    if (adapt) adjust(median_step_(i), r.probability);
  }
  for (int l = 1; l <= L; ++l) {
    for (int i = 0; i < n; ++i) {
      const auto r = update_shape(l, i, shape_step_(l - 1, i));
      accepted_(l, i) += r.accepted;
      if (adapt) adjust(shape_step_(l - 1, i), r.probability);
    }
  }
  update_hypermeans();
  update_variances();
  update_dependence();
  ++sweeps_;
  ++counted_sweeps_;
}

void QuantileSampler::reset_counters() {
  accepted_.setZero();
  counted_sweeps_ = 0;
}

// ---------------------------------------------------------------------------

double QuantileChain::shape_at(int draw, int l, int i) const {
  return std::max(shape[l - 1](draw, i), floor);
}

ThetaVector QuantileChain::theta(int draw, int i) const {
  ThetaVector t;
  t.floor = floor;
  t.median = median(draw, i);
  t.shape.resize(pieces);
  for (int l = 1; l <= pieces; ++l) t.shape(l - 1) = shape_at(draw, l, i);
  return t;
}

QuantileChain run_quantile_mcmc(const ExposurePanel& panel, const QuantilePieceBasis& basis,
                                const QuantileModelConfig& config, const GmrfSpec* graph) {
  QuantileSampler sampler(panel, basis, config, graph);
  const int n = panel.groups();
  const int L = basis.pieces();
  const int kept = (config.iterations - config.burn_in + config.thin - 1) / config.thin;

  QuantileChain chain;
  chain.groups = n;
  chain.pieces = L;
  chain.floor = config.floor;
  chain.median.resize(kept, n);
  chain.shape.assign(L, Eigen::MatrixXd(kept, n));
  chain.hyper_median.resize(kept);
  chain.hyper_shape.resize(kept, L);
  chain.sigma0_sq.resize(kept);
  chain.sigma1_sq.resize(kept);
  chain.rho0.resize(kept);
  chain.rho1.resize(kept);
  for (int i = 0; i < n; ++i) {
    if (static_cast<int>(panel.x[i].size()) < L + 1) {
      const auto label = panel.ids.empty() ? static_cast<std::int64_t>(i) : panel.ids[i];
      chain.warnings.push_back("group " + std::to_string(label) + " has " +
                               std::to_string(panel.x[i].size()) +
                               " exposures, fewer than the number of coefficients");
    }
  }

  int row = 0;
  for (int it = 0; it < config.iterations; ++it) {
    sampler.sweep(it < config.burn_in);
    if (it + 1 == config.burn_in) sampler.reset_counters();
    if (it < config.burn_in || (it - config.burn_in) % config.thin != 0) continue;
    const auto& s = sampler.state();
    chain.median.row(row) = s.median.transpose();
    for (int l = 0; l < L; ++l) chain.shape[l].row(row) = s.shape.row(l);
    chain.hyper_median(row) = s.hyper_median;
    chain.hyper_shape.row(row) = s.hyper_shape.transpose();
    chain.sigma0_sq(row) = s.sigma0_sq;
    chain.sigma1_sq(row) = s.sigma1_sq;
    chain.rho0(row) = s.rho0;
    chain.rho1(row) = s.rho1;
    ++row;
  }
  chain.acceptance = sampler.accepted() / static_cast<double>(sampler.counted_sweeps());
  return chain;
}

std::vector<ThetaSummary> posterior_theta_summary(const QuantileChain& chain) {
  const int S = chain.draws();
  const int L = chain.pieces;
  if (S < L + 2) {
    throw NumericalError("posterior summary needs at least " + std::to_string(L + 2) +
                         " draws, got " + std::to_string(S));
  }
  std::vector<ThetaSummary> out(chain.groups);
  Eigen::MatrixXd draws(S, L + 1);
  for (int i = 0; i < chain.groups; ++i) {
    for (int s = 0; s < S; ++s) {
      draws(s, 0) = chain.median(s, i);
      for (int l = 1; l <= L; ++l) draws(s, l) = chain.shape_at(s, l, i);
    }
    out[i].mean = draws.colwise().mean().transpose();
    const Eigen::MatrixXd centered = draws.rowwise() - out[i].mean.transpose();
    out[i].cov = centered.transpose() * centered / (S - 1.0);
  }
  return out;
}

CurveBand curve_bands(const QuantileChain& chain, const QuantilePieceBasis& basis,
                      const std::vector<double>& levels, double mass) {
  const int n = chain.groups;
  const int S = chain.draws();
  const int K = static_cast<int>(levels.size());
  CurveBand band{Eigen::MatrixXd(n, K), Eigen::MatrixXd(n, K), Eigen::MatrixXd(n, K)};
  Eigen::MatrixXd values(S, K);
  for (int i = 0; i < n; ++i) {
    for (int s = 0; s < S; ++s) {
      const auto t = chain.theta(s, i);
      QuantileCurve q(basis, t.median, t.shape);
      for (int k = 0; k < K; ++k) values(s, k) = q(levels[k]);
    }
    for (int k = 0; k < K; ++k) {
      const auto iv = summarize(values.col(k), mass);
      band.mean(i, k) = iv.mean;
      band.lower(i, k) = iv.lower;
      band.upper(i, k) = iv.upper;
    }
  }
  return band;
}

}  // namespace nbqf
