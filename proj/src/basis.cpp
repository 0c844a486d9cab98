#include "nbqf/basis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>

#include <boost/math/distributions/gamma.hpp>
#include <boost/math/distributions/normal.hpp>

namespace nbqf {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void append_panel(QuadratureRule& rule, const GaussLegendre& gl, double a, double b) {
  const double half = 0.5 * (b - a);
  const double mid = 0.5 * (a + b);
  for (std::size_t k = 0; k < gl.nodes.size(); ++k) {
    rule.nodes.push_back(mid + half * gl.nodes[k]);
    rule.weights.push_back(half * gl.weights[k]);
  }
}

// Breakpoints a = s_0 > s_1 > ... approaching `end` geometrically, stopping at
// distance `stop` from it.
std::vector<double> graded_toward(double start, double end, double stop) {
  std::vector<double> points{start};
  double width = std::abs(end - start);
  const double direction = end > start ? 1.0 : -1.0;
  while (width > 10.0 * stop) {
    width /= 10.0;
    points.push_back(end - direction * width);
  }
  points.push_back(end - direction * stop);
  return points;
}

}  // namespace

GaussLegendre gauss_legendre(int points) {
  if (points < 1) throw std::invalid_argument("gauss_legendre: need at least one node");
  GaussLegendre gl;
  gl.nodes.resize(points);
  gl.weights.resize(points);
  const int half = (points + 1) / 2;
  for (int i = 0; i < half; ++i) {
    double x = std::cos(std::numbers::pi * (i + 0.75) / (points + 0.5));
    double dp = 0.0;
    for (int iter = 0; iter < 100; ++iter) {
      double p0 = 1.0;
      double p1 = x;
      for (int k = 2; k <= points; ++k) {
        const double pk = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = pk;
      }
      if (points == 1) {
        p1 = x;
        p0 = 1.0;
      }
      dp = points * (x * p1 - p0) / (x * x - 1.0);
      const double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-16) break;
    }
    gl.nodes[i] = -x;
    gl.nodes[points - 1 - i] = x;
    const double w = 2.0 / ((1.0 - x * x) * dp * dp);
    gl.weights[i] = w;
    gl.weights[points - 1 - i] = w;
  }
  if (points % 2 == 1) gl.nodes[half - 1] = 0.0;
  return gl;
}

QuadratureRule clipped_rule(const std::vector<double>& breakpoints, int points) {
  if (breakpoints.size() < 2 || breakpoints.front() != 0.0 || breakpoints.back() != 1.0) {
    throw std::invalid_argument("clipped_rule: breakpoints must run from 0 to 1");
  }
  std::vector<double> cuts(breakpoints);
  if (cuts.size() == 2) cuts = {0.0, 0.5, 1.0};

  std::vector<double> edges;
  // Lower end: [0, s_J], [s_J, s_{J-1}], ..., [s_1, cuts[1]].
  auto low = graded_toward(cuts[1], 0.0, kUpperClip);
  edges.push_back(0.0);
  for (auto it = low.rbegin(); it != low.rend(); ++it) edges.push_back(*it);
  for (std::size_t k = 2; k + 1 < cuts.size(); ++k) edges.push_back(cuts[k]);
  // Upper end stops at 1 - kUpperClip.
  auto high = graded_toward(cuts[cuts.size() - 2], 1.0, kUpperClip);
  for (std::size_t k = 1; k < high.size(); ++k) edges.push_back(high[k]);

  const auto gl = gauss_legendre(points);
  QuadratureRule rule;
  for (std::size_t k = 0; k + 1 < edges.size(); ++k) append_panel(rule, gl, edges[k], edges[k + 1]);
  return rule;
}

// ---------------------------------------------------------------------------
// BernsteinBasis

BernsteinBasis::BernsteinBasis(int degree) : degree_(degree) {
  if (degree < 0 || degree > kMaxDegree) {
    throw std::invalid_argument("BernsteinBasis: degree must lie in [0, " +
                                std::to_string(kMaxDegree) + "]");
  }
  // Exact integer Pascal triangle up to 2p+1, converted once.
  const int top = 2 * degree + 1;
  std::vector<std::vector<std::uint64_t>> exact(top + 1);
  binom_.resize(top + 1);
  for (int n = 0; n <= top; ++n) {
    exact[n].assign(n + 1, 1);
    for (int k = 1; k < n; ++k) exact[n][k] = exact[n - 1][k - 1] + exact[n - 1][k];
    binom_[n].assign(exact[n].begin(), exact[n].end());
  }

  const auto gl = gauss_legendre(kGaussNodes);
  integrals_ = Eigen::VectorXd::Zero(size());
  for (std::size_t k = 0; k < gl.nodes.size(); ++k) {
    integrals_ += 0.5 * gl.weights[k] * evaluate(0.5 + 0.5 * gl.nodes[k]);
  }
}

double BernsteinBasis::operator()(int j, double tau) const {
  if (j < 0 || j > degree_) {
    throw std::invalid_argument("bernstein: index " + std::to_string(j) + " outside [0, " +
                                std::to_string(degree_) + "]");
  }
  if (!(tau >= 0.0 && tau <= 1.0)) throw std::domain_error("bernstein: tau outside [0, 1]");
  const int p = degree_;
  double sum = 0.0;
  double sign = 1.0;
  for (int k = 0; k <= j; ++k) {
    sum += sign * binom(2 * p + 1 - k, j - k) * binom(j, k) * std::pow(tau, j - k);
    sign = -sign;
  }
  return std::sqrt(2.0 * (p - j) + 1.0) * std::pow(1.0 - tau, p - j) * sum;
}

Eigen::VectorXd BernsteinBasis::evaluate(double tau) const {
  Eigen::VectorXd out(size());
  for (int j = 0; j <= degree_; ++j) out[j] = (*this)(j, tau);
  return out;
}

double BernsteinBasis::integral(const Eigen::Ref<const Eigen::VectorXd>& coef) const {
  if (coef.size() != size()) throw std::invalid_argument("bernstein: coefficient size mismatch");
  return coef.dot(integrals_);
}

double BernsteinBasis::curve(const Eigen::Ref<const Eigen::VectorXd>& coef, double tau) const {
  if (coef.size() != size()) throw std::invalid_argument("bernstein: coefficient size mismatch");
  return coef.dot(evaluate(tau));
}

// ---------------------------------------------------------------------------
// QuantilePieceBasis

QuantilePieceBasis::QuantilePieceBasis(BaseFamily family, int pieces, double gamma_shape,
                                       double gamma_scale)
    : family_(family), pieces_(pieces), shape_(gamma_shape), scale_(gamma_scale) {
  if (pieces < 1) throw std::invalid_argument("QuantilePieceBasis: need at least one piece");
  if (family == BaseFamily::gamma && !(gamma_shape > 0.0 && gamma_scale > 0.0)) {
    throw std::invalid_argument("QuantilePieceBasis: gamma shape and scale must be positive");
  }
  if (family == BaseFamily::gaussian && pieces < 2) {
    throw std::invalid_argument("QuantilePieceBasis: the Gaussian basis needs two or more pieces");
  }
  log_norm_ = family == BaseFamily::gamma
                  ? std::lgamma(shape_) + shape_ * std::log(scale_)
                  : 0.5 * std::log(2.0 * std::numbers::pi);

  knots_.resize(pieces + 1);
  for (int k = 0; k <= pieces; ++k) knots_[k] = static_cast<double>(k) / pieces;
  knots_.back() = 1.0;

  knot_quantile_.resize(pieces + 1);
  for (int k = 0; k <= pieces; ++k) knot_quantile_[k] = base_quantile(knots_[k]);
  clip_lo_ = base_quantile(kLowerClip);
  clip_hi_ = base_quantile(1.0 - kUpperClip);

  anchor_.resize(pieces);
  for (int l = 1; l <= pieces; ++l) {
    anchor_[l - 1] = is_lower_piece(l) ? knot_quantile_[l] : knot_quantile_[l - 1];
  }

  plateau_ = Eigen::MatrixXd::Zero(pieces, pieces);
  for (int l = 1; l <= pieces; ++l) {
    for (int k = 1; k <= pieces; ++k) {
      if (k == l) continue;
      if (is_lower_piece(l) && k < l) {
        plateau_(l - 1, k - 1) = knot_quantile_[l - 1] - knot_quantile_[l];
      } else if (!is_lower_piece(l) && k > l) {
        plateau_(l - 1, k - 1) = knot_quantile_[l] - knot_quantile_[l - 1];
      }
    }
  }
  rule_ = clipped_rule(knots_);
}

bool QuantilePieceBasis::is_lower_piece(int l) const { return knots_[l] <= 0.5; }

int QuantilePieceBasis::segment(double tau) const {
  const auto it = std::upper_bound(knots_.begin(), knots_.end(), tau);
  const int k = static_cast<int>(it - knots_.begin());
  return std::clamp(k, 1, pieces_);
}

double QuantilePieceBasis::base_quantile(double tau) const {
  if (!(tau >= 0.0 && tau <= 1.0)) throw std::domain_error("base quantile: tau outside [0, 1]");
  if (tau == 1.0) return kInf;
  if (family_ == BaseFamily::gamma) {
    if (tau == 0.0) return 0.0;
    return boost::math::quantile(boost::math::gamma_distribution<double>(shape_, scale_), tau);
  }
  if (tau == 0.0) return -kInf;
  return boost::math::quantile(boost::math::normal_distribution<double>(), tau);
}

double QuantilePieceBasis::base_cdf(double x) const {
  if (family_ == BaseFamily::gamma) {
    if (x <= 0.0) return 0.0;
    if (std::isinf(x)) return 1.0;
    return boost::math::cdf(boost::math::gamma_distribution<double>(shape_, scale_), x);
  }
  if (std::isinf(x)) return x > 0 ? 1.0 : 0.0;
  return boost::math::cdf(boost::math::normal_distribution<double>(), x);
}

double QuantilePieceBasis::base_pdf(double x) const { return std::exp(base_log_pdf(x)); }

double QuantilePieceBasis::base_log_pdf(double x) const {
  if (family_ == BaseFamily::gamma) {
    if (!(x > 0.0) || std::isinf(x)) return -kInf;
    return (shape_ - 1.0) * std::log(x) - x / scale_ - log_norm_;
  }
  if (std::isinf(x)) return -kInf;
  return -0.5 * x * x - log_norm_;
}

double QuantilePieceBasis::operator()(int l, double tau) const {
  if (l < 1 || l > pieces_) throw std::invalid_argument("piece basis: index outside 1..L");
  if (!(tau >= 0.0 && tau <= 1.0)) throw std::domain_error("piece basis: tau outside [0, 1]");
  const double lo = knots_[l - 1];
  const double hi = knots_[l];
  if (is_lower_piece(l)) {
    if (tau < lo) return knot_quantile_[l - 1] - knot_quantile_[l];
    if (tau < hi) return base_quantile(tau) - knot_quantile_[l];
    return 0.0;
  }
  if (tau < lo) return 0.0;
  if (tau < hi) return base_quantile(tau) - knot_quantile_[l - 1];
  return knot_quantile_[l] - knot_quantile_[l - 1];
}

double QuantilePieceBasis::derivative(int l, double tau) const {
  if (l < 1 || l > pieces_) throw std::invalid_argument("piece basis: index outside 1..L");
  if (!(tau >= 0.0 && tau <= 1.0)) throw std::domain_error("piece basis: tau outside [0, 1]");
  if (tau < knots_[l - 1] || tau >= knots_[l]) return 0.0;
  return std::exp(-base_log_pdf(base_quantile(tau)));
}

// ---------------------------------------------------------------------------
// ThetaVector

Eigen::VectorXd ThetaVector::stacked() const {
  Eigen::VectorXd out(shape.size() + 1);
  out[0] = median;
  out.tail(shape.size()) = shape;
  return out;
}

ThetaVector ThetaVector::from_stacked(const Eigen::Ref<const Eigen::VectorXd>& v, double floor) {
  if (v.size() < 2) throw std::invalid_argument("ThetaVector: need theta_0 and at least one shape");
  ThetaVector t;
  t.median = v[0];
  t.shape = v.tail(v.size() - 1);
  t.floor = floor;
  return t;
}

void ThetaVector::validate(const QuantilePieceBasis& basis) const {
  if (!(floor > 0.0)) throw std::invalid_argument("ThetaVector: floor must be positive");
  if (shape.size() != basis.pieces()) {
    throw std::invalid_argument("ThetaVector: expected " + std::to_string(basis.pieces()) +
                                " shape coefficients, got " + std::to_string(shape.size()));
  }
  if (!std::isfinite(median)) throw std::invalid_argument("ThetaVector: median not finite");
  for (Eigen::Index l = 0; l < shape.size(); ++l) {
    if (!(shape[l] >= floor) || !std::isfinite(shape[l])) {
      throw std::invalid_argument("ThetaVector: shape coefficient " + std::to_string(l + 1) +
                                  " below the floor");
    }
  }
}

// ---------------------------------------------------------------------------
// QuantileCurve

QuantileCurve::QuantileCurve(const QuantilePieceBasis& basis, const ThetaVector& theta)
    : basis_(&basis) {
  theta.validate(basis);
  build(theta.median, theta.shape);
}

QuantileCurve::QuantileCurve(const QuantilePieceBasis& basis, double median,
                             const Eigen::Ref<const Eigen::VectorXd>& shape)
    : basis_(&basis) {
  build(median, shape);
}

void QuantileCurve::build(double median, const Eigen::Ref<const Eigen::VectorXd>& shape) {
  const int L = basis_->pieces();
  offset_.assign(L, median);
  scale_.resize(L);
  log_scale_.resize(L);
  for (int k = 1; k <= L; ++k) {
    double a = median - shape[k - 1] * basis_->anchor_value(k);
    for (int l = 1; l <= L; ++l) {
      if (l != k) a += shape[l - 1] * basis_->plateau(l, k);
    }
    offset_[k - 1] = a;
    scale_[k - 1] = shape[k - 1];
    log_scale_[k - 1] = std::log(shape[k - 1]);
  }
  breaks_.resize(L + 1);
  breaks_[0] = offset_[0] + scale_[0] * basis_->clipped_lower_quantile();
  for (int k = 2; k <= L; ++k) {
    breaks_[k - 1] = offset_[k - 1] + scale_[k - 1] * basis_->knot_quantile(k);
  }
  breaks_[L] = offset_[L - 1] + scale_[L - 1] * basis_->clipped_upper_quantile();
  lower_ = breaks_[0];
  upper_ = breaks_[L];
}

int QuantileCurve::locate(double x) const {
  int k = basis_->pieces();
  while (k > 1 && x < breaks_[k - 1]) --k;
  return k;
}

double QuantileCurve::operator()(double tau) const {
  const int k = basis_->segment(tau);
  return offset_[k - 1] + scale_[k - 1] * basis_->base_quantile(tau);
}

double QuantileCurve::slope(double tau) const {
  const int k = basis_->segment(tau);
  return scale_[k - 1] * std::exp(-basis_->base_log_pdf(basis_->base_quantile(tau)));
}

std::optional<double> QuantileCurve::invert(double x) const {
  if (!(x >= lower_ && x <= upper_)) return std::nullopt;
  const int k = locate(x);
  const double u = (x - offset_[k - 1]) / scale_[k - 1];
  const auto& knots = basis_->knots();
  const double lo = std::max(knots[k - 1], kLowerClip);
  const double hi = std::min(knots[k], 1.0 - kUpperClip);
  return std::clamp(basis_->base_cdf(u), lo, hi);
}

double QuantileCurve::density(double x) const { return std::exp(log_density(x)); }

double QuantileCurve::log_density(double x) const {
  if (!(x >= lower_ && x <= upper_)) return -kInf;
  const int k = locate(x);
  const double u = (x - offset_[k - 1]) / scale_[k - 1];
  return basis_->base_log_pdf(u) - log_scale_[k - 1];
}

double quantile_eval(const ThetaVector& theta, const QuantilePieceBasis& basis, double tau) {
  theta.validate(basis);
  double q = theta.median;
  for (int l = 1; l <= basis.pieces(); ++l) q += basis(l, tau) * theta.shape[l - 1];
  return q;
}

// ---------------------------------------------------------------------------
// Cross integrals

CrossIntegralMatrix cross_integral(const BernsteinBasis& bernstein, const QuantilePieceBasis& basis) {
  const int L = basis.pieces();
  CrossIntegralMatrix m;
  m.values = Eigen::MatrixXd::Zero(bernstein.size(), L + 1);
  const auto& rule = basis.rule();
  Eigen::VectorXd pieces(L + 1);
  for (std::size_t k = 0; k < rule.nodes.size(); ++k) {
    const double tau = rule.nodes[k];
    pieces[0] = 1.0;
    for (int l = 1; l <= L; ++l) pieces[l] = basis(l, tau);
    m.values.noalias() += rule.weights[k] * bernstein.evaluate(tau) * pieces.transpose();
  }
  return m;
}

Eigen::VectorXd piece_integrals(const QuantilePieceBasis& basis) {
  const int L = basis.pieces();
  Eigen::VectorXd out(L + 1);
  out[0] = 1.0;
  for (int l = 1; l <= L; ++l) {
    out[l] = basis.rule().integrate([&](double tau) { return basis(l, tau); });
  }
  return out;
}

}  // namespace nbqf
