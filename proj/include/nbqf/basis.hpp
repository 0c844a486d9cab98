#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include <Eigen/Dense>

namespace nbqf {

/// Lower quantile-level clip used when inverting a quantile function.
inline constexpr double kLowerClip = 1e-8;
/// Upper quantile-level clip; base quantile functions are never evaluated at 1.
inline constexpr double kUpperClip = 1e-9;
/// Gauss-Legendre nodes per quadrature panel.
inline constexpr int kGaussNodes = 41;

/// Gauss-Legendre nodes and weights on [-1, 1].
struct GaussLegendre {
  std::vector<double> nodes;
  std::vector<double> weights;
};

GaussLegendre gauss_legendre(int points);

/// A fixed set of quadrature nodes and weights on a sub-range of [0, 1].
struct QuadratureRule {
  std::vector<double> nodes;
  std::vector<double> weights;

  template <class F>
  double integrate(F&& f) const {
    double sum = 0.0;
    for (std::size_t k = 0; k < nodes.size(); ++k) sum += weights[k] * f(nodes[k]);
    return sum;
  }
};

/// Composite Gauss-Legendre rule over [0, 1 - kUpperClip] with one panel per
/// breakpoint interval. The first and last intervals are refined geometrically
/// toward 0 and 1, where base quantile functions are singular.
QuadratureRule clipped_rule(const std::vector<double>& breakpoints, int points = kGaussNodes);

/// Orthonormal Bernstein polynomials K_{0,p}, ..., K_{p,p} on [0, 1].
class BernsteinBasis {
 public:
  static constexpr int kMaxDegree = 30;

  explicit BernsteinBasis(int degree);

  int degree() const { return degree_; }
  int size() const { return degree_ + 1; }

  /// K_{j,p}(tau). Throws std::invalid_argument for j outside [0, p] and
  /// std::domain_error for tau outside [0, 1].
  double operator()(int j, double tau) const;

  /// (K_{0,p}(tau), ..., K_{p,p}(tau)).
  Eigen::VectorXd evaluate(double tau) const;

  /// m_j = integral of K_{j,p} over [0, 1].
  const Eigen::VectorXd& integrals() const { return integrals_; }

  /// Integral over [0, 1] of beta(tau) = sum_j coef_j K_{j,p}(tau).
  double integral(const Eigen::Ref<const Eigen::VectorXd>& coef) const;

  /// beta(tau) for the given coefficients.
  double curve(const Eigen::Ref<const Eigen::VectorXd>& coef, double tau) const;

 private:
  double binom(int n, int k) const { return binom_[n][k]; }

  int degree_;
  std::vector<std::vector<double>> binom_;
  Eigen::VectorXd integrals_;
};

enum class BaseFamily { gaussian, gamma };

/// Piecewise basis B_1..B_L for quantile functions built from the quantile
/// function F^{-1} of a base distribution on L equal-width knot intervals.
///
/// Pieces whose interval ends at or below 0.5 are anchored at their upper knot
/// (they are negative below it); the others are anchored at their lower knot.
/// Every B_l vanishes at the median knot, so theta_0 is the median whenever 0.5
/// is a knot.
class QuantilePieceBasis {
 public:
  QuantilePieceBasis(BaseFamily family, int pieces, double gamma_shape = 5.0,
                     double gamma_scale = 1.0);

  BaseFamily family() const { return family_; }
  int pieces() const { return pieces_; }
  double gamma_shape() const { return shape_; }
  double gamma_scale() const { return scale_; }

  /// kappa_1 = 0 < ... < kappa_{L+1} = 1.
  const std::vector<double>& knots() const { return knots_; }

  /// True when piece l (1-based) is anchored at its upper knot.
  bool is_lower_piece(int l) const;

  /// Index 1..L of the knot interval containing tau (tau = 1 maps to L).
  int segment(double tau) const;

  double base_quantile(double tau) const;
  double base_cdf(double x) const;
  double base_pdf(double x) const;
  double base_log_pdf(double x) const;

  /// B_l(tau) for l in 1..L and tau in [0, 1]. May be infinite at tau = 0 or 1.
  double operator()(int l, double tau) const;

  /// dB_l/dtau: 1 / f(F^{-1}(tau)) on the active interval of piece l, else 0.
  double derivative(int l, double tau) const;

  /// F^{-1}(anchor knot) of piece l.
  double anchor_value(int l) const { return anchor_[l - 1]; }

  /// F^{-1}(kappa_k) for k in 1..L+1 (may be infinite at the ends).
  double knot_quantile(int k) const { return knot_quantile_[k - 1]; }
  /// F^{-1}(kLowerClip) and F^{-1}(1 - kUpperClip).
  double clipped_lower_quantile() const { return clip_lo_; }
  double clipped_upper_quantile() const { return clip_hi_; }

  /// Constant value of B_l on knot interval k (k != l).
  double plateau(int l, int k) const { return plateau_(l - 1, k - 1); }

  /// Quadrature rule aligned with the knots (see clipped_rule).
  const QuadratureRule& rule() const { return rule_; }

 private:
  BaseFamily family_;
  int pieces_;
  double shape_;
  double scale_;
  double log_norm_;
  std::vector<double> knots_;
  std::vector<double> knot_quantile_;
  std::vector<double> anchor_;
  double clip_lo_ = 0.0;
  double clip_hi_ = 0.0;
  Eigen::MatrixXd plateau_;
  QuadratureRule rule_;
};

/// Quantile-function coefficients (theta_0, theta_1..theta_L) of one group.
struct ThetaVector {
  double median = 0.0;
  Eigen::VectorXd shape;
  double floor = 0.01;

  /// (theta_0, theta_1, ..., theta_L).
  Eigen::VectorXd stacked() const;
  static ThetaVector from_stacked(const Eigen::Ref<const Eigen::VectorXd>& v,
                                  double floor = 0.01);

  /// Throws std::invalid_argument unless shape has L entries, each >= floor > 0.
  void validate(const QuantilePieceBasis& basis) const;
};

/// Q(tau) = theta_0 + sum_l B_l(tau) theta_l, evaluated piecewise: on knot
/// interval k it equals offset_k + theta_k F^{-1}(tau), which makes inversion
/// and the density closed form.
class QuantileCurve {
 public:
  /// Validates theta.
  QuantileCurve(const QuantilePieceBasis& basis, const ThetaVector& theta);
  /// Unchecked fast path; every shape entry must be > 0.
  QuantileCurve(const QuantilePieceBasis& basis, double median,
                const Eigen::Ref<const Eigen::VectorXd>& shape);

  double operator()(double tau) const;

  /// dQ/dtau.
  double slope(double tau) const;

  /// tau* with Q(tau*) = x, or nullopt when x lies outside
  /// [Q(kLowerClip), Q(1 - kUpperClip)].
  std::optional<double> invert(double x) const;

  /// Density of the distribution with quantile function Q; 0 outside support.
  double density(double x) const;

  /// log density; -infinity outside support.
  double log_density(double x) const;

  double support_lower() const { return lower_; }
  double support_upper() const { return upper_; }

 private:
  void build(double median, const Eigen::Ref<const Eigen::VectorXd>& shape);
  int locate(double x) const;

  const QuantilePieceBasis* basis_;
  std::vector<double> offset_;
  std::vector<double> scale_;
  std::vector<double> log_scale_;
  std::vector<double> breaks_;
  double lower_ = 0.0;
  double upper_ = 0.0;
};

/// Direct-sum evaluation of Q(tau); the reference definition.
double quantile_eval(const ThetaVector& theta, const QuantilePieceBasis& basis, double tau);

/// M_{j,l} = integral over [0, 1 - kUpperClip] of K_{j,p}(tau) Btilde_l(tau),
/// with Btilde = (1, B_1, ..., B_L).
struct CrossIntegralMatrix {
  Eigen::MatrixXd values;
  int nodes_per_panel = kGaussNodes;
  double upper_clip = kUpperClip;

  /// X* = M theta for stacked theta = (theta_0, ..., theta_L).
  Eigen::VectorXd features(const Eigen::Ref<const Eigen::VectorXd>& stacked_theta) const {
    return values * stacked_theta;
  }
};

CrossIntegralMatrix cross_integral(const BernsteinBasis& bernstein, const QuantilePieceBasis& basis);

/// (1, integral of B_1, ..., integral of B_L) over the clipped range; the mean
/// of Q is the dot product of this with the stacked theta.
Eigen::VectorXd piece_integrals(const QuantilePieceBasis& basis);

}  // namespace nbqf
