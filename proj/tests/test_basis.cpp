#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "nbqf/basis.hpp"
#include "oracles.hpp"

using namespace nbqf;

namespace {

ThetaVector make_theta(double median, std::initializer_list<double> shape) {
  ThetaVector t;
  t.median = median;
  t.shape = Eigen::VectorXd(static_cast<Eigen::Index>(shape.size()));
  int k = 0;
  for (double s : shape) t.shape[k++] = s;
  return t;
}

}  // namespace

TEST(Bernstein, ConstantBasisIsOne) { EXPECT_DOUBLE_EQ(BernsteinBasis(0)(0, 0.37), 1.0); }

TEST(Bernstein, FirstFunctionAtZero) {
  EXPECT_NEAR(BernsteinBasis(2)(0, 0.0), std::sqrt(5.0), 1e-12);
}

TEST(Bernstein, Orthonormal) {
  for (int p = 1; p <= 3; ++p) {
    BernsteinBasis b(p);
    for (int i = 0; i <= p; ++i) {
      for (int j = 0; j <= p; ++j) {
        const double g = oracle::simpson([&](double t) { return b(i, t) * b(j, t); }, 0.0, 1.0, 2000);
        EXPECT_NEAR(g, i == j ? 1.0 : 0.0, 1e-8) << "p=" << p << " i=" << i << " j=" << j;
      }
    }
  }
}

TEST(Bernstein, ReconstructsPolynomials) {
  BernsteinBasis b(3);
  auto q = [](double t) { return 0.3 - 1.2 * t + 2.0 * t * t - 0.7 * t * t * t; };
  Eigen::VectorXd coef(4);
  for (int j = 0; j <= 3; ++j) {
    coef[j] = oracle::simpson([&](double t) { return q(t) * b(j, t); }, 0.0, 1.0, 2000);
  }
  for (int k = 0; k <= 100; ++k) {
    const double t = k / 100.0;
    EXPECT_NEAR(b.curve(coef, t), q(t), 1e-8);
  }
}

TEST(Bernstein, RejectsBadArguments) {
  BernsteinBasis b(2);
  EXPECT_THROW(b(3, 0.5), std::invalid_argument);
  EXPECT_THROW(b(-1, 0.5), std::invalid_argument);
  EXPECT_THROW(b(0, 1.5), std::domain_error);
  EXPECT_THROW(BernsteinBasis(-1), std::invalid_argument);
}

TEST(Bernstein, IntegralOfCoefficients) {
  EXPECT_NEAR(BernsteinBasis(0).integral(Eigen::VectorXd::Constant(1, 0.5)), 0.5, 1e-14);
  EXPECT_EQ(BernsteinBasis(3).integral(Eigen::VectorXd::Zero(4)), 0.0);
  // Least-squares fit of beta(tau) = tau on a grid.
  BernsteinBasis b(2);
  Eigen::MatrixXd x(201, 3);
  Eigen::VectorXd y(201);
  for (int k = 0; k <= 200; ++k) {
    x.row(k) = b.evaluate(k / 200.0).transpose();
    y[k] = k / 200.0;
  }
  const Eigen::VectorXd coef = x.colPivHouseholderQr().solve(y);
  EXPECT_NEAR(b.integral(coef), 0.5, 1e-10);
}

TEST(PieceBasis, BranchZeros) {
  QuantilePieceBasis basis(BaseFamily::gamma, 4);
  EXPECT_EQ(basis(3, 0.3), 0.0);
  EXPECT_EQ(basis(1, 0.9), 0.0);
}

TEST(PieceBasis, ContinuousAtKnots) {
  for (auto family : {BaseFamily::gamma, BaseFamily::gaussian}) {
    QuantilePieceBasis basis(family, 4);
    for (int l = 1; l <= 4; ++l) {
      for (int k = 1; k < 4; ++k) {
        const double kappa = basis.knots()[k];
        EXPECT_LT(std::abs(basis(l, kappa - 1e-9) - basis(l, kappa + 1e-9)), 1e-6);
      }
    }
  }
}

TEST(PieceBasis, NonDecreasing) {
  for (int pieces : {1, 3, 4, 5}) {
    QuantilePieceBasis basis(BaseFamily::gamma, pieces);
    for (int l = 1; l <= pieces; ++l) {
      double prev = basis(l, 0.0);
      for (int k = 1; k < 1000; ++k) {
        const double v = basis(l, k / 1000.0);
        EXPECT_GE(v, prev);
        prev = v;
      }
    }
  }
}

TEST(QuantileEval, MedianKnot) {
  QuantilePieceBasis basis(BaseFamily::gamma, 4);
  EXPECT_NEAR(quantile_eval(make_theta(7.2, {0.9, 0.9, 0.9, 0.9}), basis, 0.5), 7.2, 1e-14);
}

TEST(QuantileEval, SinglePieceIsGammaQuantile) {
  QuantilePieceBasis basis(BaseFamily::gamma, 1);
  const auto theta = make_theta(0.0, {1.0});
  for (double tau : {0.1, 0.5, 0.9}) {
    EXPECT_NEAR(quantile_eval(theta, basis, tau), oracle::erlang5_quantile(tau), 1e-8);
  }
}

TEST(QuantileEval, CurveMatchesDirectSum) {
  std::mt19937_64 gen(7);
  std::uniform_real_distribution<double> unif(0.01, 3.0);
  for (auto family : {BaseFamily::gamma, BaseFamily::gaussian}) {
    for (int pieces : {2, 3, 4}) {
      QuantilePieceBasis basis(family, pieces);
      ThetaVector t;
      t.median = 5.0;
      t.shape = Eigen::VectorXd(pieces);
      for (int l = 0; l < pieces; ++l) t.shape[l] = unif(gen);
      QuantileCurve q(basis, t);
      for (int k = 1; k < 200; ++k) {
        const double tau = k / 200.0;
        EXPECT_NEAR(q(tau), quantile_eval(t, basis, tau), 1e-10);
      }
    }
  }
}

TEST(QuantileEval, MonotoneForRandomTheta) {
  std::mt19937_64 gen(11);
  std::uniform_real_distribution<double> unif(0.01, 2.0);
  QuantilePieceBasis basis(BaseFamily::gamma, 4);
  for (int trial = 0; trial < 100; ++trial) {
    ThetaVector t;
    t.median = unif(gen);
    t.shape = Eigen::VectorXd(4);
    for (int l = 0; l < 4; ++l) t.shape[l] = unif(gen);
    double prev = quantile_eval(t, basis, 0.0);
    for (int k = 1; k < 1000; ++k) {
      const double v = quantile_eval(t, basis, k / 1000.0);
      ASSERT_GE(v, prev);
      prev = v;
    }
  }
}

TEST(QuantileEval, RejectsShapeBelowFloor) {
  QuantilePieceBasis basis(BaseFamily::gamma, 2);
  EXPECT_THROW(quantile_eval(make_theta(1.0, {0.5, 0.001}), basis, 0.3), std::invalid_argument);
  EXPECT_THROW(quantile_eval(make_theta(1.0, {0.5}), basis, 0.3), std::invalid_argument);
}

TEST(QuantileInvert, MedianFixedPoint) {
  QuantilePieceBasis basis(BaseFamily::gamma, 4);
  QuantileCurve q(basis, make_theta(7.2, {0.9, 0.4, 1.3, 0.9}));
  EXPECT_NEAR(*q.invert(q(0.5)), 0.5, 1e-9);
}

TEST(QuantileInvert, SinglePieceGammaCdf) {
  QuantilePieceBasis basis(BaseFamily::gamma, 1);
  QuantileCurve q(basis, make_theta(0.0, {1.0}));
  EXPECT_NEAR(*q.invert(5.0), oracle::erlang5_cdf(5.0), 1e-10);
  EXPECT_NEAR(*q.invert(5.0), 0.5595, 1e-4);
}

TEST(QuantileInvert, OutOfSupport) {
  QuantilePieceBasis basis(BaseFamily::gamma, 4);
  QuantileCurve q(basis, make_theta(7.2, {0.9, 0.9, 0.9, 0.9}));
  EXPECT_FALSE(q.invert(q.support_lower() - 1e-6).has_value());
  EXPECT_FALSE(q.invert(q.support_upper() + 1e-6).has_value());
  EXPECT_FALSE(q.invert(-100.0).has_value());
}

TEST(QuantileInvert, AgreesWithBisection) {
  for (auto family : {BaseFamily::gamma, BaseFamily::gaussian}) {
    QuantilePieceBasis basis(family, 4);
    const auto theta = make_theta(3.0, {0.3, 1.7, 0.05, 2.2});
    QuantileCurve q(basis, theta);
    for (int k = 1; k < 100; ++k) {
      const double tau = k / 100.0;
      const double x = quantile_eval(theta, basis, tau);
      const double ref = oracle::bisect([&](double t) { return quantile_eval(theta, basis, t); }, x,
                                        kLowerClip, 1.0 - kUpperClip, 60);
      const double got = *q.invert(x);
      EXPECT_NEAR(got, tau, 1e-8);
      EXPECT_LE(std::abs(quantile_eval(theta, basis, got) - x), 1e-10 * std::max(1.0, std::abs(x)));
      EXPECT_NEAR(got, ref, 1e-8);
    }
  }
}

TEST(QuantileDensity, SinglePieceGammaPdf) {
  QuantilePieceBasis basis(BaseFamily::gamma, 1);
  QuantileCurve q(basis, make_theta(0.0, {1.0}));
  EXPECT_NEAR(q.density(4.0), oracle::erlang5_pdf(4.0), 1e-12);
  EXPECT_NEAR(q.density(4.0), 0.19537, 1e-5);
  EXPECT_EQ(q.density(-1.0), 0.0);
  EXPECT_EQ(q.log_density(-1.0), -INFINITY);
}

TEST(QuantileDensity, IntegratesToOne) {
  for (auto family : {BaseFamily::gamma, BaseFamily::gaussian}) {
    QuantilePieceBasis basis(family, 4);
    QuantileCurve q(basis, make_theta(7.2, {0.9, 0.4, 1.3, 0.6}));
    const double a = q.support_lower();
    const double b = std::min(q.support_upper(), q(1.0 - 1e-7));
    const int n = 400000;
    const double h = (b - a) / n;
    double s = 0.5 * (q.density(a) + q.density(b));
    for (int k = 1; k < n; ++k) {
      const double d = q.density(a + k * h);
      ASSERT_GE(d, 0.0);
      s += d;
    }
    EXPECT_NEAR(s * h, 1.0, 1e-4);
  }
}

TEST(QuantileDensity, DualToQuantileSlope) {
  QuantilePieceBasis basis(BaseFamily::gamma, 4);
  const auto theta = make_theta(7.2, {0.9, 0.4, 1.3, 0.6});
  QuantileCurve q(basis, theta);
  for (int k = 1; k <= 20; ++k) {
    const double tau = (k - 0.5) / 20.0;
    const double h = 1e-5;
    // d tau / dx at x = Q(tau) times f(x) should be 1.
    const double dx = quantile_eval(theta, basis, tau + h) - quantile_eval(theta, basis, tau - h);
    EXPECT_NEAR(2.0 * h / dx / q.density(q(tau)), 1.0, 1e-5);
    EXPECT_NEAR(q.slope(tau) * q.density(q(tau)), 1.0, 1e-10);
  }
}

TEST(CrossIntegral, ConstantColumn) {
  QuantilePieceBasis basis(BaseFamily::gamma, 4);
  const auto m = cross_integral(BernsteinBasis(0), basis);
  EXPECT_NEAR(m.values(0, 0), 1.0, 1e-8);
  const auto m3 = cross_integral(BernsteinBasis(3), basis);
  for (int j = 0; j <= 3; ++j) EXPECT_NEAR(m3.values(j, 0), BernsteinBasis(3).integrals()[j], 1e-8);
}

TEST(CrossIntegral, FeaturesAreLinear) {
  QuantilePieceBasis basis(BaseFamily::gamma, 4);
  BernsteinBasis bern(2);
  const auto m = cross_integral(bern, basis);
  const auto theta = make_theta(7.2, {0.9, 0.4, 1.3, 0.6});
  QuantileCurve q(basis, theta);
  const Eigen::VectorXd x = m.features(theta.stacked());
  for (int j = 0; j <= 2; ++j) {
    const double direct = basis.rule().integrate([&](double t) { return bern(j, t) * q(t); });
    EXPECT_NEAR(x[j], direct, 1e-10);
  }
}

TEST(CrossIntegral, MeanIdentity) {
  QuantilePieceBasis basis(BaseFamily::gamma, 4);
  const auto theta = make_theta(7.2, {0.9, 0.9, 0.9, 0.9});
  const auto m = cross_integral(BernsteinBasis(0), basis);
  const double c = 0.7;
  const double predicted = c * m.features(theta.stacked())[0];
  QuantileCurve q(basis, theta);
  std::mt19937_64 gen(3);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  double s = 0.0;
  const int n = 1000000;
  for (int k = 0; k < n; ++k) s += q(unif(gen));
  EXPECT_NEAR(predicted, c * s / n, 1e-2);
  EXPECT_NEAR(predicted, c * theta.stacked().dot(piece_integrals(basis)), 1e-8);
}

TEST(CrossIntegral, ClippedGammaMean) {
  QuantilePieceBasis basis(BaseFamily::gamma, 1);
  EXPECT_NEAR(piece_integrals(basis)[1], 5.0, 1e-6);
  QuantilePieceBasis four(BaseFamily::gamma, 4);
  const Eigen::VectorXd ones = Eigen::VectorXd::Ones(5);
  // theta_0 = 0 with unit shapes reproduces a shifted Gamma(5,1) mean.
  Eigen::VectorXd stacked = ones;
  stacked[0] = 0.0;
  EXPECT_NEAR(stacked.dot(piece_integrals(four)), 5.0 - four.knot_quantile(3), 1e-6);
}
