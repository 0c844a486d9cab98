#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "nbqf/rng.hpp"

namespace nbqf {

/// Neighborhood structure of a first-order conditional autoregressive prior.
///
/// Immutable after construction. Construction rejects self-loops, negative or
/// asymmetric weights, out-of-range node ids and isolated nodes.
class GmrfSpec {
 public:
  struct Neighbor {
    int node;
    double weight;
  };

  static GmrfSpec chain(int n);
  /// Undirected 0-based edges, each with weight 1. Duplicate edges are merged.
  static GmrfSpec from_edges(int n, const std::vector<std::pair<int, int>>& edges);
  static GmrfSpec from_dense(const Eigen::MatrixXd& adjacency);

  int size() const { return static_cast<int>(degree_.size()); }
  const std::vector<Neighbor>& neighbors(int i) const { return neighbors_[i]; }
  double degree(int i) const { return degree_(i); }
  const Eigen::VectorXd& degrees() const { return degree_; }

  /// Eigenvalues of D^-1 W, ascending; all lie in [-1, 1].
  const Eigen::VectorXd& eigenvalues() const { return eig_; }

  Eigen::MatrixXd adjacency() const;
  /// D - rho W.
  Eigen::MatrixXd precision(double rho) const;

  /// z' W z.
  double adjacency_form(const Eigen::Ref<const Eigen::VectorXd>& z) const;
  /// z' (D - rho W) z.
  double quad_form(const Eigen::Ref<const Eigen::VectorXd>& z, double rho) const;
  /// (D - rho W) z.
  Eigen::VectorXd apply(const Eigen::Ref<const Eigen::VectorXd>& z, double rho) const;

 private:
  explicit GmrfSpec(std::vector<std::vector<Neighbor>> neighbors);

  std::vector<std::vector<Neighbor>> neighbors_;
  Eigen::VectorXd degree_;
  Eigen::VectorXd eig_;
};

struct GmrfHyper {
  double sigma_sq = 1.0;
  double rho = 0.5;
  double mean = 0.0;
};

struct Conditional {
  double mean;
  double var;
};

/// Full conditional of v_i under MVN(mean 1, sigma^2 (D - rho W)^-1).
Conditional car_conditional(int i, const Eigen::Ref<const Eigen::VectorXd>& v,
                            const GmrfHyper& hyper, const GmrfSpec& spec);

/// 1/2 sum log(1 - rho lambda_i) + rho z'Wz / (2 sigma^2); the log density of
/// the centered vector z as a function of rho, up to a constant.
/// Throws std::domain_error when some 1 - rho lambda_i <= 0.
double rho_logdensity(double rho, const Eigen::Ref<const Eigen::VectorXd>& z, double sigma_sq,
                      const GmrfSpec& spec);

/// Discrete uniform prior on rho over (k - 1/2) / points, k = 1..points, with
/// the log-determinant term tabulated once.
class RhoGrid {
 public:
  static constexpr int kDefaultPoints = 1000;

  explicit RhoGrid(const GmrfSpec& spec, int points = kDefaultPoints);

  int size() const { return static_cast<int>(values_.size()); }
  const std::vector<double>& values() const { return values_; }

  /// Normalized point masses for `blocks` independent centered vectors that
  /// share (sigma^2, rho) and have total z'Wz equal to `adjacency_sum`.
  std::vector<double> probabilities(double adjacency_sum, double sigma_sq, int blocks = 1) const;

  double draw(double adjacency_sum, double sigma_sq, int blocks, Rng& rng) const;

 private:
  std::vector<double> values_;
  std::vector<double> half_log_det_;
};

/// Exact Gibbs draw of rho for one centered vector z.
double discrete_rho_update(const Eigen::Ref<const Eigen::VectorXd>& z, double sigma_sq,
                           const GmrfSpec& spec, const RhoGrid& grid, Rng& rng);

/// One joint draw from MVN(mean 1, sigma^2 (D - rho W)^-1).
Eigen::VectorXd sample_gmrf(const GmrfSpec& spec, const GmrfHyper& hyper, Rng& rng);

}  // namespace nbqf
