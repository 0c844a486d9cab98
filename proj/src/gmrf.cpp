#include "nbqf/gmrf.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>
#include <string>

#include "nbqf/errors.hpp"

namespace nbqf {

GmrfSpec::GmrfSpec(std::vector<std::vector<Neighbor>> neighbors)
    : neighbors_(std::move(neighbors)) {
  const int n = static_cast<int>(neighbors_.size());
  if (n == 0) throw ConfigError("gmrf: graph has no nodes");
  degree_.resize(n);
  for (int i = 0; i < n; ++i) {
    double d = 0.0;
    for (const auto& nb : neighbors_[i]) d += nb.weight;
    if (!(d > 0.0)) throw ConfigError("gmrf: node " + std::to_string(i) + " has no neighbors");
    degree_(i) = d;
  }
  // D^-1/2 W D^-1/2 is symmetric and shares its spectrum with D^-1 W.
  Eigen::MatrixXd sym = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    for (const auto& nb : neighbors_[i]) {
      sym(i, nb.node) = nb.weight / std::sqrt(degree_(i) * degree_(nb.node));
    }
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(sym, Eigen::EigenvaluesOnly);
  if (solver.info() != Eigen::Success) throw NumericalError("gmrf: eigendecomposition failed");
  eig_ = solver.eigenvalues();
}

GmrfSpec GmrfSpec::chain(int n) {
  if (n < 2) throw ConfigError("gmrf: a chain needs at least 2 nodes");
  std::vector<std::pair<int, int>> edges;
  for (int i = 0; i + 1 < n; ++i) edges.emplace_back(i, i + 1);
  return from_edges(n, edges);
}

GmrfSpec GmrfSpec::from_edges(int n, const std::vector<std::pair<int, int>>& edges) {
  if (n <= 0) throw ConfigError("gmrf: node count must be positive");
  std::vector<std::map<int, double>> rows(n);
  for (const auto& [a, b] : edges) {
    if (a < 0 || b < 0 || a >= n || b >= n) {
      throw ConfigError("gmrf: edge (" + std::to_string(a) + ", " + std::to_string(b) +
                        ") references a node outside [0, " + std::to_string(n) + ")");
    }
    if (a == b) throw ConfigError("gmrf: self-loop at node " + std::to_string(a));
    rows[a][b] = 1.0;
    rows[b][a] = 1.0;
  }
  std::vector<std::vector<Neighbor>> neighbors(n);
  for (int i = 0; i < n; ++i) {
    for (const auto& [j, w] : rows[i]) neighbors[i].push_back({j, w});
  }
  return GmrfSpec(std::move(neighbors));
}

GmrfSpec GmrfSpec::from_dense(const Eigen::MatrixXd& adjacency) {
  const int n = static_cast<int>(adjacency.rows());
  if (adjacency.cols() != n) throw ConfigError("gmrf: adjacency must be square");
  std::vector<std::vector<Neighbor>> neighbors(n);
  for (int i = 0; i < n; ++i) {
    if (adjacency(i, i) != 0.0) throw ConfigError("gmrf: self-loop at node " + std::to_string(i));
    for (int j = 0; j < n; ++j) {
      const double w = adjacency(i, j);
      if (!std::isfinite(w) || w < 0.0) throw ConfigError("gmrf: weights must be non-negative");
      if (w != adjacency(j, i)) throw ConfigError("gmrf: adjacency must be symmetric");
      if (w > 0.0) neighbors[i].push_back({j, w});
    }
  }
  return GmrfSpec(std::move(neighbors));
}

Eigen::MatrixXd GmrfSpec::adjacency() const {
  const int n = size();
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    for (const auto& nb : neighbors_[i]) w(i, nb.node) = nb.weight;
  }
  return w;
}

Eigen::MatrixXd GmrfSpec::precision(double rho) const {
  Eigen::MatrixXd q = -rho * adjacency();
  q.diagonal() += degree_;
  return q;
}

double GmrfSpec::adjacency_form(const Eigen::Ref<const Eigen::VectorXd>& z) const {
  double sum = 0.0;
  for (int i = 0; i < size(); ++i) {
    double row = 0.0;
    for (const auto& nb : neighbors_[i]) row += nb.weight * z(nb.node);
    sum += z(i) * row;
  }
  return sum;
}

double GmrfSpec::quad_form(const Eigen::Ref<const Eigen::VectorXd>& z, double rho) const {
  return z.dot(degree_.cwiseProduct(z)) - rho * adjacency_form(z);
}

Eigen::VectorXd GmrfSpec::apply(const Eigen::Ref<const Eigen::VectorXd>& z, double rho) const {
  Eigen::VectorXd out = degree_.cwiseProduct(z);
  for (int i = 0; i < size(); ++i) {
    double row = 0.0;
    for (const auto& nb : neighbors_[i]) row += nb.weight * z(nb.node);
    out(i) -= rho * row;
  }
  return out;
}

Conditional car_conditional(int i, const Eigen::Ref<const Eigen::VectorXd>& v,
                            const GmrfHyper& hyper, const GmrfSpec& spec) {
  double s = 0.0;
  for (const auto& nb : spec.neighbors(i)) s += nb.weight * (v(nb.node) - hyper.mean);
  const double d = spec.degree(i);
  return {hyper.mean + hyper.rho / d * s, hyper.sigma_sq / d};
}

double rho_logdensity(double rho, const Eigen::Ref<const Eigen::VectorXd>& z, double sigma_sq,
                      const GmrfSpec& spec) {
  double log_det = 0.0;
  for (int i = 0; i < spec.size(); ++i) {
    const double a = 1.0 - rho * spec.eigenvalues()(i);
    if (!(a > 0.0)) throw std::domain_error("rho_logdensity: D - rho W is not positive definite");
    log_det += std::log(a);
  }
  return 0.5 * log_det + rho * spec.adjacency_form(z) / (2.0 * sigma_sq);
}

RhoGrid::RhoGrid(const GmrfSpec& spec, int points) {
  if (points < 1) throw ConfigError("rho grid needs at least one point");
  values_.resize(points);
  half_log_det_.resize(points);
  for (int k = 0; k < points; ++k) {
    const double rho = (k + 0.5) / points;
    double s = 0.0;
    for (int i = 0; i < spec.size(); ++i) s += std::log1p(-rho * spec.eigenvalues()(i));
    values_[k] = rho;
    half_log_det_[k] = 0.5 * s;
  }
}

std::vector<double> RhoGrid::probabilities(double adjacency_sum, double sigma_sq,
                                           int blocks) const {
  std::vector<double> w(values_.size());
  double top = -INFINITY;
  for (std::size_t k = 0; k < values_.size(); ++k) {
    w[k] = blocks * half_log_det_[k] + values_[k] * adjacency_sum / (2.0 * sigma_sq);
    top = std::max(top, w[k]);
  }
  double total = 0.0;
  for (double& x : w) {
    x = std::exp(x - top);
    total += x;
  }
  for (double& x : w) x /= total;
  return w;
}

double RhoGrid::draw(double adjacency_sum, double sigma_sq, int blocks, Rng& rng) const {
  const auto p = probabilities(adjacency_sum, sigma_sq, blocks);
  double u = rng.uniform();
  for (std::size_t k = 0; k < p.size(); ++k) {
    u -= p[k];
    if (u <= 0.0) return values_[k];
  }
  return values_.back();
}

double discrete_rho_update(const Eigen::Ref<const Eigen::VectorXd>& z, double sigma_sq,
                           const GmrfSpec& spec, const RhoGrid& grid, Rng& rng) {
  return grid.draw(spec.adjacency_form(z), sigma_sq, 1, rng);
}

Eigen::VectorXd sample_gmrf(const GmrfSpec& spec, const GmrfHyper& hyper, Rng& rng) {
  const int n = spec.size();
  Eigen::LLT<Eigen::MatrixXd> llt(spec.precision(hyper.rho) / hyper.sigma_sq);
  if (llt.info() != Eigen::Success) throw NumericalError("sample_gmrf: precision not positive definite");
  Eigen::VectorXd e(n);
  for (int i = 0; i < n; ++i) e(i) = rng.normal();
  // Q = L L' so x = L'^-1 e has covariance Q^-1.
  Eigen::VectorXd x = llt.matrixU().solve(e);
  return x.array() + hyper.mean;
}

}  // namespace nbqf
