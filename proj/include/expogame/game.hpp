#pragma once

// Exposure game evaluation: softmax/hardmax exposure probabilities, expected
// utilities and their analytic derivatives, plus projections onto the tangent
// space of the unit sphere.

#include "expogame/core.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/QR>

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace expogame {

/// Scores within this (relative) band of the maximum are treated as tied
/// under hardmax and share exposure equally.
inline constexpr double kHardmaxTieTolerance = 1e-12;

namespace detail {

inline void require_softmax(const GameConfig& config, const char* what) {
  if (config.hardmax()) {
    throw std::domain_error(std::string(what) +
                            " is undefined for hardmax (tau = 0)");
  }
}

inline void check_profile(const GameConfig& config, const StrategyProfile& profile) {
  if (profile.dim() != config.d) {
    throw std::invalid_argument("profile dimension mismatch: " +
                                dims(profile.dim(), config.d));
  }
  if (profile.size() != config.n) {
    throw std::invalid_argument("profile size mismatch: " +
                                dims(profile.size(), config.n));
  }
}

inline void check_index(const StrategyProfile& profile, Index i) {
  if (i < 0 || i >= profile.size()) {
    throw std::out_of_range("producer index " + std::to_string(i) + " out of range");
  }
}

/// Turns a score vector into exposure probabilities in place.
inline void scores_to_probabilities(Eigen::Ref<Vector> z, double tau) {
  const double top = z.maxCoeff();
  if (tau == 0.0) {
    const double band = kHardmaxTieTolerance * std::max(1.0, std::abs(top));
    const auto winners = (z.array() >= top - band).cast<double>();
    z = winners / winners.sum();
    return;
  }
  z = ((z.array() - top) / tau).exp();
  z /= z.sum();
}

}  // namespace detail

/// p_i(c) for every producer i.
inline Vector exposure_probabilities(const GameConfig& config,
                                     const StrategyProfile& profile,
                                     const Vector& c) {
  detail::check_profile(config, profile);
  if (c.size() != config.d) {
    throw std::invalid_argument("consumer dimension mismatch: " +
                                detail::dims(c.size(), config.d));
  }
  if (!c.allFinite()) throw std::invalid_argument("consumer vector contains NaN");
  Vector z = profile.matrix() * c;
  detail::scores_to_probabilities(z, config.tau);
  return z;
}

/// m x n matrix of p_i(c_j), one consumer per row.
inline Matrix exposure_matrix(const GameConfig& config, const DemandDistribution& demand,
                              const StrategyProfile& profile) {
  config.validate(demand);
  detail::check_profile(config, profile);
  Matrix p = demand.points() * profile.matrix().transpose();
  for (Index j = 0; j < p.rows(); ++j) {
    Vector row = p.row(j).transpose();
    detail::scores_to_probabilities(row, config.tau);
    p.row(j) = row.transpose();
  }
  return p;
}

/// u_i = sum_j w_j p_i(c_j)
inline Vector utility(const GameConfig& config, const DemandDistribution& demand,
                      const StrategyProfile& profile) {
  return exposure_matrix(config, demand, profile).transpose() * demand.weights();
}

/// All Euclidean gradients at once; row i is grad_{s_i} u_i.
inline Matrix utility_gradients(const GameConfig& config, const DemandDistribution& demand,
                                const StrategyProfile& profile) {
  detail::require_softmax(config, "utility gradient");
  const Matrix p = exposure_matrix(config, demand, profile);
  const Matrix coef =
      (p.array() * (1.0 - p.array())).colwise() * demand.weights().array();
  return coef.transpose() * demand.points() / config.tau;
}

/// grad_{s_i} u_i = tau^-1 E[p_i (1 - p_i) c]
inline Vector utility_gradient(const GameConfig& config, const DemandDistribution& demand,
                               const StrategyProfile& profile, Index i) {
  detail::require_softmax(config, "utility gradient");
  detail::check_index(profile, i);
  const Matrix p = exposure_matrix(config, demand, profile);
  const Vector pi = p.col(i);
  const Vector coef =
      (pi.array() * (1.0 - pi.array()) * demand.weights().array()).matrix();
  return demand.points().transpose() * coef / config.tau;
}

/// hess_{s_i} u_i = tau^-2 E[p_i (1 - p_i)(1 - 2 p_i) c c^T]
inline Matrix utility_hessian(const GameConfig& config, const DemandDistribution& demand,
                              const StrategyProfile& profile, Index i) {
  detail::require_softmax(config, "utility Hessian");
  detail::check_index(profile, i);
  const Matrix p = exposure_matrix(config, demand, profile);
  const Vector pi = p.col(i);
  const Vector coef = (pi.array() * (1.0 - pi.array()) * (1.0 - 2.0 * pi.array()) *
                       demand.weights().array())
                          .matrix();
  const Matrix& c = demand.points();
  Matrix h = c.transpose() * coef.asDiagonal() * c;
  h = 0.5 * (h + h.transpose());
  return h / (config.tau * config.tau);
}

/// I - s s^T
inline Matrix tangent_projector(const Vector& s) {
  return Matrix::Identity(s.size(), s.size()) - s * s.transpose();
}

/// (I - s_i s_i^T) g
inline Vector riemannian_gradient(const StrategyProfile& profile, Index i,
                                  const Vector& euclid_grad) {
  detail::check_index(profile, i);
  const Vector s = profile.strategy(i);
  if (euclid_grad.size() != s.size()) {
    throw std::invalid_argument("gradient dimension mismatch");
  }
  return euclid_grad - s * s.dot(euclid_grad);
}

/// P H P - <s_i, g> P with P = I - s_i s_i^T.
inline Matrix riemannian_hessian(const StrategyProfile& profile, Index i,
                                 const Vector& euclid_grad, const Matrix& euclid_hess) {
  detail::check_index(profile, i);
  const Vector s = profile.strategy(i);
  if (euclid_grad.size() != s.size() || euclid_hess.rows() != s.size() ||
      euclid_hess.cols() != s.size()) {
    throw std::invalid_argument("derivative dimension mismatch");
  }
  const Matrix proj = tangent_projector(s);
  Matrix r = proj * euclid_hess * proj - s.dot(euclid_grad) * proj;
  return 0.5 * (r + r.transpose());
}

/// Orthonormal basis (d x (d-1)) of the subspace perpendicular to unit s.
inline Matrix tangent_basis(const Vector& s) {
  const Index d = s.size();
  const Matrix col = s;
  Eigen::HouseholderQR<Matrix> qr(col);
  const Matrix q = qr.householderQ() * Matrix::Identity(d, d);
  return q.rightCols(d - 1);
}

/// Eigenvalues (ascending) of a symmetric operator restricted to s-perp.
inline Vector tangent_eigenvalues(const Matrix& riem_hess, const Vector& s) {
  if (s.size() < 2) return Vector();
  const Matrix b = tangent_basis(s);
  const Matrix reduced = b.transpose() * riem_hess * b;
  Eigen::SelfAdjointEigenSolver<Matrix> eig(0.5 * (reduced + reduced.transpose()),
                                            Eigen::EigenvaluesOnly);
  return eig.eigenvalues();
}

}  // namespace expogame
