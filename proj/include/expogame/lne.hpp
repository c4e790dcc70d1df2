#pragma once

// Simultaneous reparametrized gradient ascent for local Nash equilibria and the
// Riemannian second-derivative classification of candidate profiles.

#include "expogame/core.hpp"
#include "expogame/game.hpp"
#include "expogame/sphere.hpp"

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace expogame {

struct OptimizerConfig {
  double step_size = 0.1;
  long max_iters = 50000;
  /// Threshold on the l2 change of the full parameter block; defaults to
  /// 1e-8 * sqrt(d) when unset.
  std::optional<double> convergence_tol;
  std::uint64_t seed = 0;
  /// Multiplies the step size by tau before use. Off by default.
  bool scale_step_by_tau = false;

  double tolerance(Index d) const {
    return convergence_tol ? *convergence_tol : 1e-8 * std::sqrt(static_cast<double>(d));
  }

  void validate() const {
    if (!(step_size > 0.0) || !std::isfinite(step_size)) {
      throw std::invalid_argument("step size must be positive");
    }
    if (max_iters < 1) throw std::invalid_argument("max_iters must be >= 1");
  }
};

enum class LneClass { violated, confirmed, inconclusive };

inline std::string to_string(LneClass c) {
  switch (c) {
    case LneClass::violated:
      return "violated";
    case LneClass::confirmed:
      return "confirmed-LNE";
    case LneClass::inconclusive:
      return "inconclusive";
  }
  return "unknown";
}

inline LneClass lne_class_from_string(const std::string& s) {
  if (s == "violated") return LneClass::violated;
  if (s == "confirmed-LNE") return LneClass::confirmed;
  if (s == "inconclusive") return LneClass::inconclusive;
  throw std::invalid_argument("unknown LNE class: " + s);
}

struct SecondOrderReport {
  static constexpr double kZeroEigenTolerance = 1e-10;

  std::vector<double> gradient_norms;
  std::vector<double> max_tangent_eigenvalues;
  double gradient_threshold = 0.0;
  LneClass classification = LneClass::inconclusive;

  /// violated: a gradient norm above the threshold or any strictly positive
  /// tangent eigenvalue. inconclusive: otherwise, if some eigenvalue lies in
  /// [-1e-10, 0]. confirmed: everything else.
  static LneClass classify(const std::vector<double>& grad_norms,
                           const std::vector<double>& max_eigs, double grad_threshold) {
    bool near_zero = false;
    for (std::size_t i = 0; i < grad_norms.size(); ++i) {
      if (grad_norms[i] > grad_threshold || max_eigs[i] > 0.0) {
        return LneClass::violated;
      }
      if (max_eigs[i] >= -kZeroEigenTolerance) near_zero = true;
    }
    return near_zero ? LneClass::inconclusive : LneClass::confirmed;
  }
};

/// Riemannian gradient norms and top tangent Hessian eigenvalues per producer.
inline SecondOrderReport second_order_test(const GameConfig& config,
                                           const DemandDistribution& demand,
                                           const StrategyProfile& profile) {
  detail::require_softmax(config, "second-order test");
  const Matrix grads = utility_gradients(config, demand, profile);
  SecondOrderReport report;
  report.gradient_threshold = 1e-5 * std::sqrt(static_cast<double>(config.d));
  for (Index i = 0; i < profile.size(); ++i) {
    const Vector g = grads.row(i).transpose();
    const Vector rg = riemannian_gradient(profile, i, g);
    const Matrix h = utility_hessian(config, demand, profile, i);
    const Matrix rh = riemannian_hessian(profile, i, g, h);
    const Vector eig = tangent_eigenvalues(rh, profile.strategy(i));
    report.gradient_norms.push_back(rg.norm());
    // d == 1: the sphere is two points and the tangent space is trivial.
    report.max_tangent_eigenvalues.push_back(
        eig.size() > 0 ? eig.maxCoeff() : -std::numeric_limits<double>::infinity());
  }
  report.classification = SecondOrderReport::classify(
      report.gradient_norms, report.max_tangent_eigenvalues, report.gradient_threshold);
  return report;
}

/// Seeded initial parameters: i.i.d. standard normal, absolute values for
/// non-negative games. Left unnormalized.
inline Matrix initial_params(const GameConfig& config, std::uint64_t seed) {
  config.validate();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix theta(config.n, config.d);
  for (Index i = 0; i < config.n; ++i) {
    for (Index k = 0; k < config.d; ++k) {
      const double x = normal(rng);
      theta(i, k) = config.nonneg ? std::abs(x) : x;
    }
  }
  return theta;
}

/// One synchronous update theta_i += alpha / |theta_i| (I - s_i s_i^T) grad_{s_i} u_i,
/// with every gradient taken at the previous iterate.
inline Matrix ascent_step(const GameConfig& config, const DemandDistribution& demand,
                          const Matrix& params, const OptimizerConfig& optimizer) {
  detail::require_softmax(config, "gradient ascent");
  optimizer.validate();
  if (params.rows() != config.n || params.cols() != config.d) {
    throw std::invalid_argument("parameter block has wrong shape");
  }
  const Vector norms = params.rowwise().norm();
  constexpr double kMinNorm = 1e-150;
  for (Index i = 0; i < norms.size(); ++i) {
    if (!(norms(i) > kMinNorm) || !std::isfinite(norms(i))) {
      throw std::domain_error("parameter norm underflow for producer " +
                              std::to_string(i));
    }
  }
  Matrix s = params;
  for (Index i = 0; i < s.rows(); ++i) s.row(i) /= norms(i);
  const StrategyProfile profile(s);
  const Matrix grads = utility_gradients(config, demand, profile);
  const double alpha =
      optimizer.scale_step_by_tau ? optimizer.step_size * config.tau : optimizer.step_size;
  Matrix next = params;
  for (Index i = 0; i < params.rows(); ++i) {
    const Vector si = s.row(i).transpose();
    const Vector g = grads.row(i).transpose();
    const Vector rg = g - si * si.dot(g);
    next.row(i) += (alpha / norms(i)) * rg.transpose();
  }
  return next;
}

struct RunRecord {
  StrategyProfile profile;
  long iterations = 0;
  bool converged = false;
  double last_change = 0.0;
  SecondOrderReport second_order;
  Vector utilities;
};

/// Iterates ascent_step until the parameter change drops to the tolerance or
/// max_iters is reached, then classifies the normalized profile.
inline RunRecord run_lne(const GameConfig& config, const DemandDistribution& demand,
                         const OptimizerConfig& optimizer,
                         const std::optional<StrategyProfile>& init = std::nullopt) {
  detail::require_softmax(config, "gradient ascent");
  config.validate(demand);
  optimizer.validate();
  Matrix theta = init ? init->matrix() : initial_params(config, optimizer.seed);
  if (theta.rows() != config.n || theta.cols() != config.d) {
    throw std::invalid_argument("initial profile has wrong shape");
  }
  const double tol = optimizer.tolerance(config.d);
  RunRecord rec;
  for (long it = 1; it <= optimizer.max_iters; ++it) {
    Matrix next = ascent_step(config, demand, theta, optimizer);
    rec.last_change = (next - theta).norm();
    theta = std::move(next);
    rec.iterations = it;
    if (rec.last_change <= tol) {
      rec.converged = true;
      break;
    }
  }
  rec.profile = StrategyProfile::from_params(theta);
  rec.second_order = second_order_test(config, demand, rec.profile);
  rec.utilities = utility(config, demand, rec.profile);
  return rec;
}

struct Improvement {
  Vector best;
  double best_utility = 0.0;
  double current_utility = 0.0;
  /// best_utility - current_utility; may be slightly negative when the grid
  /// misses the current strategy.
  double delta = 0.0;
};

/// Deviation grid for brute-force searches: k angles on the circle for d = 2,
/// k x k spherical-coordinate grid for d = 3.
inline Matrix deviation_grid(Index d, Index resolution) {
  if (d != 2 && d != 3) {
    throw std::invalid_argument("deviation grid supports d = 2 or d = 3 only, got d = " +
                                std::to_string(d));
  }
  return discretize_sphere(d, resolution);
}

/// Utility of producer i for every candidate deviation (rows of `grid`), all
/// other producers fixed.
inline Vector deviation_utilities(const GameConfig& config, const DemandDistribution& demand,
                                  const StrategyProfile& profile, Index i,
                                  const Matrix& grid) {
  config.validate(demand);
  detail::check_profile(config, profile);
  detail::check_index(profile, i);
  const Matrix& c = demand.points();
  // Scores of the fixed opponents and of every candidate.
  const Matrix others = c * profile.matrix().transpose();  // m x n
  const Matrix cand = c * grid.transpose();                 // m x K
  Vector out = Vector::Zero(grid.rows());
  Vector z(config.n);
  for (Index k = 0; k < grid.rows(); ++k) {
    double u = 0.0;
    for (Index j = 0; j < c.rows(); ++j) {
      z = others.row(j).transpose();
      z(i) = cand(j, k);
      detail::scores_to_probabilities(z, config.tau);
      u += demand.weight(j) * z(i);
    }
    out(k) = u;
  }
  return out;
}

/// Best unilateral deviation of producer i over the brute-force grid.
inline Improvement epsilon_improvement(const GameConfig& config,
                                       const DemandDistribution& demand,
                                       const StrategyProfile& profile, Index i,
                                       Index grid_resolution) {
  const Matrix grid = deviation_grid(config.d, grid_resolution);
  const Vector u = deviation_utilities(config, demand, profile, i, grid);
  Index best = 0;
  u.maxCoeff(&best);
  Improvement out;
  out.best = grid.row(best).transpose();
  out.best_utility = u(best);
  out.current_utility = utility(config, demand, profile)(i);
  out.delta = out.best_utility - out.current_utility;
  return out;
}

}  // namespace expogame
