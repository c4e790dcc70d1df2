#pragma once

// Mixed Nash equilibria of two-player hardmax exposure games.
//
// Two routes: a linear program over a discretized strategy set, and (for d = 2)
// a finite-support search driven by an exact dominance oracle over the arc
// arrangement that the demand and a candidate mixture induce on the circle.

#include "expogame/core.hpp"
#include "expogame/game.hpp"
#include "expogame/lp.hpp"
#include "expogame/sphere.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace expogame {

/// Finite-support distribution over unit vectors (rows of `support`).
class MixedStrategy {
 public:
  static constexpr double kProbTolerance = 1e-12;

  MixedStrategy() = default;

  MixedStrategy(Matrix support, Vector probs)
      : support_(std::move(support)), probs_(std::move(probs)) {
    if (support_.rows() < 1) throw std::invalid_argument("mixed strategy needs support");
    if (probs_.size() != support_.rows()) {
      throw std::invalid_argument("mixed strategy probability count mismatch");
    }
    if ((probs_.array() < 0.0).any() || std::abs(probs_.sum() - 1.0) > kProbTolerance) {
      throw std::invalid_argument("mixed strategy probabilities must form a distribution");
    }
    for (Index i = 0; i < support_.rows(); ++i) {
      if (std::abs(support_.row(i).norm() - 1.0) > StrategyProfile::kUnitTolerance) {
        throw std::invalid_argument("mixed strategy support point is not unit norm");
      }
    }
  }

  static MixedStrategy pure(const Vector& s) {
    return MixedStrategy(Matrix(s.transpose() / s.norm()), Vector::Ones(1));
  }

  Index size() const { return support_.rows(); }
  Index dim() const { return support_.cols(); }
  const Matrix& support() const { return support_; }
  const Vector& probs() const { return probs_; }

 private:
  Matrix support_;
  Vector probs_;
};

namespace detail {

/// Hardmax u_1 for two players given their score rows against every consumer.
template <typename RowA, typename RowB>
double hardmax_pair_utility(const RowA& a, const RowB& b, const Vector& w) {
  double u = 0.0;
  for (Index l = 0; l < w.size(); ++l) {
    const double top = std::max(a(l), b(l));
    const double band = kHardmaxTieTolerance * std::max(1.0, std::abs(top));
    if (std::abs(a(l) - b(l)) <= band) {
      u += 0.5 * w(l);
    } else if (a(l) > b(l)) {
      u += w(l);
    }
  }
  return u;
}

}  // namespace detail

/// U_ij = u_1(s^(i), s^(j)) under hardmax.
inline Matrix payoff_matrix(const DemandDistribution& demand, const Matrix& grid) {
  if (grid.cols() != demand.dim()) {
    throw std::invalid_argument("grid dimension mismatch: " +
                                detail::dims(grid.cols(), demand.dim()));
  }
  const Matrix scores = grid * demand.points().transpose();  // K x m
  const Index k = grid.rows();
  Matrix u(k, k);
  for (Index i = 0; i < k; ++i) {
    for (Index j = 0; j < k; ++j) {
      u(i, j) = detail::hardmax_pair_utility(scores.row(i), scores.row(j), demand.weights());
    }
  }
  return u;
}

struct LpEquilibrium {
  MixedStrategy strategy;
  /// Indices into the grid for each support point.
  std::vector<Index> grid_indices;
  /// Full probability vector over the grid.
  Vector x;
  /// min_j sum_i x_i U_ij, the guaranteed payoff of the mixture.
  double value = 0.0;
};

/// Mixed NE of the discretized game. Maximizes the guaranteed payoff
/// min_j sum_i x_i U_ij over mixtures x; among optimal mixtures the
/// one with the smallest largest probability is returned.
inline LpEquilibrium lp_mixed_ne(const GameConfig& config, const DemandDistribution& demand,
                                 const Matrix& grid) {
  if (!config.hardmax()) throw std::invalid_argument("lp_mixed_ne requires tau = 0");
  if (config.n != 2) throw std::invalid_argument("lp_mixed_ne requires n = 2");
  config.validate(demand);
  if (grid.rows() < 1) throw std::invalid_argument("grid must be non-empty");
  const Matrix u = payoff_matrix(demand, grid);
  const Index k = grid.rows();

  // Stage 1: maximize sum(y) with (1 - U)^T y <= 1, y >= 0; x = y / sum(y).
  // All rows are <= with b = 1, so the slack basis is feasible.
  lp::Problem p;
  p.A = (Matrix::Ones(k, k) - u).transpose();
  p.b = Vector::Ones(k);
  p.senses.assign(static_cast<std::size_t>(k), lp::Sense::le);
  p.c = Vector::Ones(k);
  const lp::Result r1 = lp::solve(p);
  if (r1.status != lp::Status::optimal) {
    throw std::logic_error(std::string("discretized game LP failed: ") +
                           lp::to_string(r1.status));
  }
  const Vector x1 = r1.x / r1.x.sum();
  const double alpha_star = (u.transpose() * x1).minCoeff();

  // Stage 2: variables [x, z]; minimize z with x_i <= z, keeping alpha*.
  constexpr double kSlack = 1e-11;
  lp::Problem q;
  q.A = Matrix::Zero(2 * k + 1, k + 1);
  q.b = Vector::Zero(2 * k + 1);
  q.senses.assign(static_cast<std::size_t>(2 * k + 1), lp::Sense::ge);
  q.A.topLeftCorner(k, k) = u.transpose();
  q.b.head(k).setConstant(alpha_star - kSlack);
  q.A.block(k, 0, k, k) = Matrix::Identity(k, k);
  q.A.col(k).segment(k, k).setConstant(-1.0);
  for (Index i = k; i < 2 * k; ++i) q.senses[static_cast<std::size_t>(i)] = lp::Sense::le;
  q.A.row(2 * k).head(k).setOnes();
  q.b(2 * k) = 1.0;
  q.senses[static_cast<std::size_t>(2 * k)] = lp::Sense::eq;
  q.c = Vector::Zero(k + 1);
  q.c(k) = -1.0;
  const lp::Result r2 = lp::solve(q);
  Vector x = r2.status == lp::Status::optimal ? Vector(r2.x.head(k)) : x1;

  for (Index i = 0; i < k; ++i) {
    if (x(i) < 1e-13) x(i) = 0.0;
  }
  x /= x.sum();

  LpEquilibrium out;
  out.x = x;
  out.value = (u.transpose() * x).minCoeff();
  std::vector<Index> idx;
  for (Index i = 0; i < k; ++i) {
    if (x(i) > 0.0) idx.push_back(i);
  }
  Matrix support(static_cast<Index>(idx.size()), grid.cols());
  Vector probs(static_cast<Index>(idx.size()));
  for (std::size_t a = 0; a < idx.size(); ++a) {
    support.row(static_cast<Index>(a)) = grid.row(idx[a]) / grid.row(idx[a]).norm();
    probs(static_cast<Index>(a)) = x(idx[a]);
  }
  probs /= probs.sum();
  out.strategy = MixedStrategy(std::move(support), std::move(probs));
  out.grid_indices = std::move(idx);
  return out;
}

/// E_{s1 ~ P}[u_1(s1, s)] under hardmax: the mixture's payoff against pure s.
inline double mixture_payoff(const DemandDistribution& demand, const MixedStrategy& mix,
                             const Vector& s) {
  const Vector deviator = demand.points() * s;
  const Matrix own = mix.support() * demand.points().transpose();
  double v = 0.0;
  for (Index i = 0; i < mix.size(); ++i) {
    v += mix.probs()(i) *
         detail::hardmax_pair_utility(own.row(i), deviator.transpose(), demand.weights());
  }
  return v;
}

/// A cell of the circle arrangement: either an open arc (begin, end) or a
/// single boundary angle (begin == end). Angles are in radians; `end` may
/// exceed 2*pi for the arc that wraps around.
struct ArcCell {
  double begin = 0.0;
  double end = 0.0;
  bool point = false;
  double representative = 0.0;
  /// E_{s1 ~ P}[u_1(s1, s)] for s in the cell.
  double value = 0.0;
};

/// Boundary angles where a deviator ties some support point on some consumer,
/// sorted and deduplicated.
inline std::vector<double> arrangement_boundaries(const DemandDistribution& demand,
                                                  const MixedStrategy& mix) {
  constexpr double kMerge = 1e-12;
  std::vector<double> angles;
  for (Index k = 0; k < demand.size(); ++k) {
    const Vector c = demand.point(k);
    const double r = c.norm();
    if (r == 0.0) continue;
    const double psi = angle_of(c);
    for (Index i = 0; i < mix.size(); ++i) {
      const double t = std::clamp(mix.support().row(i).dot(c) / r, -1.0, 1.0);
      const double delta = std::acos(t);
      angles.push_back(wrap_angle(psi + delta));
      angles.push_back(wrap_angle(psi - delta));
    }
  }
  std::sort(angles.begin(), angles.end());
  std::vector<double> unique;
  for (double a : angles) {
    if (unique.empty() || a - unique.back() > kMerge) unique.push_back(a);
  }
  if (unique.size() > 1 &&
      unique.front() + 2.0 * std::numbers::pi - unique.back() <= kMerge) {
    unique.pop_back();
  }
  return unique;
}

/// Every cell of the arrangement with its mixture payoff.
inline std::vector<ArcCell> arc_cells(const DemandDistribution& demand,
                                      const MixedStrategy& mix) {
  if (demand.dim() != 2 || mix.dim() != 2) {
    throw std::invalid_argument("arc arrangement is implemented for d = 2 only");
  }
  const std::vector<double> b = arrangement_boundaries(demand, mix);
  constexpr std::size_t kMaxCells = 100000;
  if (2 * b.size() > kMaxCells) {
    throw std::invalid_argument("arc arrangement exceeds the cell limit");
  }
  std::vector<ArcCell> cells;
  const auto eval = [&](double angle) { return mixture_payoff(demand, mix, unit_at(angle)); };
  if (b.empty()) {
    ArcCell whole;
    whole.begin = 0.0;
    whole.end = 2.0 * std::numbers::pi;
    whole.representative = std::numbers::pi;
    whole.value = eval(whole.representative);
    cells.push_back(whole);
    return cells;
  }
  for (std::size_t i = 0; i < b.size(); ++i) {
    ArcCell pt;
    pt.begin = pt.end = pt.representative = b[i];
    pt.point = true;
    pt.value = eval(b[i]);
    cells.push_back(pt);

    ArcCell arc;
    arc.begin = b[i];
    arc.end = i + 1 < b.size() ? b[i + 1] : b.front() + 2.0 * std::numbers::pi;
    arc.representative = wrap_angle(0.5 * (arc.begin + arc.end));
    arc.value = eval(arc.representative);
    cells.push_back(arc);
  }
  return cells;
}

/// Cells whose points beat the mixture: E_{s1 ~ P}[u_1(s1, s)] < 1/2.
inline std::vector<ArcCell> dominating_pure_strategies(const DemandDistribution& demand,
                                                       const MixedStrategy& mix) {
  constexpr double kStrict = 1e-12;
  std::vector<ArcCell> out;
  for (const auto& cell : arc_cells(demand, mix)) {
    if (cell.value < 0.5 - kStrict) out.push_back(cell);
  }
  return out;
}

struct HittingSetOptions {
  Index max_support = 3;
  int max_rounds = 200;
  Index max_pool = 48;
};

struct HittingSetResult {
  MixedStrategy strategy;
  int rounds = 0;
  Index constraints = 0;
};

namespace detail {

inline bool contains_direction(const std::vector<Vector>& pool, const Vector& v) {
  for (const auto& p : pool) {
    if ((p - v).norm() <= 1e-12) return true;
  }
  return false;
}

/// Consumer directions merged by angle, carrying the demand weight.
inline MixedStrategy demand_directions(const DemandDistribution& demand) {
  std::vector<Vector> dirs;
  std::vector<double> probs;
  for (Index j = 0; j < demand.size(); ++j) {
    const Vector c = demand.point(j);
    const double r = c.norm();
    if (r == 0.0 || demand.weight(j) == 0.0) continue;
    const Vector u = c / r;
    bool merged = false;
    for (std::size_t a = 0; a < dirs.size(); ++a) {
      if ((dirs[a] - u).norm() <= 1e-12) {
        probs[a] += demand.weight(j);
        merged = true;
        break;
      }
    }
    if (!merged) {
      dirs.push_back(u);
      probs.push_back(demand.weight(j));
    }
  }
  if (dirs.empty()) throw std::invalid_argument("demand has no non-zero consumer");
  Matrix s(static_cast<Index>(dirs.size()), demand.dim());
  Vector p(static_cast<Index>(dirs.size()));
  for (std::size_t a = 0; a < dirs.size(); ++a) {
    s.row(static_cast<Index>(a)) = dirs[a].transpose();
    p(static_cast<Index>(a)) = probs[a];
  }
  p /= p.sum();
  return MixedStrategy(std::move(s), std::move(p));
}

/// Best mixture over `subset` of the pool against the revealed deviators.
inline std::optional<MixedStrategy> fit_subset(const DemandDistribution& demand,
                                               const std::vector<Vector>& pool,
                                               const std::vector<Index>& subset,
                                               const std::vector<Vector>& deviators) {
  const Index m = static_cast<Index>(subset.size());
  const Index k = static_cast<Index>(deviators.size());
  Matrix support(m, demand.dim());
  for (Index a = 0; a < m; ++a) support.row(a) = pool[static_cast<std::size_t>(subset[a])].transpose();
  const Matrix own = support * demand.points().transpose();
  Matrix payoff(k, m);
  for (Index s = 0; s < k; ++s) {
    const Vector dev = demand.points() * deviators[static_cast<std::size_t>(s)];
    for (Index a = 0; a < m; ++a) {
      payoff(s, a) = hardmax_pair_utility(own.row(a), dev.transpose(), demand.weights());
    }
  }
  lp::Problem p;
  p.A = Matrix::Zero(k + 1, m + 1);
  p.b = Vector::Zero(k + 1);
  p.senses.assign(static_cast<std::size_t>(k + 1), lp::Sense::ge);
  p.A.topLeftCorner(k, m) = payoff;
  p.A.col(m).head(k).setConstant(-1.0);
  p.A.row(k).head(m).setOnes();
  p.b(k) = 1.0;
  p.senses[static_cast<std::size_t>(k)] = lp::Sense::eq;
  p.c = Vector::Zero(m + 1);
  p.c(m) = 1.0;
  const lp::Result r = lp::solve(p);
  if (r.status != lp::Status::optimal || r.x(m) < 0.5 - 1e-12) return std::nullopt;
  Vector probs = r.x.head(m);
  for (Index a = 0; a < m; ++a) {
    if (probs(a) < 1e-13) probs(a) = 0.0;
  }
  // Drop zero-mass points so the returned support is minimal.
  std::vector<Index> keep;
  for (Index a = 0; a < m; ++a) {
    if (probs(a) > 0.0) keep.push_back(a);
  }
  Matrix s(static_cast<Index>(keep.size()), demand.dim());
  Vector pr(static_cast<Index>(keep.size()));
  for (std::size_t a = 0; a < keep.size(); ++a) {
    s.row(static_cast<Index>(a)) = support.row(keep[a]);
    pr(static_cast<Index>(a)) = probs(keep[a]);
  }
  pr /= pr.sum();
  return MixedStrategy(std::move(s), std::move(pr));
}

/// Calls `fn(subset)` for every size-`size` subset of [0, n) in lexicographic
/// order until it returns true.
template <typename Fn>
bool for_each_subset(Index n, Index size, Fn&& fn) {
  if (size > n) return false;
  std::vector<Index> idx(static_cast<std::size_t>(size));
  for (Index a = 0; a < size; ++a) idx[static_cast<std::size_t>(a)] = a;
  while (true) {
    if (fn(idx)) return true;
    Index pos = size - 1;
    while (pos >= 0 && idx[static_cast<std::size_t>(pos)] == n - size + pos) --pos;
    if (pos < 0) return false;
    ++idx[static_cast<std::size_t>(pos)];
    for (Index a = pos + 1; a < size; ++a) {
      idx[static_cast<std::size_t>(a)] = idx[static_cast<std::size_t>(a - 1)] + 1;
    }
  }
}

}  // namespace detail

/// Finite-support mixed NE (P, P) for a two-player hardmax game on the circle.
///
/// The demand's own direction mixture is tried first. Otherwise candidates are
/// mixtures over a pool of consumer directions and previously revealed
/// deviators; each round picks the smallest-support candidate that hits every
/// revealed constraint set F_s, and the arc oracle either certifies it or
/// reveals the deviators that beat it. Returns nullopt when no candidate with
/// support <= max_support hits all revealed sets, or the round budget runs out.
inline std::optional<HittingSetResult> hitting_set_mixed_ne(
    const DemandDistribution& demand, const HittingSetOptions& options = {}) {
  if (demand.dim() != 2) throw std::invalid_argument("hitting-set solver requires d = 2");
  if (options.max_support < 1) throw std::invalid_argument("max_support must be >= 1");

  HittingSetResult result;
  const MixedStrategy seed = detail::demand_directions(demand);
  std::vector<Vector> pool;
  for (Index i = 0; i < seed.size(); ++i) pool.push_back(seed.support().row(i).transpose());
  std::vector<Vector> deviators = pool;

  if (seed.size() <= options.max_support) {
    const auto dom = dominating_pure_strategies(demand, seed);
    if (dom.empty()) {
      result.strategy = seed;
      result.constraints = static_cast<Index>(deviators.size());
      return result;
    }
    for (const auto& cell : dom) {
      const Vector v = unit_at(cell.representative);
      if (!detail::contains_direction(deviators, v)) deviators.push_back(v);
      if (!detail::contains_direction(pool, v)) pool.push_back(v);
    }
  }

  for (int round = 1; round <= options.max_rounds; ++round) {
    result.rounds = round;
    std::optional<MixedStrategy> candidate;
    const Index n_pool = static_cast<Index>(pool.size());
    for (Index size = 1; size <= std::min(options.max_support, n_pool) && !candidate; ++size) {
      detail::for_each_subset(n_pool, size, [&](const std::vector<Index>& subset) {
        candidate = detail::fit_subset(demand, pool, subset, deviators);
        return candidate.has_value();
      });
    }
    if (!candidate) return std::nullopt;
    const auto dom = dominating_pure_strategies(demand, *candidate);
    if (dom.empty()) {
      result.strategy = *candidate;
      result.constraints = static_cast<Index>(deviators.size());
      return result;
    }
    for (const auto& cell : dom) {
      const Vector v = unit_at(cell.representative);
      if (!detail::contains_direction(deviators, v)) deviators.push_back(v);
      if (static_cast<Index>(pool.size()) < options.max_pool &&
          !detail::contains_direction(pool, v)) {
        pool.push_back(v);
      }
    }
  }
  return std::nullopt;
}

/// Smallest mixture payoff over a dense angular grid (d = 2) or a spherical
/// grid (d = 3) of deviators, computed through the generic utility routine.
/// (P, P) is a mixed NE of the grid-restricted game iff the result is >= 1/2.
inline double verify_mixed_strategy(const DemandDistribution& demand, const MixedStrategy& mix,
                                    Index resolution = 10000) {
  const Matrix grid = demand.dim() == 2 ? discretize_sphere(2, resolution)
                                        : discretize_sphere(demand.dim(), resolution);
  GameConfig cfg;
  cfg.d = demand.dim();
  cfg.n = 2;
  cfg.tau = 0.0;
  double worst = 1.0;
  for (Index g = 0; g < grid.rows(); ++g) {
    double v = 0.0;
    for (Index i = 0; i < mix.size(); ++i) {
      Matrix prof(2, demand.dim());
      prof.row(0) = mix.support().row(i);
      prof.row(1) = grid.row(g);
      v += mix.probs()(i) * utility(cfg, demand, StrategyProfile(prof))(0);
    }
    worst = std::min(worst, v);
  }
  return worst;
}

}  // namespace expogame
