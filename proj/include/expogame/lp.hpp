#pragma once

// Dense two-phase tableau simplex. Intended for the small, well-scaled
// problems that arise from discretized two-player games.

#include "expogame/core.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

namespace expogame::lp {

enum class Sense { le, ge, eq };

enum class Status { optimal, infeasible, unbounded, iteration_limit };

inline const char* to_string(Status s) {
  switch (s) {
    case Status::optimal:
      return "optimal";
    case Status::infeasible:
      return "infeasible";
    case Status::unbounded:
      return "unbounded";
    case Status::iteration_limit:
      return "iteration-limit";
  }
  return "unknown";
}

/// maximize c^T x  subject to  A x (<=|>=|=) b,  x >= 0
struct Problem {
  Matrix A;
  Vector b;
  std::vector<Sense> senses;
  Vector c;
};

struct Result {
  Status status = Status::infeasible;
  Vector x;
  double objective = 0.0;
  long pivots = 0;
};

namespace detail {

class Tableau {
 public:
  static constexpr double kEps = 1e-11;

  Tableau(Index rows, Index cols) : t_(Matrix::Zero(rows + 1, cols + 1)), basis_(rows, -1) {}

  Matrix& data() { return t_; }
  std::vector<Index>& basis() { return basis_; }
  Index rows() const { return t_.rows() - 1; }
  Index cols() const { return t_.cols() - 1; }
  double rhs(Index r) const { return t_(r, cols()); }
  double objective() const { return t_(rows(), cols()); }
  long pivots() const { return pivots_; }

  void pivot(Index r, Index c) {
    t_.row(r) /= t_(r, c);
    for (Index i = 0; i <= rows(); ++i) {
      if (i == r) continue;
      const double f = t_(i, c);
      if (f != 0.0) t_.row(i) -= f * t_.row(r);
    }
    basis_[r] = c;
    ++pivots_;
  }

  /// Maximizes the objective row over columns [0, allowed). Dantzig pricing,
  /// falling back to Bland's rule after a run of degenerate pivots.
  Status optimize(Index allowed, long max_pivots) {
    long degenerate_run = 0;
    for (long it = 0; it < max_pivots; ++it) {
      const bool bland = degenerate_run > 50;
      Index enter = -1;
      double best = -kEps;
      for (Index j = 0; j < allowed; ++j) {
        const double rc = t_(rows(), j);
        if (rc < best) {
          enter = j;
          if (bland) break;
          best = rc;
        }
      }
      if (enter < 0) return Status::optimal;
      Index leave = -1;
      double ratio = std::numeric_limits<double>::infinity();
      for (Index i = 0; i < rows(); ++i) {
        const double a = t_(i, enter);
        if (a > kEps) {
          const double q = rhs(i) / a;
          if (q < ratio - kEps ||
              (q <= ratio + kEps && leave >= 0 && basis_[i] < basis_[leave])) {
            ratio = q;
            leave = i;
          }
        }
      }
      if (leave < 0) return Status::unbounded;
      degenerate_run = ratio <= kEps ? degenerate_run + 1 : 0;
      pivot(leave, enter);
    }
    return Status::iteration_limit;
  }

 private:
  Matrix t_;
  std::vector<Index> basis_;
  long pivots_ = 0;
};

}  // namespace detail

inline Result solve(const Problem& p, long max_pivots = 200000) {
  const Index m = p.A.rows();
  const Index n = p.A.cols();
  if (p.b.size() != m || static_cast<Index>(p.senses.size()) != m || p.c.size() != n) {
    throw std::invalid_argument("LP dimensions are inconsistent");
  }
  if (!p.A.allFinite() || !p.b.allFinite() || !p.c.allFinite()) {
    throw std::invalid_argument("LP data contains non-finite values");
  }

  // Normalize to b >= 0.
  Matrix A = p.A;
  Vector b = p.b;
  std::vector<Sense> sense = p.senses;
  for (Index i = 0; i < m; ++i) {
    if (b(i) < 0.0) {
      A.row(i) *= -1.0;
      b(i) = -b(i);
      if (sense[i] == Sense::le) {
        sense[i] = Sense::ge;
      } else if (sense[i] == Sense::ge) {
        sense[i] = Sense::le;
      }
    }
  }

  Index n_slack = 0;
  Index n_art = 0;
  for (const auto s : sense) {
    if (s != Sense::eq) ++n_slack;
    if (s != Sense::le) ++n_art;
  }
  const Index art0 = n + n_slack;
  const Index total = art0 + n_art;

  detail::Tableau tab(m, total);
  Matrix& t = tab.data();
  Index slack = n;
  Index art = art0;
  for (Index i = 0; i < m; ++i) {
    t.row(i).head(n) = A.row(i);
    t(i, total) = b(i);
    if (sense[i] == Sense::le) {
      t(i, slack) = 1.0;
      tab.basis()[i] = slack++;
    } else {
      if (sense[i] == Sense::ge) t(i, slack++) = -1.0;
      t(i, art) = 1.0;
      tab.basis()[i] = art++;
    }
  }

  Result res;
  // Phase 1: maximize -sum(artificials).
  if (n_art > 0) {
    t.row(m).setZero();
    for (Index j = art0; j < total; ++j) t(m, j) = 1.0;
    for (Index i = 0; i < m; ++i) {
      if (tab.basis()[i] >= art0) t.row(m) -= t.row(i);
    }
    const Status s1 = tab.optimize(total, max_pivots);
    if (s1 == Status::iteration_limit) {
      res.status = s1;
      return res;
    }
    if (tab.objective() < -1e-9 * std::max(1.0, b.lpNorm<Eigen::Infinity>())) {
      res.status = Status::infeasible;
      res.pivots = tab.pivots();
      return res;
    }
    // Drive zero-valued artificials out of the basis where possible.
    for (Index i = 0; i < m; ++i) {
      if (tab.basis()[i] < art0) continue;
      for (Index j = 0; j < art0; ++j) {
        if (std::abs(t(i, j)) > 1e-9) {
          tab.pivot(i, j);
          break;
        }
      }
    }
  }

  // Phase 2.
  t.row(m).setZero();
  t.row(m).head(n) = -p.c.transpose();
  for (Index i = 0; i < m; ++i) {
    const Index bi = tab.basis()[i];
    const double f = t(m, bi);
    if (f != 0.0) t.row(m) -= f * t.row(i);
  }
  const Status s2 = tab.optimize(art0, max_pivots);
  res.status = s2;
  res.pivots = tab.pivots();
  if (s2 != Status::optimal) return res;
  res.x = Vector::Zero(n);
  for (Index i = 0; i < m; ++i) {
    const Index bi = tab.basis()[i];
    if (bi < n) res.x(bi) = std::max(0.0, t(i, total));
  }
  res.objective = p.c.dot(res.x);
  return res;
}

}  // namespace expogame::lp
