#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>

namespace expogame {

using Index = Eigen::Index;
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

namespace detail {

inline bool all_finite(const Eigen::Ref<const Matrix>& m) {
  return m.allFinite();
}

inline std::string dims(Index a, Index b) {
  return std::to_string(a) + " vs " + std::to_string(b);
}

}  // namespace detail

/// Finite weighted demand over consumer embeddings.
///
/// Points are stored row-wise (m x d). Weights default to uniform 1/m and
/// must form a probability vector.
class DemandDistribution {
 public:
  static constexpr double kWeightTolerance = 1e-12;

  DemandDistribution() = default;

  explicit DemandDistribution(Matrix points)
      : points_(std::move(points)),
        weights_(Vector::Constant(points_.rows(),
                                  points_.rows() > 0 ? 1.0 / points_.rows() : 0.0)) {
    validate();
  }

  DemandDistribution(Matrix points, Vector weights)
      : points_(std::move(points)), weights_(std::move(weights)) {
    validate();
  }

  Index size() const { return points_.rows(); }
  Index dim() const { return points_.cols(); }

  const Matrix& points() const { return points_; }
  const Vector& weights() const { return weights_; }
  Vector point(Index j) const { return points_.row(j).transpose(); }
  double weight(Index j) const { return weights_(j); }

  /// E[c] = sum_j w_j c_j
  Vector mean() const { return points_.transpose() * weights_; }

  /// True iff every coordinate of every point is >= 0.
  bool nonnegative() const { return (points_.array() >= 0.0).all(); }

  double max_norm() const {
    return size() == 0 ? 0.0 : points_.rowwise().norm().maxCoeff();
  }

 private:
  void validate() const {
    if (points_.rows() < 1) {
      throw std::invalid_argument("demand distribution needs at least one point");
    }
    if (points_.cols() < 1) {
      throw std::invalid_argument("demand points must have dimension >= 1");
    }
    if (weights_.size() != points_.rows()) {
      throw std::invalid_argument("weight count mismatch: " +
                                  detail::dims(weights_.size(), points_.rows()));
    }
    if (!points_.allFinite() || !weights_.allFinite()) {
      throw std::invalid_argument("demand distribution contains non-finite values");
    }
    if ((weights_.array() < 0.0).any()) {
      throw std::invalid_argument("demand weights must be non-negative");
    }
    if (std::abs(weights_.sum() - 1.0) > kWeightTolerance) {
      throw std::invalid_argument("demand weights must sum to 1");
    }
  }

  Matrix points_;
  Vector weights_;
};

/// Game parameters. tau == 0 selects hardmax, tau > 0 softmax.
struct GameConfig {
  Index d = 2;
  Index n = 2;
  double tau = 1.0;
  bool nonneg = false;

  bool hardmax() const { return tau == 0.0; }

  void validate() const {
    if (d < 1) throw std::invalid_argument("dimension d must be >= 1");
    if (n < 1) throw std::invalid_argument("producer count n must be >= 1");
    if (!(tau >= 0.0) || !std::isfinite(tau)) {
      throw std::invalid_argument("temperature tau must be finite and >= 0");
    }
  }

  void validate(const DemandDistribution& demand) const {
    validate();
    if (demand.dim() != d) {
      throw std::invalid_argument("demand dimension mismatch: " +
                                  detail::dims(demand.dim(), d));
    }
    if (nonneg && !demand.nonnegative()) {
      throw std::invalid_argument(
          "non-negative game requires all consumer coordinates >= 0");
    }
  }
};

/// n unit-norm strategies stored row-wise (n x d).
class StrategyProfile {
 public:
  static constexpr double kUnitTolerance = 1e-10;

  StrategyProfile() = default;

  explicit StrategyProfile(Matrix strategies) : s_(std::move(strategies)) {
    if (s_.rows() < 1 || s_.cols() < 1) {
      throw std::invalid_argument("strategy profile must be non-empty");
    }
    if (!s_.allFinite()) {
      throw std::invalid_argument("strategy profile contains non-finite values");
    }
    for (Index i = 0; i < s_.rows(); ++i) {
      if (std::abs(s_.row(i).norm() - 1.0) > kUnitTolerance) {
        throw std::invalid_argument("strategy " + std::to_string(i) +
                                    " is not unit norm");
      }
    }
  }

  /// Normalizes each row; rows with zero norm are rejected.
  static StrategyProfile from_params(const Matrix& params) {
    Matrix s = params;
    for (Index i = 0; i < s.rows(); ++i) {
      const double nrm = s.row(i).norm();
      if (!(nrm > 0.0) || !std::isfinite(nrm)) {
        throw std::invalid_argument("cannot normalize parameter row " +
                                    std::to_string(i));
      }
      s.row(i) /= nrm;
    }
    return StrategyProfile(std::move(s));
  }

  /// All n producers at the same point (normalized).
  static StrategyProfile repeated(const Vector& s, Index n) {
    Matrix m(n, s.size());
    for (Index i = 0; i < n; ++i) m.row(i) = s.transpose() / s.norm();
    return StrategyProfile(std::move(m));
  }

  Index size() const { return s_.rows(); }
  Index dim() const { return s_.cols(); }
  const Matrix& matrix() const { return s_; }
  Vector strategy(Index i) const { return s_.row(i).transpose(); }

  /// Copy with producer i replaced by `s` (normalized).
  StrategyProfile with(Index i, const Vector& s) const {
    Matrix m = s_;
    m.row(i) = s.transpose() / s.norm();
    return StrategyProfile(std::move(m));
  }

 private:
  Matrix s_;
};

/// c_hat = (1/n)(1 - 1/n) E[c] and its unit direction c_bar.
struct DerivedConsumerStats {
  /// |E[c]| at or below this (relative to the largest consumer norm) counts as zero.
  static constexpr double kZeroMeanTolerance = 1e-12;

  Vector c_hat;
  std::optional<Vector> c_bar;

  static DerivedConsumerStats compute(const DemandDistribution& demand, Index n) {
    const double nn = static_cast<double>(n);
    DerivedConsumerStats out;
    out.c_hat = (1.0 / nn) * (1.0 - 1.0 / nn) * demand.mean();
    // n == 1 makes c_hat vanish identically; the direction is still that of E[c].
    const Vector mean = demand.mean();
    const double nrm = mean.norm();
    if (nrm > kZeroMeanTolerance * std::max(1.0, demand.max_norm())) out.c_bar = mean / nrm;
    return out;
  }

  const Vector& require_c_bar() const {
    if (!c_bar) {
      throw std::domain_error("c_bar undefined: E[c] = 0");
    }
    return *c_bar;
  }
};

}  // namespace expogame
