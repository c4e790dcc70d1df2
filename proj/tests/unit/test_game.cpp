#include <expogame/game.hpp>

#include <gtest/gtest.h>

#include "oracles.hpp"

#include <cmath>
#include <numbers>
#include <random>

using namespace expogame;

namespace {

DemandDistribution triangle_demand() {
  Matrix c(3, 2);
  for (int k = 0; k < 3; ++k) {
    const double a = 2.0 * std::numbers::pi * k / 3.0;
    c(k, 0) = std::cos(a);
    c(k, 1) = std::sin(a);
  }
  return DemandDistribution(c);
}

Vector unit2(double a) {
  Vector v(2);
  v << std::cos(a), std::sin(a);
  return v;
}

double rel_err(const Matrix& a, const Matrix& b) {
  const double scale = std::max(b.norm(), 1e-8);
  return (a - b).norm() / scale;
}

}  // namespace

TEST(Demand, DefaultsToUniformWeights) {
  Matrix c(4, 2);
  c.setRandom();
  DemandDistribution p(c);
  EXPECT_EQ(p.size(), 4);
  for (Index j = 0; j < 4; ++j) EXPECT_DOUBLE_EQ(p.weight(j), 0.25);
}

TEST(Demand, RejectsBadWeights) {
  Matrix c = Matrix::Identity(2, 2);
  Vector w(2);
  w << 0.7, 0.4;
  EXPECT_THROW(DemandDistribution(c, w), std::invalid_argument);
  w << 1.5, -0.5;
  EXPECT_THROW(DemandDistribution(c, w), std::invalid_argument);
}

TEST(Demand, NonnegativePredicate) {
  Matrix c = Matrix::Identity(2, 2);
  EXPECT_TRUE(DemandDistribution(c).nonnegative());
  c(0, 1) = -1e-3;
  EXPECT_FALSE(DemandDistribution(c).nonnegative());
}

TEST(Config, NonnegFlagChecksDemand) {
  Matrix c(1, 2);
  c << 1.0, -1.0;
  GameConfig cfg{2, 2, 1.0, true};
  EXPECT_THROW(cfg.validate(DemandDistribution(c)), std::invalid_argument);
}

TEST(Profile, RequiresUnitNorm) {
  Matrix s(1, 2);
  s << 1.0, 0.1;
  EXPECT_THROW(StrategyProfile{s}, std::invalid_argument);
}

TEST(DerivedStats, ChatAndCbar) {
  Matrix c(2, 2);
  c << 1, 0, 0, 1;
  Vector w(2);
  w << 2.0 / 3.0, 1.0 / 3.0;
  const auto st = DerivedConsumerStats::compute(DemandDistribution(c, w), 2);
  EXPECT_NEAR(st.c_hat(0), 0.25 * 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(st.c_hat(1), 0.25 / 3.0, 1e-15);
  ASSERT_TRUE(st.c_bar.has_value());
  EXPECT_NEAR(st.c_bar->norm(), 1.0, 1e-12);
  EXPECT_NEAR(st.c_bar->dot(st.c_hat), st.c_hat.norm(), 1e-15);
}

TEST(DerivedStats, ZeroMeanLeavesCbarUndefined) {
  const auto st = DerivedConsumerStats::compute(triangle_demand(), 2);
  EXPECT_FALSE(st.c_bar.has_value());
  EXPECT_THROW(st.require_c_bar(), std::domain_error);
}

TEST(Exposure, HighTemperatureIsUniform) {
  std::mt19937_64 rng(3);
  const Matrix s = oracle::random_profile(rng, 5, 4);
  const Vector c = oracle::random_unit(rng, 4);
  const Vector p = exposure_probabilities({4, 5, 1e9, false}, StrategyProfile(s), c);
  for (Index i = 0; i < 5; ++i) EXPECT_NEAR(p(i), 0.2, 1e-8);
}

TEST(Exposure, HardmaxIndicator) {
  Matrix s(2, 2);
  s << 1, 0, 0, 1;
  Vector c(2);
  c << 0.9, 0.1;
  const Vector p = exposure_probabilities({2, 2, 0.0, false}, StrategyProfile(s), c);
  EXPECT_EQ(p(0), 1.0);
  EXPECT_EQ(p(1), 0.0);
}

TEST(Exposure, HardmaxTiesSplitEqually) {
  Matrix s(3, 2);
  s << 1, 0, 1, 0, 0, 1;
  Vector c(2);
  c << 1.0, 0.0;
  const Vector p = exposure_probabilities({2, 3, 0.0, false}, StrategyProfile(s), c);
  EXPECT_DOUBLE_EQ(p(0), 0.5);
  EXPECT_DOUBLE_EQ(p(1), 0.5);
  EXPECT_DOUBLE_EQ(p(2), 0.0);
}

TEST(Exposure, LogisticClosedForm) {
  // Choose c so that <c,s1> - <c,s2> = ln 3 with s1 = e1, s2 = e2.
  Matrix s(2, 2);
  s << 1, 0, 0, 1;
  Vector c(2);
  c << std::log(3.0), 0.0;
  const Vector p = exposure_probabilities({2, 2, 1.0, false}, StrategyProfile(s), c);
  EXPECT_NEAR(p(0), 0.75, 1e-15);
  const double direct = std::exp(std::log(3.0)) / (std::exp(std::log(3.0)) + 1.0);
  EXPECT_NEAR(p(0), direct, 1e-15);
}

TEST(Exposure, RejectsNaNAndMismatch) {
  const StrategyProfile prof(Matrix::Identity(2, 2));
  Vector c(2);
  c << NAN, 0.0;
  EXPECT_THROW(exposure_probabilities({2, 2, 1.0, false}, prof, c), std::invalid_argument);
  EXPECT_THROW(exposure_probabilities({2, 2, 1.0, false}, prof, Vector::Ones(3)),
               std::invalid_argument);
}

TEST(Exposure, SmallTauStable) {
  std::mt19937_64 rng(11);
  const Matrix s = oracle::random_profile(rng, 10, 3);
  const Vector c = 5.0 * oracle::random_unit(rng, 3);
  const Vector p = exposure_probabilities({3, 10, 1e-3, false}, StrategyProfile(s), c);
  EXPECT_TRUE(p.allFinite());
  EXPECT_NEAR(p.sum(), 1.0, 1e-12);
}

TEST(Exposure, ShiftInvariance) {
  // Adding a constant to every score: s_i -> s_i rotated so <c, s_i> all shift
  // equally is awkward on the sphere, so test the score-level helper directly.
  Vector z(4);
  z << 0.3, -0.2, 0.9, 0.1;
  Vector a = z;
  Vector b = (z.array() + 7.5).matrix();
  detail::scores_to_probabilities(a, 0.1);
  detail::scores_to_probabilities(b, 0.1);
  EXPECT_LT((a - b).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(Exposure, HardmaxLimitOfSoftmax) {
  std::mt19937_64 rng(5);
  for (int t = 0; t < 20; ++t) {
    const Matrix s = oracle::random_profile(rng, 4, 3);
    const Vector c = oracle::random_unit(rng, 3);
    const Vector hard = exposure_probabilities({3, 4, 0.0, false}, StrategyProfile(s), c);
    const Vector soft = exposure_probabilities({3, 4, 1e-6, false}, StrategyProfile(s), c);
    const Vector z = s * c;
    std::vector<double> sorted(z.data(), z.data() + z.size());
    std::sort(sorted.rbegin(), sorted.rend());
    if (sorted[0] - sorted[1] < 1e-4) continue;  // near-tie; limit not yet reached
    EXPECT_LT((hard - soft).cwiseAbs().maxCoeff(), 1e-4);
  }
}

TEST(Utility, IdenticalPairSplitsEvenly) {
  std::mt19937_64 rng(2);
  const Vector s = oracle::random_unit(rng, 3);
  const DemandDistribution p(oracle::random_points(rng, 7, 3), oracle::random_weights(rng, 7));
  for (double tau : {0.0, 0.1, 1.0}) {
    const Vector u = utility({3, 2, tau, false}, p, StrategyProfile::repeated(s, 2));
    EXPECT_NEAR(u(0), 0.5, 1e-15);
    EXPECT_NEAR(u(1), 0.5, 1e-15);
  }
}

TEST(Utility, TriangleArcMidpointGetsTwoThirds) {
  Matrix s(2, 2);
  s.row(0) = unit2(0.0).transpose();
  s.row(1) = unit2(std::numbers::pi).transpose();  // midpoint of the arc between c2 and c3
  const Vector u = utility({2, 2, 0.0, false}, triangle_demand(), StrategyProfile(s));
  EXPECT_NEAR(u(1), 2.0 / 3.0, 1e-15);
}

TEST(Utility, PermutationEquivariance) {
  std::mt19937_64 rng(9);
  const Matrix s = oracle::random_profile(rng, 5, 3);
  const DemandDistribution p(oracle::random_points(rng, 6, 3));
  const GameConfig cfg{3, 5, 0.3, false};
  const Vector u = utility(cfg, p, StrategyProfile(s));
  Eigen::PermutationMatrix<Eigen::Dynamic> perm(5);
  perm.indices() << 3, 0, 4, 1, 2;
  const Vector up = utility(cfg, p, StrategyProfile(perm * s));
  EXPECT_LT((perm * u - up).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Utility, ConservationOnRandomGames) {
  std::mt19937_64 rng(17);
  for (int t = 0; t < 200; ++t) {
    const Index d = 2 + static_cast<Index>(t % 5);
    const Index n = 1 + static_cast<Index>(t % 7);
    const double tau = (t % 3 == 0) ? 0.0 : std::pow(10.0, -(t % 3));
    const DemandDistribution p(oracle::random_points(rng, 9, d), oracle::random_weights(rng, 9));
    const Vector u = utility({d, n, tau, false}, p, StrategyProfile(oracle::random_profile(rng, n, d)));
    EXPECT_NEAR(u.sum(), 1.0, 1e-12);
  }
}

TEST(Gradient, MatchesFiniteDifferences) {
  std::mt19937_64 rng(23);
  const Index dims[] = {2, 3, 10};
  const Index ns[] = {2, 5};
  const double taus[] = {0.1, 1.0};
  int games = 0;
  while (games < 100) {
    for (Index d : dims) {
      for (Index n : ns) {
        for (double tau : taus) {
          if (games >= 100) break;
          ++games;
          const Matrix pts = oracle::random_points(rng, 6, d);
          const Vector w = oracle::random_weights(rng, 6);
          const Matrix s = oracle::random_profile(rng, n, d);
          const GameConfig cfg{d, n, tau, false};
          const DemandDistribution p(pts, w);
          const StrategyProfile prof(s);
          const Index i = games % n;
          const Vector g = utility_gradient(cfg, p, prof, i);
          const Vector gfd = oracle::fd_gradient(pts, w, s, i, tau, 1e-6);
          EXPECT_LT(rel_err(g, gfd), 1e-5) << "d=" << d << " n=" << n << " tau=" << tau;
          const Matrix h = utility_hessian(cfg, p, prof, i);
          const Matrix hfd = oracle::fd_hessian(pts, w, s, i, tau, 1e-4);
          EXPECT_LT(rel_err(h, hfd), 1e-4) << "d=" << d << " n=" << n << " tau=" << tau;
          EXPECT_LT((h - h.transpose()).norm(), 1e-15);
        }
      }
    }
  }
}

TEST(Gradient, AllGradientsAgreeWithSingle) {
  std::mt19937_64 rng(4);
  const DemandDistribution p(oracle::random_points(rng, 5, 3));
  const StrategyProfile prof(oracle::random_profile(rng, 4, 3));
  const GameConfig cfg{3, 4, 0.5, false};
  const Matrix all = utility_gradients(cfg, p, prof);
  for (Index i = 0; i < 4; ++i) {
    EXPECT_LT((all.row(i).transpose() - utility_gradient(cfg, p, prof, i)).norm(), 1e-14);
  }
}

TEST(Gradient, EqualForIdenticalPair) {
  std::mt19937_64 rng(8);
  const DemandDistribution p(oracle::random_points(rng, 5, 3));
  const auto prof = StrategyProfile::repeated(oracle::random_unit(rng, 3), 2);
  const GameConfig cfg{3, 2, 0.7, false};
  EXPECT_LT((utility_gradient(cfg, p, prof, 0) - utility_gradient(cfg, p, prof, 1)).norm(), 1e-15);
}

TEST(Gradient, ParallelToChatAtCbar) {
  std::mt19937_64 rng(12);
  const DemandDistribution p(oracle::random_points(rng, 8, 4, true));
  const auto st = DerivedConsumerStats::compute(p, 3);
  const auto prof = StrategyProfile::repeated(st.require_c_bar(), 3);
  const GameConfig cfg{4, 3, 0.4, false};
  for (Index i = 0; i < 3; ++i) {
    const Vector g = utility_gradient(cfg, p, prof, i);
    const double cosang = g.dot(st.c_hat) / (g.norm() * st.c_hat.norm());
    EXPECT_NEAR(cosang, 1.0, 1e-12);
    EXPECT_LT(riemannian_gradient(prof, i, g).norm(), 1e-10);
  }
}

TEST(Gradient, HardmaxUnsupported) {
  const DemandDistribution p(Matrix::Identity(2, 2));
  const StrategyProfile prof(Matrix::Identity(2, 2));
  EXPECT_THROW(utility_gradient({2, 2, 0.0, false}, p, prof, 0), std::domain_error);
  EXPECT_THROW(utility_hessian({2, 2, 0.0, false}, p, prof, 0), std::domain_error);
}

TEST(Hessian, TwoBasisDiagonalForm) {
  // P = (d_e1 + d_e2) / 2: the Hessian is diag(w p(1-p)(1-2p) at each consumer) / tau^2.
  const DemandDistribution p(Matrix::Identity(2, 2));
  Matrix s(2, 2);
  s.row(0) = unit2(0.3).transpose();
  s.row(1) = unit2(1.1).transpose();
  const double tau = 0.5;
  const StrategyProfile prof(s);
  const Matrix h = utility_hessian({2, 2, tau, false}, p, prof, 0);
  auto coef = [&](Index j) {
    const double q = oracle::exposure(s, Matrix::Identity(2, 2).row(j).transpose(), 0, tau);
    return 0.5 * q * (1 - q) * (1 - 2 * q) / (tau * tau);
  };
  EXPECT_NEAR(h(0, 0), coef(0), 1e-14);
  EXPECT_NEAR(h(1, 1), coef(1), 1e-14);
  EXPECT_NEAR(h(0, 1), 0.0, 1e-15);
}

TEST(Hessian, VanishesAtEvenSplit) {
  std::mt19937_64 rng(31);
  const DemandDistribution p(oracle::random_points(rng, 5, 3));
  const auto prof = StrategyProfile::repeated(oracle::random_unit(rng, 3), 2);
  EXPECT_EQ(utility_hessian({3, 2, 0.2, false}, p, prof, 0).norm(), 0.0);
}

TEST(Riemannian, ProjectionIdentities) {
  std::mt19937_64 rng(41);
  const Matrix s = oracle::random_profile(rng, 2, 4);
  const StrategyProfile prof(s);
  const Vector s0 = s.row(0).transpose();
  EXPECT_LT(riemannian_gradient(prof, 0, s0).norm(), 1e-15);
  Vector t = oracle::random_unit(rng, 4);
  t -= s0 * s0.dot(t);
  EXPECT_LT((riemannian_gradient(prof, 0, t) - t).norm(), 1e-15);
  const Vector g = oracle::random_unit(rng, 4);
  EXPECT_LT(std::abs(riemannian_gradient(prof, 0, g).dot(s0)), 1e-12);
}

TEST(Riemannian, HessianFormulaReductions) {
  std::mt19937_64 rng(43);
  const Matrix s = oracle::random_profile(rng, 1, 4);
  const StrategyProfile prof(s);
  const Vector s0 = s.row(0).transpose();
  const Matrix zero = Matrix::Zero(4, 4);
  const Matrix rh = riemannian_hessian(prof, 0, s0, zero);
  EXPECT_LT((rh + tangent_projector(s0)).norm(), 1e-15);
  const Vector e1 = tangent_eigenvalues(rh, s0);
  ASSERT_EQ(e1.size(), 3);
  for (Index k = 0; k < 3; ++k) EXPECT_NEAR(e1(k), -1.0, 1e-14);
  const Vector e2 = tangent_eigenvalues(riemannian_hessian(prof, 0, -s0, zero), s0);
  for (Index k = 0; k < 3; ++k) EXPECT_NEAR(e2(k), 1.0, 1e-14);
  EXPECT_LT((rh * s0).norm(), 1e-15);
}

TEST(Riemannian, TangentBasisOrthonormal) {
  std::mt19937_64 rng(47);
  for (Index d : {2, 3, 7}) {
    const Vector s = oracle::random_unit(rng, d);
    const Matrix b = tangent_basis(s);
    EXPECT_LT((b.transpose() * b - Matrix::Identity(d - 1, d - 1)).norm(), 1e-14);
    EXPECT_LT((b.transpose() * s).norm(), 1e-14);
  }
}

TEST(Gradient, ScaledGradientApproachesChat) {
  // max over random s1 of |tau grad u1 - c_hat| shrinks as tau grows.
  std::mt19937_64 rng(53);
  Matrix pts = oracle::random_points(rng, 12, 3);
  for (Index j = 0; j < pts.rows(); ++j) pts.row(j) /= std::max(1.0, pts.row(j).norm());
  const DemandDistribution p(pts);
  const Index n = 3;
  const auto st = DerivedConsumerStats::compute(p, n);
  const Matrix others = oracle::random_profile(rng, n, 3);
  std::vector<Matrix> probes;
  for (int k = 0; k < 1000; ++k) {
    Matrix s = others;
    s.row(0) = oracle::random_unit(rng, 3).transpose();
    probes.push_back(s);
  }
  double prev = INFINITY;
  for (double tau : {1.0, 10.0, 100.0, 1000.0}) {
    double worst = 0.0;
    for (const auto& s : probes) {
      const Vector g = utility_gradient({3, n, tau, false}, p, StrategyProfile(s), 0);
      worst = std::max(worst, (tau * g - st.c_hat).norm());
    }
    EXPECT_LT(worst, prev);
    prev = worst;
  }
  EXPECT_LT(prev, 1e-3);
}
