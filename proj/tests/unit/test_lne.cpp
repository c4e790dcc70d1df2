#include <expogame/lne.hpp>

#include <gtest/gtest.h>

#include "oracles.hpp"

#include <cmath>
#include <numbers>
#include <random>

using namespace expogame;

namespace {

DemandDistribution two_basis(double w1) {
  Vector w(2);
  w << w1, 1.0 - w1;
  return DemandDistribution(Matrix::Identity(2, 2), w);
}

DemandDistribution triangle() {
  Matrix c(3, 2);
  for (int k = 0; k < 3; ++k) c.row(k) = unit_at(2.0 * std::numbers::pi * k / 3.0).transpose();
  return DemandDistribution(c);
}

}  // namespace

TEST(Classify, ThresholdRule) {
  const double thr = 1e-5 * std::sqrt(2.0);
  EXPECT_EQ(SecondOrderReport::classify({1.0, 0.0}, {-1.0, -1.0}, thr), LneClass::violated);
  EXPECT_EQ(SecondOrderReport::classify({0.0, 0.0}, {-1.0, 1e-300}, thr), LneClass::violated);
  EXPECT_EQ(SecondOrderReport::classify({0.0, 0.0}, {-1.0, 0.0}, thr), LneClass::inconclusive);
  EXPECT_EQ(SecondOrderReport::classify({0.0, 0.0}, {-1.0, -5e-11}, thr), LneClass::inconclusive);
  EXPECT_EQ(SecondOrderReport::classify({thr, 0.0}, {-1.0, -1e-9}, thr), LneClass::confirmed);
}

TEST(Classify, StringRoundTrip) {
  for (auto c : {LneClass::violated, LneClass::confirmed, LneClass::inconclusive}) {
    EXPECT_EQ(lne_class_from_string(to_string(c)), c);
  }
  EXPECT_EQ(to_string(LneClass::confirmed), "confirmed-LNE");
}

TEST(Ascent, FixedAtCbar) {
  std::mt19937_64 rng(1);
  const DemandDistribution p(oracle::random_points(rng, 10, 3, true));
  const Vector cbar = DerivedConsumerStats::compute(p, 4).require_c_bar();
  const GameConfig cfg{3, 4, 0.5, true};
  const Matrix theta = 2.5 * StrategyProfile::repeated(cbar, 4).matrix();
  const Matrix next = ascent_step(cfg, p, theta, {});
  EXPECT_LT((next - theta).norm(), 1e-14);
}

TEST(Ascent, IdenticalProducersStayIdentical) {
  std::mt19937_64 rng(2);
  const DemandDistribution p(oracle::random_points(rng, 8, 3));
  const GameConfig cfg{3, 3, 0.2, false};
  Matrix theta = initial_params(cfg, 5);
  theta.row(1) = theta.row(0);
  for (int it = 0; it < 200; ++it) {
    theta = ascent_step(cfg, p, theta, {});
    ASSERT_EQ(theta.row(0), theta.row(1));
  }
}

TEST(Ascent, SmallStepIncreasesEveryUtility) {
  std::mt19937_64 rng(3);
  for (int t = 0; t < 20; ++t) {
    const DemandDistribution p(oracle::random_points(rng, 7, 3));
    const GameConfig cfg{3, 3, 0.5, false};
    const Matrix theta = oracle::random_profile(rng, 3, 3);
    const StrategyProfile prof(theta);
    OptimizerConfig opt;
    opt.step_size = 1e-4;
    const Matrix next = ascent_step(cfg, p, theta, opt);
    for (Index i = 0; i < 3; ++i) {
      // Move producer i alone along its own step; the others stay put.
      const Vector si = next.row(i).transpose() / next.row(i).norm();
      const double before = utility(cfg, p, prof)(i);
      const double after = utility(cfg, p, prof.with(i, si))(i);
      const double gnorm =
          riemannian_gradient(prof, i, utility_gradient(cfg, p, prof, i)).norm();
      if (gnorm > 1e-8) EXPECT_GT(after, before);
    }
  }
}

TEST(Ascent, RejectsHardmaxAndZeroParams) {
  const DemandDistribution p(Matrix::Identity(2, 2));
  EXPECT_THROW(ascent_step({2, 2, 0.0, false}, p, Matrix::Identity(2, 2), {}), std::domain_error);
  EXPECT_THROW(ascent_step({2, 2, 1.0, false}, p, Matrix::Zero(2, 2), {}), std::domain_error);
}

TEST(Ascent, ScaleStepByTau) {
  std::mt19937_64 rng(4);
  const DemandDistribution p(oracle::random_points(rng, 5, 2));
  const GameConfig cfg{2, 2, 0.25, false};
  const Matrix theta = oracle::random_profile(rng, 2, 2);
  OptimizerConfig a;
  a.step_size = 0.025;
  OptimizerConfig b;
  b.step_size = 0.1;
  b.scale_step_by_tau = true;
  EXPECT_LT((ascent_step(cfg, p, theta, a) - ascent_step(cfg, p, theta, b)).norm(), 1e-15);
}

TEST(InitialParams, SeededAndNonnegative) {
  const GameConfig cfg{4, 6, 1.0, true};
  const Matrix a = initial_params(cfg, 9);
  EXPECT_EQ(a, initial_params(cfg, 9));
  EXPECT_NE(a, initial_params(cfg, 10));
  EXPECT_GE(a.minCoeff(), 0.0);
}

TEST(RunLne, HighTemperatureCollapsesToCbar) {
  std::mt19937_64 rng(5);
  const DemandDistribution p(oracle::random_points(rng, 30, 3, true));
  const Vector cbar = DerivedConsumerStats::compute(p, 5).require_c_bar();
  const GameConfig cfg{3, 5, 1.0, true};
  OptimizerConfig opt;
  opt.seed = 3;
  const RunRecord r = run_lne(cfg, p, opt);
  EXPECT_TRUE(r.converged);
  EXPECT_LE(r.last_change, opt.tolerance(3));
  for (Index i = 0; i < 5; ++i) EXPECT_LT((r.profile.strategy(i) - cbar).norm(), 1e-3);
  EXPECT_NE(r.second_order.classification, LneClass::violated);
}

TEST(RunLne, SingleProducerIsInconclusive) {
  std::mt19937_64 rng(6);
  const DemandDistribution p(oracle::random_points(rng, 5, 3));
  const GameConfig cfg{3, 1, 0.5, false};
  OptimizerConfig opt;
  opt.seed = 1;
  const RunRecord r = run_lne(cfg, p, opt);
  EXPECT_TRUE(r.converged);
  EXPECT_EQ(r.iterations, 1);
  EXPECT_NEAR(r.utilities(0), 1.0, 1e-15);
  EXPECT_EQ(r.second_order.classification, LneClass::inconclusive);
}

TEST(RunLne, NotConvergedMeansBudgetUsed) {
  std::mt19937_64 rng(7);
  const DemandDistribution p(oracle::random_points(rng, 20, 3));
  const GameConfig cfg{3, 6, 0.05, false};
  OptimizerConfig opt;
  opt.max_iters = 5;
  const RunRecord r = run_lne(cfg, p, opt);
  EXPECT_FALSE(r.converged);
  EXPECT_EQ(r.iterations, 5);
}

TEST(RunLne, Deterministic) {
  std::mt19937_64 rng(8);
  const DemandDistribution p(oracle::random_points(rng, 12, 3));
  const GameConfig cfg{3, 4, 0.1, false};
  OptimizerConfig opt;
  opt.seed = 42;
  opt.max_iters = 300;
  const RunRecord a = run_lne(cfg, p, opt);
  const RunRecord b = run_lne(cfg, p, opt);
  EXPECT_EQ(a.profile.matrix(), b.profile.matrix());
  EXPECT_EQ(a.iterations, b.iterations);
}

TEST(SecondOrder, CriticalAtCbarForLargeTau) {
  const auto p = two_basis(2.0 / 3.0);
  const Vector cbar = DerivedConsumerStats::compute(p, 2).require_c_bar();
  const auto prof = StrategyProfile::repeated(cbar, 2);
  const auto rep = second_order_test({2, 2, 10.0, true}, p, prof);
  for (double g : rep.gradient_norms) EXPECT_LE(g, rep.gradient_threshold);
}

TEST(SecondOrder, SmallTauCbarIsLocalButNotGlobal) {
  // Every exposure is 1/2, so the Euclidean Hessian vanishes and the tangent
  // curvature is -<s, g> < 0: locally optimal, yet a far deviation wins.
  const auto p = two_basis(2.0 / 3.0);
  const Vector cbar = DerivedConsumerStats::compute(p, 2).require_c_bar();
  const auto prof = StrategyProfile::repeated(cbar, 2);
  const GameConfig cfg{2, 2, 0.01, true};
  const auto rep = second_order_test(cfg, p, prof);
  EXPECT_EQ(rep.classification, LneClass::confirmed);
  EXPECT_EQ(utility_hessian(cfg, p, prof, 0).norm(), 0.0);
  const auto imp = epsilon_improvement(cfg, p, prof, 0, 4000);
  EXPECT_GT(imp.delta, 0.1);
  EXPECT_NEAR(imp.best_utility, 2.0 / 3.0, 1e-3);
}

TEST(Deviation, TriangleHardmaxSecondProducerGetsTwoThirds) {
  Matrix s(2, 2);
  s.row(0) = unit_at(0.0).transpose();
  s.row(1) = unit_at(1.0).transpose();
  const auto imp = epsilon_improvement({2, 2, 0.0, false}, triangle(), StrategyProfile(s), 1, 2000);
  EXPECT_GE(imp.best_utility, 2.0 / 3.0 - 1e-12);
}

TEST(Deviation, UnsupportedDimension) {
  const DemandDistribution p(Matrix::Identity(4, 4));
  const auto prof = StrategyProfile::repeated(Vector::Unit(4, 0), 2);
  EXPECT_THROW(epsilon_improvement({4, 2, 1.0, false}, p, prof, 0, 10), std::invalid_argument);
}

TEST(Deviation, SphericalGridAgreesWithUtility) {
  std::mt19937_64 rng(9);
  const DemandDistribution p(oracle::random_points(rng, 6, 3));
  const StrategyProfile prof(oracle::random_profile(rng, 3, 3));
  const GameConfig cfg{3, 3, 0.3, false};
  const Matrix grid = deviation_grid(3, 12);
  const Vector u = deviation_utilities(cfg, p, prof, 2, grid);
  for (Index k = 0; k < grid.rows(); k += 7) {
    EXPECT_NEAR(u(k), utility(cfg, p, prof.with(2, grid.row(k).transpose()))(2), 1e-14);
  }
}
