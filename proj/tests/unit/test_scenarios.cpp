#include <expogame/scenarios.hpp>

#include <gtest/gtest.h>

#include "oracles.hpp"

#include <cmath>
#include <numbers>

using namespace expogame;

namespace {

constexpr double kPi = std::numbers::pi;

/// d/dtheta of u1 with s1 = phi(theta) moving alone, by central differences.
double fd_directional(double tau, double theta, double h) {
  const Matrix base = protective_profile(theta).matrix();
  const Matrix pts = Matrix::Identity(2, 2);
  const Vector w = Vector::Constant(2, 0.5);
  const double up = oracle::utility_at(pts, w, base, 0, phi(theta + h), tau);
  const double dn = oracle::utility_at(pts, w, base, 0, phi(theta - h), tau);
  return (up - dn) / (2.0 * h);
}

const CheckResult& find(const ScenarioReport& rep, const std::string& name) {
  for (const auto& c : rep.checks) {
    if (c.name == name) return c;
  }
  throw std::runtime_error("missing check " + name);
}

double value(const CheckResult& c, const std::string& key) {
  for (const auto& [k, v] : c.values) {
    if (k == key) return v;
  }
  throw std::runtime_error("missing value " + key);
}

}  // namespace

TEST(Triangle, AllChecksPass) {
  const auto rep = run_scenario(triangle_game());
  for (const auto& c : rep.checks) EXPECT_TRUE(c.passed) << c.name << " " << c.note;
  EXPECT_NEAR(value(find(rep, "mixed-demand-values"), "off_support"), 4.0 / 9.0, 1e-12);
  EXPECT_GE(value(find(rep, "hardmax-no-pne"), "min_margin"), 0.1);
}

TEST(Triangle, SweepAgreesWithDirectOracle) {
  // Recompute a handful of profiles of the sweep with the direct comparison oracle.
  const auto p = triangle_demand();
  const Matrix g = deviation_grid(2, 60);
  for (Index a = 0; a < 60; a += 7) {
    for (Index b = 0; b < 60; b += 11) {
      double best1 = 0.0;
      double best2 = 0.0;
      for (Index k = 0; k < 60; ++k) {
        best1 = std::max(best1, oracle::hardmax_pair(p.points(), p.weights(), g.row(k).transpose(),
                                                     g.row(b).transpose()));
        best2 = std::max(best2, oracle::hardmax_pair(p.points(), p.weights(), g.row(k).transpose(),
                                                     g.row(a).transpose()));
      }
      EXPECT_GE(std::max(best1, best2), 2.0 / 3.0 - 1e-12);
    }
  }
  EXPECT_GE(hardmax_no_pne_sweep(p, 60).min_margin, 0.1);
}

TEST(TwoBasis, Weights) {
  EXPECT_THROW(two_basis_game(0.7, 0.7), std::invalid_argument);
  EXPECT_THROW(two_basis_game(-0.1, 1.1), std::invalid_argument);
  const auto one = two_basis_game(1.0, 0.0);
  EXPECT_TRUE(one.config.nonneg);
  const auto st = DerivedConsumerStats::compute(one.demand, 2);
  EXPECT_NEAR((*st.c_bar - Vector::Unit(2, 0)).norm(), 0.0, 1e-15);
}

TEST(TwoBasis, SmallTauDeviationApproachesTwoThirds) {
  const auto sc = two_basis_game(2.0 / 3.0, 1.0 / 3.0, 2, 0.01);
  const Vector cbar = DerivedConsumerStats::compute(sc.demand, 2).require_c_bar();
  double prev = 0.0;
  for (double tau : {0.1, 0.03, 0.01, 0.003}) {
    const GameConfig cfg{2, 2, tau, true};
    const auto imp =
        epsilon_improvement(cfg, sc.demand, StrategyProfile::repeated(cbar, 2), 0, 20000);
    EXPECT_GT(imp.best_utility, prev);
    prev = imp.best_utility;
  }
  EXPECT_NEAR(prev, 2.0 / 3.0, 1e-3);
}

TEST(TwoBasis, BuiltinPasses) {
  EXPECT_TRUE(run_scenario(builtin_scenario("two-basis")).passed());
}

TEST(FTheta, EndpointSigns) {
  for (double tau : {0.1, 0.25, 1.0, 10.0}) {
    EXPECT_NEAR(f_theta(tau, kPi / 4.0), 0.0, 1e-12);
    EXPECT_GT(f_theta(tau, 0.0), 0.0);
  }
  EXPECT_LT(f_theta(0.25, kPi / 8.0), 0.0);
  EXPECT_THROW(f_theta(0.25, -0.1), std::domain_error);
  EXPECT_THROW(f_theta(0.25, 1.0), std::domain_error);
}

TEST(FTheta, MatchesDirectionalDerivative) {
  for (double tau : {0.25, 1.0}) {
    for (double theta : {0.05, 0.2, 0.5, 0.7}) {
      const double f = f_theta(tau, theta);
      const double fd = fd_directional(tau, theta, 1e-5);
      EXPECT_LT(std::abs(f - fd), 1e-6 * std::max(std::abs(f), 1e-3)) << tau << " " << theta;
    }
  }
}

TEST(FTheta, ConvexOnInteriorSamples) { EXPECT_GT(f_theta_min_curvature(0.25), 0.0); }

TEST(ThetaStar, RootAndNoDefection) {
  const double t = solve_theta_star(0.25);
  EXPECT_GT(t, 0.0);
  EXPECT_LT(t, kPi / 8.0);
  EXPECT_LT(std::abs(f_theta(0.25, t)), 1e-10);
  EXPECT_LE(protective_defection_gain(0.25, t), 1e-9);
  const auto sc = two_basis_game(0.5, 0.5, 4, 0.25);
  const auto rep = second_order_test(sc.config, sc.demand, protective_profile(t));
  EXPECT_NE(rep.classification, LneClass::violated);
  for (double e : rep.max_tangent_eigenvalues) EXPECT_LT(e, 0.0);
}

TEST(ThetaStar, LargeTauHasNoRoot) { EXPECT_THROW(solve_theta_star(10.0), std::domain_error); }

TEST(ThetaStar, SymmetricAscentConverges) {
  const auto sc = two_basis_game(0.5, 0.5, 4, 0.25);
  OptimizerConfig opt;
  opt.step_size = 0.1;
  const RunRecord rec = run_lne(sc.config, sc.demand, opt, protective_profile(0.3));
  ASSERT_TRUE(rec.converged);
  const double t = solve_theta_star(0.25);
  EXPECT_LT((rec.profile.matrix() - protective_profile(t).matrix()).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(EpsPne, TableProperties) {
  const auto sc = two_basis_game(2.0 / 3.0, 1.0 / 3.0);
  const auto rows = verify_eps_pne_bound(sc.demand, 2, {1, 2, 4, 8, 16}, 20000);
  ASSERT_EQ(rows.size(), 5u);
  for (std::size_t t = 0; t < rows.size(); ++t) {
    EXPECT_GE(rows[t].delta_max, 0.0);
    if (t > 0) EXPECT_LE(rows[t].scaled, rows[t - 1].scaled + 1e-12);
    if (rows[t].delta_bound) EXPECT_LE(rows[t].delta_observed, *rows[t].delta_bound);
  }
}

TEST(EpsPne, LowerTemperaturesShrinkWithTau) {
  // Below the collapse temperature improvements exist and tau * delta decays.
  const auto sc = two_basis_game(0.8, 0.2);
  const auto rows = verify_eps_pne_bound(sc.demand, 3, {0.05, 0.1, 0.2, 0.4}, 20000);
  EXPECT_GT(rows.front().delta_max, 0.0);
  for (std::size_t t = 1; t < rows.size(); ++t) {
    EXPECT_LE(rows[t].scaled, rows[t - 1].scaled + 1e-12);
  }
}

TEST(EpsPne, ConcentratedDemandHasNoGain) {
  Matrix c(1, 2);
  c << 0.6, 0.8;
  const auto rows = verify_eps_pne_bound(DemandDistribution(c), 3, {1, 2, 4}, 20000);
  for (const auto& r : rows) EXPECT_LE(r.delta_max, 1e-12);
}

TEST(EpsPne, RequiresCbar) {
  EXPECT_THROW(verify_eps_pne_bound(triangle_demand(), 2, {1}, 100), std::domain_error);
}

TEST(Orthant, BuiltinPasses) {
  const auto rep = run_scenario(orthant_basis_game());
  for (const auto& c : rep.checks) EXPECT_TRUE(c.passed) << c.name;
  EXPECT_GE(value(find(rep, "hardmax-no-pne"), "min_best_response"), 2.0 / 3.0 - 1e-12);
  EXPECT_NEAR(value(find(rep, "cbar"), "c_bar_0"), 1.0 / std::sqrt(3.0), 1e-15);
}

TEST(CriticalPoint, RandomDistributions) {
  const auto rep = run_scenario(builtin_scenario("critical-point"));
  EXPECT_TRUE(rep.passed());
}

TEST(Positioning, ClusterAnalogueRuns) {
  EXPECT_TRUE(run_scenario(builtin_scenario("protective-clusters")).passed());
}

TEST(Runner, UnknownNames) {
  EXPECT_THROW(builtin_scenario("nope"), std::invalid_argument);
  Scenario sc = triangle_game();
  sc.checks = {{"nope", {}, {}}};
  EXPECT_THROW(run_scenario(sc), std::invalid_argument);
}

TEST(Runner, DomainErrorsBecomeFailures) {
  Scenario sc = triangle_game();
  sc.checks = {{"critical-point", {{"tau", 1.0}}, {}}};
  const auto rep = run_scenario(sc);
  ASSERT_EQ(rep.checks.size(), 1u);
  EXPECT_FALSE(rep.checks[0].passed);
}
