#pragma once

// Small analytic games with machine-checkable properties: the hardmax
// triangle, two-consumer basis games, the n = 4 protective-positioning
// construction and high-temperature collapse checks.

#include "expogame/audit.hpp"
#include "expogame/core.hpp"
#include "expogame/game.hpp"
#include "expogame/hardmax.hpp"
#include "expogame/lne.hpp"
#include "expogame/sphere.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numbers>
#include <optional>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace expogame {

/// One declarative property to evaluate on a scenario. `kind` selects the
/// check; numeric parameters and an optional tau list configure it.
struct CheckSpec {
  std::string kind;
  std::map<std::string, double> params;
  std::vector<double> taus;

  double get(const std::string& key, double fallback) const {
    const auto it = params.find(key);
    return it == params.end() ? fallback : it->second;
  }
};

struct Scenario {
  std::string name;
  GameConfig config;
  DemandDistribution demand;
  std::vector<CheckSpec> checks;

  void validate() const { config.validate(demand); }
};

struct CheckResult {
  std::string name;
  bool passed = false;
  /// Named scalar outputs in insertion order.
  std::vector<std::pair<std::string, double>> values;
  std::string note;

  void add(const std::string& key, double v) { values.emplace_back(key, v); }
};

struct ScenarioReport {
  std::string scenario;
  std::vector<CheckResult> checks;

  bool passed() const {
    return std::all_of(checks.begin(), checks.end(), [](const auto& c) { return c.passed; });
  }
};

// ---------------------------------------------------------------------------
// Constructions

inline DemandDistribution triangle_demand() {
  Matrix c(3, 2);
  for (int k = 0; k < 3; ++k) c.row(k) = unit_at(2.0 * std::numbers::pi * k / 3.0).transpose();
  return DemandDistribution(c);
}

/// d = 2, three unit consumers 2pi/3 apart, hardmax, two producers.
inline Scenario triangle_game() {
  Scenario s{"triangle", {2, 2, 0.0, false}, triangle_demand(), {}};
  s.checks.push_back({"hardmax-no-pne", {{"resolution", 2000}, {"margin", 0.1}}, {}});
  s.checks.push_back({"mixed-demand-values", {{"off_support", 4.0 / 9.0}}, {}});
  s.checks.push_back({"cbar-undefined", {}, {}});
  s.checks.push_back({"lp-value", {{"k", 3}, {"uniform", 1}}, {}});
  s.checks.push_back({"hitting-set", {{"max_support", 3}}, {}});
  return s;
}

/// Consumers e1, e2 in d = 2 with the given weights.
inline Scenario two_basis_game(double w1, double w2, Index n = 2, double tau = 1.0) {
  if (!(w1 >= 0.0) || !(w2 >= 0.0) || std::abs(w1 + w2 - 1.0) > 1e-12) {
    throw std::invalid_argument("two-basis weights must be non-negative and sum to 1");
  }
  Vector w(2);
  w << w1, w2;
  Scenario s{"two-basis", {2, n, tau, true}, DemandDistribution(Matrix::Identity(2, 2), w), {}};
  return s;
}

/// Canonical basis of R^3 as consumers; hardmax, two producers.
inline Scenario orthant_basis_game() {
  Scenario s{"orthant", {3, 2, 0.0, true}, DemandDistribution(Matrix::Identity(3, 3)), {}};
  s.checks.push_back({"hardmax-no-pne", {{"resolution", 30}, {"margin", 0.1}}, {}});
  s.checks.push_back({"high-tau-even-split", {{"tau", 1e6}, {"profiles", 50}}, {}});
  s.checks.push_back({"cbar", {}, {}});
  return s;
}

// ---------------------------------------------------------------------------
// n = 4 symmetric construction on P = (d_e1 + d_e2) / 2

inline Vector phi(double theta) { return unit_at(theta); }

/// s1 = s2 = phi(theta), s3 = s4 = phi(pi/2 - theta).
inline StrategyProfile protective_profile(double theta) {
  Matrix s(4, 2);
  s.row(0) = phi(theta).transpose();
  s.row(1) = phi(theta).transpose();
  s.row(2) = phi(std::numbers::pi / 2.0 - theta).transpose();
  s.row(3) = phi(std::numbers::pi / 2.0 - theta).transpose();
  return StrategyProfile(s);
}

/// <g1, Q s1> with g1 the Euclidean gradient of u1 and Q the 90 degree rotation.
inline double f_theta(double tau, double theta) {
  if (!(theta >= 0.0) || theta > std::numbers::pi / 4.0) {
    throw std::domain_error("theta must lie in [0, pi/4]");
  }
  if (!(tau > 0.0)) throw std::domain_error("f_theta requires tau > 0");
  const Scenario sc = two_basis_game(0.5, 0.5, 4, tau);
  const StrategyProfile prof = protective_profile(theta);
  const Vector g = utility_gradient(sc.config, sc.demand, prof, 0);
  const Vector s1 = prof.strategy(0);
  Vector qs(2);
  qs << -s1(1), s1(0);
  return g.dot(qs);
}

/// Root of f on (0, pi/8) by bisection to 1e-12.
inline double solve_theta_star(double tau) {
  double lo = 0.0;
  double hi = std::numbers::pi / 8.0;
  const double flo = f_theta(tau, lo);
  const double fhi = f_theta(tau, hi);
  if (!(flo > 0.0 && fhi < 0.0)) {
    std::ostringstream os;
    os << "no sign change of f on (0, pi/8) at tau = " << tau << " (f(0) = " << flo
       << ", f(pi/8) = " << fhi << ")";
    throw std::domain_error(os.str());
  }
  while (hi - lo > 1e-12) {
    const double mid = 0.5 * (lo + hi);
    (f_theta(tau, mid) > 0.0 ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

/// Largest gain of producer 1 over theta_1 in [0, pi/2] with the others fixed.
inline double protective_defection_gain(double tau, double theta, Index samples = 200001) {
  const Scenario sc = two_basis_game(0.5, 0.5, 4, tau);
  const StrategyProfile prof = protective_profile(theta);
  Matrix grid(samples, 2);
  for (Index k = 0; k < samples; ++k) {
    grid.row(k) =
        phi(0.5 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(samples - 1))
            .transpose();
  }
  const Vector u = deviation_utilities(sc.config, sc.demand, prof, 0, grid);
  return u.maxCoeff() - utility(sc.config, sc.demand, prof)(0);
}

/// min over interior sample points of a central second difference of f.
inline double f_theta_min_curvature(double tau, Index points = 100, double h = 1e-3) {
  const double len = std::numbers::pi / 4.0;
  double worst = std::numeric_limits<double>::infinity();
  for (Index k = 0; k < points; ++k) {
    const double t = (static_cast<double>(k) + 0.5) * len / static_cast<double>(points);
    const double a = std::max(0.0, t - h);
    const double b = std::min(len, t + h);
    const double m = 0.5 * (a + b);
    const double hh = 0.5 * (b - a);
    const double d2 = (f_theta(tau, b) - 2.0 * f_theta(tau, m) + f_theta(tau, a)) / (hh * hh);
    worst = std::min(worst, d2);
  }
  return worst;
}

// ---------------------------------------------------------------------------
// Collapse point checks

struct EpsPneRow {
  double tau = 0.0;
  double delta_max = 0.0;
  double scaled = 0.0;  // tau * delta_max
  double delta_observed = 0.0;
  std::optional<double> delta_bound;
};

/// For every tau: best improvement of one producer deviating from the all-c_bar
/// profile over a deviation grid (clamped at 0), and the farthest improving
/// grid point from c_bar.
inline std::vector<EpsPneRow> verify_eps_pne_bound(const DemandDistribution& demand, Index n,
                                                   const std::vector<double>& taus,
                                                   Index resolution) {
  const Index d = demand.dim();
  if (d != 2 && d != 3) throw std::invalid_argument("eps-PNE check supports d = 2 or 3");
  const DerivedConsumerStats st = DerivedConsumerStats::compute(demand, n);
  const Vector cbar = st.require_c_bar();
  const double chat = st.c_hat.norm();
  const Matrix grid = deviation_grid(d, resolution);
  const StrategyProfile prof = StrategyProfile::repeated(cbar, n);
  std::vector<EpsPneRow> rows;
  for (double tau : taus) {
    if (!(tau > 0.0)) throw std::invalid_argument("eps-PNE check requires tau > 0");
    const GameConfig cfg{d, n, tau, false};
    const Vector u = deviation_utilities(cfg, demand, prof, 0, grid);
    const double current = utility(cfg, demand, prof)(0);
    EpsPneRow row;
    row.tau = tau;
    row.delta_max = std::max(0.0, u.maxCoeff() - current);
    row.scaled = tau * row.delta_max;
    for (Index k = 0; k < grid.rows(); ++k) {
      if (u(k) - current > 0.0) {
        row.delta_observed = std::max(row.delta_observed, (grid.row(k).transpose() - cbar).norm());
      }
    }
    if (row.scaled < chat) row.delta_bound = 2.0 * row.scaled / (chat - row.scaled);
    rows.push_back(row);
  }
  return rows;
}

/// Riemannian gradient norms of every producer at the all-c_bar profile.
inline std::vector<double> cbar_gradient_norms(const DemandDistribution& demand, Index n,
                                               double tau) {
  const Vector cbar = DerivedConsumerStats::compute(demand, n).require_c_bar();
  const GameConfig cfg{demand.dim(), n, tau, false};
  const StrategyProfile prof = StrategyProfile::repeated(cbar, n);
  const Matrix g = utility_gradients(cfg, demand, prof);
  std::vector<double> out;
  for (Index i = 0; i < n; ++i) out.push_back(riemannian_gradient(prof, i, g.row(i).transpose()).norm());
  return out;
}

// ---------------------------------------------------------------------------
// Hardmax no-PNE sweep

struct NoPneSweep {
  Index grid_points = 0;
  /// min over profiles of the larger best-response gain of the two players.
  double min_margin = 0.0;
  /// min over profiles of the larger best-response utility of the two players.
  double min_best_response = 0.0;
  Index worst_a = 0;
  Index worst_b = 0;
};

/// Exhaustive two-player sweep over a grid (angles 2 pi j / k for d = 2, the
/// spherical grid with k points per coordinate for d = 3).
inline NoPneSweep hardmax_no_pne_sweep(const DemandDistribution& demand, Index resolution) {
  const Matrix grid = deviation_grid(demand.dim(), resolution);
  const Matrix u = payoff_matrix(demand, grid);  // u(i, j) = u1(grid_i, grid_j)
  const Vector best = u.colwise().maxCoeff().transpose();  // best response value to column j
  NoPneSweep out;
  out.grid_points = grid.rows();
  out.min_margin = std::numeric_limits<double>::infinity();
  out.min_best_response = std::numeric_limits<double>::infinity();
  for (Index a = 0; a < grid.rows(); ++a) {
    for (Index b = 0; b < grid.rows(); ++b) {
      const double gain1 = best(b) - u(a, b);
      const double gain2 = best(a) - u(b, a);
      const double margin = std::max(gain1, gain2);
      if (margin < out.min_margin) {
        out.min_margin = margin;
        out.worst_a = a;
        out.worst_b = b;
      }
      out.min_best_response = std::min(out.min_best_response, std::max(best(b), best(a)));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Seeded Gaussian-cluster demand used for collapse and positioning runs.

/// m consumers around `centers` (rows) with isotropic noise, labels = center index.
inline DemandDistribution gaussian_cluster_demand(const Matrix& centers, Index m, double noise,
                                                  std::uint64_t seed,
                                                  std::vector<Index>* labels = nullptr) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<Index> pick(0, centers.rows() - 1);
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix pts(m, centers.cols());
  if (labels) labels->clear();
  for (Index j = 0; j < m; ++j) {
    const Index c = pick(rng);
    if (labels) labels->push_back(c);
    for (Index a = 0; a < centers.cols(); ++a) pts(j, a) = centers(c, a) + noise * normal(rng);
  }
  return DemandDistribution(pts);
}

inline Matrix default_cluster_centers() {
  Matrix c(3, 3);
  c << 1.0, 0.3, 0.3, 0.3, 1.0, 0.3, 0.3, 0.3, 1.0;
  return c;
}

struct CollapseSummary {
  std::vector<Index> cluster_counts;
  std::vector<double> max_distance_to_cbar;
  std::vector<bool> converged;
};

/// Independent optimizer runs (seeds 0..runs-1) on one demand.
inline CollapseSummary collapse_runs(const DemandDistribution& demand, Index n, double tau,
                                     double step, Index runs, long max_iters = 50000) {
  const auto st = DerivedConsumerStats::compute(demand, n);
  const GameConfig cfg{demand.dim(), n, tau, false};
  CollapseSummary out;
  for (Index r = 0; r < runs; ++r) {
    OptimizerConfig opt;
    opt.step_size = step;
    opt.seed = static_cast<std::uint64_t>(r);
    opt.max_iters = max_iters;
    const RunRecord rec = run_lne(cfg, demand, opt);
    out.cluster_counts.push_back(cluster_count(rec.profile));
    out.converged.push_back(rec.converged);
    double dist = std::numeric_limits<double>::quiet_NaN();
    if (st.c_bar) {
      dist = 0.0;
      for (Index i = 0; i < n; ++i) dist = std::max(dist, (rec.profile.strategy(i) - *st.c_bar).norm());
    }
    out.max_distance_to_cbar.push_back(dist);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Check runner

namespace detail {

inline Index as_index(double v, const char* what) {
  if (!(v >= 1.0) || v != std::floor(v)) {
    throw std::invalid_argument(std::string(what) + " must be a positive integer");
  }
  return static_cast<Index>(v);
}

inline CheckResult check_conservation(const Scenario& sc, const CheckSpec& spec) {
  CheckResult r{"conservation", true, {}, {}};
  std::mt19937_64 rng(static_cast<std::uint64_t>(spec.get("seed", 0)));
  std::normal_distribution<double> normal(0.0, 1.0);
  const Index count = as_index(spec.get("profiles", 100), "profiles");
  double worst = 0.0;
  for (Index t = 0; t < count; ++t) {
    Matrix s(sc.config.n, sc.config.d);
    for (Index k = 0; k < s.size(); ++k) s.data()[k] = normal(rng);
    const Vector u = utility(sc.config, sc.demand, StrategyProfile::from_params(s));
    worst = std::max(worst, std::abs(u.sum() - 1.0));
  }
  r.add("max_abs_error", worst);
  r.passed = worst <= 1e-12;
  return r;
}

inline CheckResult check_no_pne(const Scenario& sc, const CheckSpec& spec) {
  CheckResult r{"hardmax-no-pne", false, {}, {}};
  const Index res = as_index(spec.get("resolution", 2000), "resolution");
  const double margin = spec.get("margin", 0.1);
  const NoPneSweep sw = hardmax_no_pne_sweep(sc.demand, res);
  r.add("resolution", static_cast<double>(res));
  r.add("grid_points", static_cast<double>(sw.grid_points));
  r.add("min_margin", sw.min_margin);
  r.add("min_best_response", sw.min_best_response);
  r.passed = sw.min_margin >= margin;
  if (spec.params.count("best_response")) {
    r.passed = r.passed && sw.min_best_response >= spec.get("best_response", 0.0) - 1e-12;
  }
  r.note = "no pure equilibrium certified up to grid resolution";
  return r;
}

inline CheckResult check_mixed_values(const Scenario& sc, const CheckSpec& spec) {
  CheckResult r{"mixed-demand-values", false, {}, {}};
  if (sc.demand.dim() != 2) throw std::invalid_argument("mixed-demand-values requires d = 2");
  const MixedStrategy pc = detail::demand_directions(sc.demand);
  double on_lo = 1.0;
  double on_hi = 0.0;
  double off = 1.0;
  for (Index i = 0; i < pc.size(); ++i) {
    const Vector v = pc.support().row(i).transpose();
    const double on = mixture_payoff(sc.demand, pc, v);
    on_lo = std::min(on_lo, on);
    on_hi = std::max(on_hi, on);
    // Deviator at the antipode of a support point; report the deviator's value.
    off = std::min(off, 1.0 - mixture_payoff(sc.demand, pc, -v));
  }
  r.add("on_support_min", on_lo);
  r.add("on_support_max", on_hi);
  r.add("off_support", off);
  r.passed = std::abs(on_lo - 0.5) <= 1e-12 && std::abs(on_hi - 0.5) <= 1e-12;
  if (spec.params.count("off_support")) {
    r.passed = r.passed && std::abs(off - spec.get("off_support", 0.0)) <= 1e-12;
  }
  return r;
}

inline CheckResult check_cbar_undefined(const Scenario& sc) {
  CheckResult r{"cbar-undefined", false, {}, {}};
  const auto st = DerivedConsumerStats::compute(sc.demand, sc.config.n);
  r.add("mean_norm", sc.demand.mean().norm());
  r.passed = !st.c_bar.has_value();
  r.note = "collapse-point checks skipped";
  return r;
}

inline CheckResult check_cbar(const Scenario& sc, const CheckSpec& spec) {
  CheckResult r{"cbar", false, {}, {}};
  const auto st = DerivedConsumerStats::compute(sc.demand, sc.config.n);
  if (!st.c_bar) {
    r.note = "c_bar undefined";
    return r;
  }
  for (Index a = 0; a < st.c_bar->size(); ++a) r.add("c_bar_" + std::to_string(a), (*st.c_bar)(a));
  r.passed = std::abs(st.c_bar->norm() - 1.0) <= 1e-12;
  // Optional expected direction: equal coordinates.
  if (spec.get("equal_coordinates", 1) != 0.0) {
    const double c0 = (*st.c_bar)(0);
    for (Index a = 1; a < st.c_bar->size(); ++a) {
      r.passed = r.passed && std::abs((*st.c_bar)(a) - c0) <= 1e-12;
    }
  }
  return r;
}

inline CheckResult check_lp_value(const Scenario& sc, const CheckSpec& spec) {
  CheckResult r{"lp-value", false, {}, {}};
  const Index k = as_index(spec.get("k", 360), "k");
  const GameConfig cfg{sc.demand.dim(), 2, 0.0, sc.config.nonneg};
  const auto eq = lp_mixed_ne(cfg, sc.demand, discretize_sphere(sc.demand.dim(), k));
  r.add("value", eq.value);
  r.add("support", static_cast<double>(eq.strategy.size()));
  r.passed = std::abs(eq.value - 0.5) <= 1e-9;
  if (spec.get("uniform", 0) != 0.0) {
    const double target = 1.0 / static_cast<double>(eq.strategy.size());
    const double dev = (eq.strategy.probs().array() - target).abs().maxCoeff();
    r.add("max_deviation_from_uniform", dev);
    r.passed = r.passed && dev <= 1e-9 && eq.strategy.size() == sc.demand.size();
  }
  return r;
}

inline CheckResult check_hitting_set(const Scenario& sc, const CheckSpec& spec) {
  CheckResult r{"hitting-set", false, {}, {}};
  HittingSetOptions opt;
  opt.max_support = as_index(spec.get("max_support", 3), "max_support");
  const auto res = hitting_set_mixed_ne(sc.demand, opt);
  if (!res) {
    r.note = "no mixed equilibrium within support bound";
    return r;
  }
  const double worst = verify_mixed_strategy(sc.demand, res->strategy,
                                             as_index(spec.get("verify_resolution", 10000), "verify_resolution"));
  r.add("support", static_cast<double>(res->strategy.size()));
  r.add("rounds", static_cast<double>(res->rounds));
  r.add("verification_margin", worst - 0.5);
  r.passed = worst >= 0.5 - 1e-9;
  return r;
}

inline CheckResult check_critical_point(const Scenario& sc, const CheckSpec& spec) {
  CheckResult r{"critical-point", false, {}, {}};
  const double tau = spec.get("tau", sc.config.tau);
  const auto norms = cbar_gradient_norms(sc.demand, sc.config.n, tau);
  const double worst = *std::max_element(norms.begin(), norms.end());
  r.add("max_riemannian_gradient", worst);
  r.passed = worst <= 1e-10;
  return r;
}

/// Random demand distributions (seeded), all-c_bar gradients for each.
inline CheckResult check_critical_point_random(const Scenario& sc, const CheckSpec& spec) {
  CheckResult r{"critical-point-random", false, {}, {}};
  std::mt19937_64 rng(static_cast<std::uint64_t>(spec.get("seed", 0)));
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.1, 1.0);
  const Index count = as_index(spec.get("distributions", 20), "distributions");
  const Index m = as_index(spec.get("consumers", 15), "consumers");
  double worst = 0.0;
  for (Index t = 0; t < count; ++t) {
    Matrix pts(m, sc.config.d);
    for (Index k = 0; k < pts.size(); ++k) pts.data()[k] = normal(rng) + 0.3;
    Vector w(m);
    for (Index j = 0; j < m; ++j) w(j) = unif(rng);
    w /= w.sum();
    const auto norms = cbar_gradient_norms(DemandDistribution(pts, w), sc.config.n,
                                           spec.get("tau", sc.config.tau));
    worst = std::max(worst, *std::max_element(norms.begin(), norms.end()));
  }
  r.add("distributions", static_cast<double>(count));
  r.add("max_riemannian_gradient", worst);
  r.passed = worst <= 1e-10;
  return r;
}

inline CheckResult check_eps_pne(const Scenario& sc, const CheckSpec& spec) {
  CheckResult r{"eps-pne", false, {}, {}};
  const std::vector<double> taus =
      spec.taus.empty() ? std::vector<double>{1, 2, 4, 8, 16} : spec.taus;
  const Index res = as_index(spec.get("resolution", 20000), "resolution");
  const auto rows = verify_eps_pne_bound(sc.demand, sc.config.n, taus, res);
  bool ok = true;
  for (std::size_t t = 0; t < rows.size(); ++t) {
    const auto& row = rows[t];
    std::ostringstream key;
    key << "tau=" << row.tau << ":";
    const std::string p = key.str();
    r.add(p + "delta_max", row.delta_max);
    r.add(p + "tau_delta_max", row.scaled);
    r.add(p + "delta_observed", row.delta_observed);
    if (row.delta_bound) {
      r.add(p + "delta_bound", *row.delta_bound);
      ok = ok && row.delta_observed <= *row.delta_bound;
    }
    if (t > 0) ok = ok && row.scaled <= rows[t - 1].scaled + 1e-12;
  }
  r.passed = ok;
  r.note = "deviation grid resolution 2pi/" + std::to_string(res);
  return r;
}

inline CheckResult check_theta_star(const Scenario& sc, const CheckSpec& spec) {
  CheckResult r{"theta-star", false, {}, {}};
  const double tau = spec.get("tau", sc.config.tau);
  const double f0 = f_theta(tau, 0.0);
  const double f8 = f_theta(tau, std::numbers::pi / 8.0);
  const double f4 = f_theta(tau, std::numbers::pi / 4.0);
  r.add("f(0)", f0);
  r.add("f(pi/8)", f8);
  r.add("f(pi/4)", f4);
  const double theta = solve_theta_star(tau);
  r.add("theta_star", theta);
  const double gain =
      protective_defection_gain(tau, theta, as_index(spec.get("samples", 200001), "samples"));
  r.add("max_defection_gain", gain);
  const Scenario four = two_basis_game(0.5, 0.5, 4, tau);
  const auto rep = second_order_test(four.config, four.demand, protective_profile(theta));
  r.add("max_tangent_eigenvalue",
        *std::max_element(rep.max_tangent_eigenvalues.begin(), rep.max_tangent_eigenvalues.end()));
  r.add("classification_violated", rep.classification == LneClass::violated ? 1.0 : 0.0);
  r.passed = std::abs(f4) <= 1e-12 && f0 > 0.0 && f8 < 0.0 && gain <= 1e-9 &&
             rep.classification != LneClass::violated;
  r.note = "second-order classification: " + to_string(rep.classification);
  return r;
}

inline CheckResult check_convexity(const Scenario& sc, const CheckSpec& spec) {
  CheckResult r{"f-convexity", false, {}, {}};
  const double tau = spec.get("tau", sc.config.tau);
  const double worst = f_theta_min_curvature(tau, as_index(spec.get("points", 100), "points"));
  r.add("min_second_difference", worst);
  r.passed = worst > 0.0;
  return r;
}

inline CheckResult check_deviation_gain(const Scenario& sc, const CheckSpec& spec) {
  CheckResult r{"deviation-gain", false, {}, {}};
  const double tau = spec.get("tau", 0.01);
  const GameConfig cfg{sc.config.d, sc.config.n, tau, sc.config.nonneg};
  const Vector cbar = DerivedConsumerStats::compute(sc.demand, cfg.n).require_c_bar();
  const auto imp = epsilon_improvement(cfg, sc.demand, StrategyProfile::repeated(cbar, cfg.n), 0,
                                       as_index(spec.get("resolution", 20000), "resolution"));
  r.add("best_deviation_utility", imp.best_utility);
  r.add("current_utility", imp.current_utility);
  const double target = spec.get("expect", sc.demand.weights().maxCoeff());
  r.add("expected_limit", target);
  r.passed = imp.delta > 0.0 && std::abs(imp.best_utility - target) <= spec.get("tol", 0.02);
  return r;
}

inline CheckResult check_even_split(const Scenario& sc, const CheckSpec& spec) {
  CheckResult r{"high-tau-even-split", false, {}, {}};
  const double tau = spec.get("tau", 1e6);
  const GameConfig cfg{sc.config.d, sc.config.n, tau, sc.config.nonneg};
  std::mt19937_64 rng(static_cast<std::uint64_t>(spec.get("seed", 0)));
  std::normal_distribution<double> normal(0.0, 1.0);
  double worst = 0.0;
  const Index count = as_index(spec.get("profiles", 50), "profiles");
  for (Index t = 0; t < count; ++t) {
    Matrix s(cfg.n, cfg.d);
    for (Index k = 0; k < s.size(); ++k) s.data()[k] = normal(rng);
    const Vector u = utility(cfg, sc.demand, StrategyProfile::from_params(s));
    worst = std::max(worst, (u.array() - 1.0 / static_cast<double>(cfg.n)).abs().maxCoeff());
  }
  r.add("max_deviation", worst);
  r.passed = worst <= spec.get("tol", 1e-5);
  return r;
}

inline CheckResult check_collapse(const Scenario& sc, const CheckSpec& spec) {
  CheckResult r{"collapse", false, {}, {}};
  const double tau = spec.get("tau", 1.0);
  const Index runs = as_index(spec.get("runs", 5), "runs");
  const auto sum = collapse_runs(sc.demand, sc.config.n, tau, spec.get("step", 0.1), runs,
                                 static_cast<long>(spec.get("max_iters", 50000)));
  bool ok = true;
  double far = 0.0;
  for (Index k = 0; k < runs; ++k) {
    ok = ok && sum.cluster_counts[k] == 1;
    far = std::max(far, sum.max_distance_to_cbar[k]);
  }
  r.add("max_distance_to_cbar", far);
  r.add("max_cluster_count",
        static_cast<double>(*std::max_element(sum.cluster_counts.begin(), sum.cluster_counts.end())));
  r.passed = ok && far <= spec.get("tol", 1e-3);
  return r;
}

inline CheckResult check_positioning(const Scenario& sc, const CheckSpec& spec) {
  CheckResult r{"protective-positioning", false, {}, {}};
  const double tau = spec.get("tau", sc.config.tau);
  const GameConfig cfg{sc.config.d, sc.config.n, tau, sc.config.nonneg};
  OptimizerConfig opt;
  opt.step_size = spec.get("step", 0.1);
  opt.seed = static_cast<std::uint64_t>(spec.get("seed", 0));
  const RunRecord rec = run_lne(cfg, sc.demand, opt);
  r.add("iterations", static_cast<double>(rec.iterations));
  r.add("cluster_count", static_cast<double>(cluster_count(rec.profile)));
  for (Index i = 0; i < rec.profile.size(); ++i) {
    for (Index a = 0; a < rec.profile.dim(); ++a) {
      r.add("s" + std::to_string(i) + "_" + std::to_string(a), rec.profile.matrix()(i, a));
    }
  }
  r.passed = rec.converged && rec.second_order.classification != LneClass::violated;
  r.note = "qualitative analogue; classification " + to_string(rec.second_order.classification);
  return r;
}

}  // namespace detail

inline CheckResult run_check(const Scenario& sc, const CheckSpec& spec) {
  const std::string& k = spec.kind;
  if (k == "conservation") return detail::check_conservation(sc, spec);
  if (k == "hardmax-no-pne") return detail::check_no_pne(sc, spec);
  if (k == "mixed-demand-values") return detail::check_mixed_values(sc, spec);
  if (k == "cbar-undefined") return detail::check_cbar_undefined(sc);
  if (k == "cbar") return detail::check_cbar(sc, spec);
  if (k == "lp-value") return detail::check_lp_value(sc, spec);
  if (k == "hitting-set") return detail::check_hitting_set(sc, spec);
  if (k == "critical-point") return detail::check_critical_point(sc, spec);
  if (k == "critical-point-random") return detail::check_critical_point_random(sc, spec);
  if (k == "eps-pne") return detail::check_eps_pne(sc, spec);
  if (k == "theta-star") return detail::check_theta_star(sc, spec);
  if (k == "f-convexity") return detail::check_convexity(sc, spec);
  if (k == "deviation-gain") return detail::check_deviation_gain(sc, spec);
  if (k == "high-tau-even-split") return detail::check_even_split(sc, spec);
  if (k == "collapse") return detail::check_collapse(sc, spec);
  if (k == "protective-positioning") return detail::check_positioning(sc, spec);
  throw std::invalid_argument("unknown check kind: " + k);
}

inline ScenarioReport run_scenario(const Scenario& sc) {
  sc.validate();
  ScenarioReport rep;
  rep.scenario = sc.name;
  for (const auto& spec : sc.checks) {
    try {
      rep.checks.push_back(run_check(sc, spec));
    } catch (const std::domain_error& e) {
      rep.checks.push_back({spec.kind, false, {}, e.what()});
    }
  }
  return rep;
}

/// Built-in scenarios by name. `tau` overrides the default temperature where
/// the scenario has one; `taus` feeds the eps-pne table.
inline Scenario builtin_scenario(const std::string& name, std::optional<double> tau = std::nullopt,
                                 const std::vector<double>& taus = {},
                                 std::optional<Index> resolution = std::nullopt) {
  if (name == "triangle") {
    Scenario s = triangle_game();
    if (resolution) s.checks[0].params["resolution"] = static_cast<double>(*resolution);
    return s;
  }
  if (name == "two-basis") {
    Scenario s = two_basis_game(2.0 / 3.0, 1.0 / 3.0, 2, tau.value_or(10.0));
    s.checks.push_back({"critical-point", {}, {}});
    s.checks.push_back({"deviation-gain", {{"tau", 0.01}, {"expect", 2.0 / 3.0}}, {}});
    return s;
  }
  if (name == "eps-pne") {
    Scenario s = two_basis_game(2.0 / 3.0, 1.0 / 3.0, 2, 1.0);
    s.name = "eps-pne";
    s.checks.push_back(
        {"eps-pne", {{"resolution", static_cast<double>(resolution.value_or(20000))}}, taus});
    return s;
  }
  if (name == "n4-protective") {
    Scenario s = two_basis_game(0.5, 0.5, 4, tau.value_or(0.25));
    s.name = "n4-protective";
    s.checks.push_back({"theta-star", {}, {}});
    s.checks.push_back({"f-convexity", {}, {}});
    return s;
  }
  if (name == "critical-point") {
    Scenario s{"critical-point",
               {3, 5, tau.value_or(0.5), false},
               DemandDistribution(Matrix::Identity(3, 3)),
               {}};
    s.checks.push_back({"critical-point-random", {{"distributions", 20}}, {}});
    return s;
  }
  if (name == "orthant") {
    Scenario s = orthant_basis_game();
    if (resolution) s.checks[0].params["resolution"] = static_cast<double>(*resolution);
    return s;
  }
  if (name == "protective-clusters") {
    Matrix centers(2, 2);
    centers.row(0) = unit_at(0.2).transpose();
    centers.row(1) = unit_at(1.3).transpose();
    const DemandDistribution raw = gaussian_cluster_demand(centers, 60, 0.05, 7);
    Scenario s{"protective-clusters",
               {2, 3, tau.value_or(0.02), true},
               DemandDistribution(raw.points().cwiseAbs()),
               {}};
    s.checks.push_back({"protective-positioning", {{"step", 0.1}, {"seed", 0}}, {}});
    return s;
  }
  throw std::invalid_argument("unknown scenario: " + name);
}

inline std::vector<std::string> builtin_scenario_names() {
  return {"triangle",       "two-basis", "eps-pne",            "n4-protective",
          "critical-point", "orthant",   "protective-clusters"};
}

}  // namespace expogame
