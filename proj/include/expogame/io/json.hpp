#pragma once

// JSON encodings of library results. Keys keep insertion order; doubles are
// written as the shortest text that parses back to the same value, NaN and
// absent optionals as null.

#include "expogame/audit.hpp"
#include "expogame/core.hpp"
#include "expogame/hardmax.hpp"
#include "expogame/lne.hpp"
#include "expogame/mf.hpp"
#include "expogame/scenarios.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace expogame::io {

using json = nlohmann::ordered_json;

inline json to_json(const Vector& v) {
  json a = json::array();
  for (Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

inline json to_json(const Matrix& m) {
  json a = json::array();
  for (Index i = 0; i < m.rows(); ++i) a.push_back(to_json(Vector(m.row(i).transpose())));
  return a;
}

inline json num(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

template <typename T>
json opt(const std::optional<T>& v) {
  if (!v) return nullptr;
  if constexpr (std::is_floating_point_v<T>) {
    return num(*v);
  } else {
    return *v;
  }
}

inline json nums(const std::vector<double>& v) {
  json a = json::array();
  for (double x : v) a.push_back(num(x));
  return a;
}

inline Vector vector_from_json(const json& j) {
  Vector v(static_cast<Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Index>(i)) = j[i].get<double>();
  return v;
}

inline Matrix matrix_from_json(const json& j) {
  if (!j.is_array() || j.empty()) throw std::invalid_argument("matrix must be a non-empty array");
  Matrix m(static_cast<Index>(j.size()), static_cast<Index>(j[0].size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (j[i].size() != j[0].size()) throw std::invalid_argument("ragged matrix");
    for (std::size_t a = 0; a < j[i].size(); ++a) {
      m(static_cast<Index>(i), static_cast<Index>(a)) = j[i][a].get<double>();
    }
  }
  return m;
}

inline json to_json(const GameConfig& c) {
  return {{"d", c.d}, {"n", c.n}, {"tau", c.tau}, {"nonneg", c.nonneg}};
}

inline GameConfig game_config_from_json(const json& j) {
  return {j.at("d").get<Index>(), j.at("n").get<Index>(), j.at("tau").get<double>(),
          j.at("nonneg").get<bool>()};
}

inline json to_json(const OptimizerConfig& o, Index d) {
  return {{"step_size", o.step_size},
          {"max_iters", o.max_iters},
          {"convergence_tol", o.tolerance(d)},
          {"scale_step_by_tau", o.scale_step_by_tau}};
}

inline json to_json(const SecondOrderReport& r) {
  return {{"gradient_norms", nums(r.gradient_norms)},
          {"max_tangent_eigenvalues", nums(r.max_tangent_eigenvalues)},
          {"gradient_threshold", r.gradient_threshold},
          {"classification", to_string(r.classification)}};
}

/// Identity of one solve cell.
struct RecordMeta {
  std::string run_id;
  std::string source;
  std::uint64_t recommender_seed = 0;
  std::uint64_t optimizer_seed = 0;
  GameConfig config;
  OptimizerConfig optimizer;
};

inline json record_json(const RecordMeta& meta, const RunRecord& r, Index clusters) {
  return {{"run_id", meta.run_id},
          {"source", meta.source},
          {"recommender_seed", meta.recommender_seed},
          {"optimizer_seed", meta.optimizer_seed},
          {"config", to_json(meta.config)},
          {"optimizer", to_json(meta.optimizer, meta.config.d)},
          {"iterations", r.iterations},
          {"converged", r.converged},
          {"last_change", r.last_change},
          {"profile", to_json(r.profile.matrix())},
          {"utilities", to_json(r.utilities)},
          {"second_order", to_json(r.second_order)},
          {"cluster_count", clusters}};
}

/// The parts of a stored record that audits consume.
struct StoredRecord {
  std::string run_id;
  std::string source;
  std::uint64_t recommender_seed = 0;
  std::uint64_t optimizer_seed = 0;
  GameConfig config;
  std::string classification;
  bool converged = false;
  StrategyProfile profile;
};

inline StoredRecord stored_record_from_json(const json& j) {
  StoredRecord r;
  r.run_id = j.at("run_id").get<std::string>();
  r.source = j.at("source").get<std::string>();
  r.recommender_seed = j.at("recommender_seed").get<std::uint64_t>();
  r.optimizer_seed = j.at("optimizer_seed").get<std::uint64_t>();
  r.config = game_config_from_json(j.at("config"));
  r.classification = j.at("second_order").at("classification").get<std::string>();
  r.converged = j.at("converged").get<bool>();
  r.profile = StrategyProfile(matrix_from_json(j.at("profile")));
  return r;
}

inline json to_json(const MixedStrategy& m) {
  return {{"support", to_json(m.support())}, {"probs", to_json(m.probs())}};
}

inline json to_json(const TrainReport& r) {
  return {{"train_rmse", r.train_rmse},
          {"holdout_rmse", opt(r.holdout_rmse)},
          {"objective", nums(r.objective)}};
}

inline json to_json(const ScenarioReport& r) {
  json checks = json::array();
  for (const auto& c : r.checks) {
    json values = json::object();
    for (const auto& [k, v] : c.values) values[k] = num(v);
    checks.push_back({{"name", c.name}, {"passed", c.passed}, {"values", values}, {"note", c.note}});
  }
  return {{"scenario", r.scenario}, {"passed", r.passed()}, {"checks", checks}};
}

inline json to_json(const NeighborhoodPoint& p) {
  return {{"k", p.k},
          {"proportion_gap", num(p.proportion_gap)},
          {"distance_gap", num(p.distance_gap)},
          {"item_proportion_gaps", nums(p.item_proportion_gaps)},
          {"item_distance_gaps", nums(p.item_distance_gaps)}};
}

inline json to_json(const RunAudit& a) {
  json nb = json::array();
  for (const auto& p : a.neighborhood) nb.push_back(to_json(p));
  json gm = nullptr;
  if (a.group_maxima) gm = {{"a", nums(a.group_maxima->a)}, {"b", nums(a.group_maxima->b)}};
  return {{"run_id", a.run_id},
          {"recommender_seed", a.recommender_seed},
          {"optimizer_seed", a.optimizer_seed},
          {"tau", a.tau},
          {"n", a.n},
          {"classification", a.classification},
          {"cluster_count", a.cluster_count},
          {"max_rating_gap", opt(a.max_rating_gap)},
          {"proportion_gap", opt(a.proportion_gap)},
          {"neighborhood", nb},
          {"group_maxima", gm}};
}

inline json to_json(const AuditAggregate& a) {
  json np = json::array();
  for (const auto& [k, v] : a.neighborhood_proportion_gap) np.push_back({{"k", k}, {"value", num(v)}});
  json nd = json::array();
  for (const auto& [k, v] : a.neighborhood_distance_gap) nd.push_back({{"k", k}, {"value", num(v)}});
  return {{"runs", a.runs},
          {"mean_cluster_count", a.mean_cluster_count},
          {"min_cluster_count", a.min_cluster_count},
          {"max_cluster_count", a.max_cluster_count},
          {"max_rating_gap_per_run_median", opt(a.max_rating_gap_per_run_median)},
          {"max_rating_gap_pooled", opt(a.max_rating_gap_pooled)},
          {"proportion_gap_mean", opt(a.proportion_gap_mean)},
          {"neighborhood_proportion_gap", np},
          {"neighborhood_distance_gap", nd}};
}

inline json to_json(const AuditReport& r) {
  json runs = json::array();
  for (const auto& a : r.runs) runs.push_back(to_json(a));
  return {{"runs", runs},
          {"baseline", r.baseline ? to_json(*r.baseline) : json(nullptr)},
          {"aggregate", {{"all", to_json(r.all)}, {"confirmed_only", to_json(r.confirmed_only)}}},
          {"provenance",
           {{"config", r.provenance.config},
            {"recommender_seeds", r.provenance.recommender_seeds},
            {"optimizer_seeds", r.provenance.optimizer_seeds},
            {"run_ids", r.provenance.run_ids}}}};
}

namespace detail {

inline void require(bool ok, const std::string& where, std::vector<std::string>& errs) {
  if (!ok) errs.push_back(where);
}

inline bool num_or_null(const json& j) { return j.is_number() || j.is_null(); }

inline void check_run_audit(const json& a, const std::string& where,
                            std::vector<std::string>& errs) {
  if (!a.is_object()) {
    errs.push_back(where + " is not an object");
    return;
  }
  require(a.contains("run_id") && a["run_id"].is_string(), where + ".run_id", errs);
  for (const char* k : {"recommender_seed", "optimizer_seed", "n", "cluster_count"}) {
    require(a.contains(k) && a[k].is_number_integer(), where + "." + k, errs);
  }
  require(a.contains("tau") && a["tau"].is_number(), where + ".tau", errs);
  require(a.contains("classification") && a["classification"].is_string(),
          where + ".classification", errs);
  for (const char* k : {"max_rating_gap", "proportion_gap"}) {
    require(a.contains(k) && num_or_null(a[k]), where + "." + k, errs);
  }
  require(a.contains("neighborhood") && a["neighborhood"].is_array(), where + ".neighborhood",
          errs);
  if (a.contains("neighborhood") && a["neighborhood"].is_array()) {
    for (const auto& p : a["neighborhood"]) {
      require(p.contains("k") && p["k"].is_number_integer() && p.contains("proportion_gap") &&
                  num_or_null(p["proportion_gap"]) && p.contains("distance_gap") &&
                  num_or_null(p["distance_gap"]),
              where + ".neighborhood[]", errs);
    }
  }
}

inline void check_aggregate(const json& a, const std::string& where,
                            std::vector<std::string>& errs) {
  if (!a.is_object()) {
    errs.push_back(where + " is not an object");
    return;
  }
  for (const char* k : {"runs", "min_cluster_count", "max_cluster_count"}) {
    require(a.contains(k) && a[k].is_number_integer(), where + "." + k, errs);
  }
  require(a.contains("mean_cluster_count") && a["mean_cluster_count"].is_number(),
          where + ".mean_cluster_count", errs);
  for (const char* k :
       {"max_rating_gap_per_run_median", "max_rating_gap_pooled", "proportion_gap_mean"}) {
    require(a.contains(k) && num_or_null(a[k]), where + "." + k, errs);
  }
  for (const char* k : {"neighborhood_proportion_gap", "neighborhood_distance_gap"}) {
    require(a.contains(k) && a[k].is_array(), where + "." + k, errs);
  }
}

}  // namespace detail

/// Structural check of a serialized AuditReport. Returns the offending paths,
/// empty when the document is well formed.
inline std::vector<std::string> validate_audit_report(const json& j) {
  std::vector<std::string> errs;
  if (!j.is_object()) return {"document is not an object"};
  if (!j.contains("runs") || !j["runs"].is_array()) {
    errs.emplace_back("runs");
  } else {
    for (std::size_t i = 0; i < j["runs"].size(); ++i) {
      detail::check_run_audit(j["runs"][i], "runs[" + std::to_string(i) + "]", errs);
    }
  }
  if (!j.contains("baseline")) {
    errs.emplace_back("baseline");
  } else if (!j["baseline"].is_null()) {
    detail::check_run_audit(j["baseline"], "baseline", errs);
  }
  if (!j.contains("aggregate") || !j["aggregate"].is_object()) {
    errs.emplace_back("aggregate");
  } else {
    for (const char* k : {"all", "confirmed_only"}) {
      if (!j["aggregate"].contains(k)) {
        errs.emplace_back(std::string("aggregate.") + k);
      } else {
        detail::check_aggregate(j["aggregate"][k], std::string("aggregate.") + k, errs);
      }
    }
  }
  if (!j.contains("provenance") || !j["provenance"].is_object()) {
    errs.emplace_back("provenance");
  } else {
    const auto& p = j["provenance"];
    detail::require(p.contains("config") && p["config"].is_string(), "provenance.config", errs);
    for (const char* k : {"recommender_seeds", "optimizer_seeds", "run_ids"}) {
      detail::require(p.contains(k) && p[k].is_array(), std::string("provenance.") + k, errs);
    }
  }
  return errs;
}

inline std::string dump(const json& j) { return j.dump(2) + "\n"; }

}  // namespace expogame::io
