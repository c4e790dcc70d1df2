#pragma once

// Scenario files. YAML mappings:
//
//   name: two-consumers
//   game: {d: 2, n: 2, tau: 0.5, nonneg: true}
//   demand:
//     points: [[1, 0], [0, 1]]
//     weights: [0.5, 0.5]        # optional, uniform by default
//     # or  file: users.csv      # embedding CSV, relative to this file
//     # or  builtin: triangle    # demand of a built-in scenario
//   checks:
//     - kind: conservation
//     - kind: eps-pne
//       resolution: 20000
//       taus: [1, 2, 4]
//
// Every check key other than `kind` and `taus` is a number.

#include "expogame/core.hpp"
#include "expogame/io/csv.hpp"
#include "expogame/scenarios.hpp"

#include <yaml-cpp/yaml.h>

#include <filesystem>
#include <stdexcept>
#include <string>

namespace expogame::io {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

inline std::string where(const YAML::Node& n, const std::string& file) {
  const auto m = n.Mark();
  return file + ":" + std::to_string(m.line + 1);
}

template <typename T>
T scalar(const YAML::Node& n, const std::string& key, const std::string& file) {
  try {
    return n.as<T>();
  } catch (const YAML::Exception&) {
    throw ConfigError(where(n, file) + ": bad value for '" + key + "'");
  }
}

inline Matrix matrix_node(const YAML::Node& n, const std::string& key, const std::string& file) {
  if (!n.IsSequence() || n.size() == 0) {
    throw ConfigError(where(n, file) + ": '" + key + "' must be a non-empty list of rows");
  }
  const std::size_t cols = n[0].size();
  Matrix m(static_cast<Index>(n.size()), static_cast<Index>(cols));
  for (std::size_t i = 0; i < n.size(); ++i) {
    if (!n[i].IsSequence() || n[i].size() != cols) {
      throw ConfigError(where(n[i], file) + ": row " + std::to_string(i) + " of '" + key +
                        "' has the wrong length");
    }
    for (std::size_t a = 0; a < cols; ++a) {
      m(static_cast<Index>(i), static_cast<Index>(a)) = scalar<double>(n[i][a], key, file);
    }
  }
  return m;
}

inline std::vector<double> list_node(const YAML::Node& n, const std::string& key,
                                     const std::string& file) {
  if (!n.IsSequence()) throw ConfigError(where(n, file) + ": '" + key + "' must be a list");
  std::vector<double> out;
  for (const auto& v : n) out.push_back(scalar<double>(v, key, file));
  return out;
}

}  // namespace detail

/// Parses scenario text; `base` resolves relative demand files.
inline Scenario parse_scenario(const std::string& text, const std::string& file = "scenario",
                               const std::filesystem::path& base = {}) {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::ParserException& e) {
    throw ConfigError(file + ":" + std::to_string(e.mark.line + 1) + ": " + e.msg);
  }
  if (!root.IsMap()) throw ConfigError(file + ": top level must be a mapping");
  for (const auto& kv : root) {
    const auto k = kv.first.as<std::string>();
    if (k != "name" && k != "game" && k != "demand" && k != "checks") {
      throw ConfigError(detail::where(kv.first, file) + ": unknown key '" + k + "'");
    }
  }
  Scenario sc;
  sc.name = root["name"] ? detail::scalar<std::string>(root["name"], "name", file) : "custom";

  const YAML::Node dem = root["demand"];
  if (!dem || !dem.IsMap()) throw ConfigError(file + ": missing 'demand' table");
  if (dem["builtin"]) {
    sc.demand = builtin_scenario(detail::scalar<std::string>(dem["builtin"], "builtin", file)).demand;
  } else if (dem["file"]) {
    auto p = std::filesystem::path(detail::scalar<std::string>(dem["file"], "file", file));
    if (p.is_relative()) p = base / p;
    sc.demand = DemandDistribution(read_embeddings_csv(p).points);
  } else if (dem["points"]) {
    const Matrix pts = detail::matrix_node(dem["points"], "points", file);
    if (dem["weights"]) {
      const auto w = detail::list_node(dem["weights"], "weights", file);
      sc.demand = DemandDistribution(pts, Eigen::Map<const Vector>(w.data(), static_cast<Index>(w.size())));
    } else {
      sc.demand = DemandDistribution(pts);
    }
  } else {
    throw ConfigError(detail::where(dem, file) + ": demand needs 'points', 'file' or 'builtin'");
  }

  const YAML::Node game = root["game"];
  if (!game || !game.IsMap()) throw ConfigError(file + ": missing 'game' table");
  sc.config.d = game["d"] ? detail::scalar<Index>(game["d"], "d", file) : sc.demand.dim();
  sc.config.n = game["n"] ? detail::scalar<Index>(game["n"], "n", file) : 2;
  sc.config.tau = game["tau"] ? detail::scalar<double>(game["tau"], "tau", file) : 1.0;
  sc.config.nonneg = game["nonneg"] ? detail::scalar<bool>(game["nonneg"], "nonneg", file) : false;

  const YAML::Node checks = root["checks"];
  if (checks) {
    if (!checks.IsSequence()) throw ConfigError(detail::where(checks, file) + ": 'checks' must be a list");
    for (const auto& c : checks) {
      if (!c.IsMap() || !c["kind"]) {
        throw ConfigError(detail::where(c, file) + ": every check needs a 'kind'");
      }
      CheckSpec spec;
      for (const auto& kv : c) {
        const auto key = kv.first.as<std::string>();
        if (key == "kind") {
          spec.kind = detail::scalar<std::string>(kv.second, key, file);
        } else if (key == "taus") {
          spec.taus = detail::list_node(kv.second, key, file);
        } else {
          spec.params[key] = detail::scalar<double>(kv.second, key, file);
        }
      }
      sc.checks.push_back(std::move(spec));
    }
  }
  try {
    sc.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(file + ": " + e.what());
  }
  return sc;
}

inline Scenario load_scenario(const std::filesystem::path& path) {
  return parse_scenario(read_file(path), path.string(), path.parent_path());
}

}  // namespace expogame::io
