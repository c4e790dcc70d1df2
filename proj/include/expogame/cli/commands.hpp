#pragma once

// Command implementations behind the expogame executable. Each command takes
// a JSON option snapshot and an output directory, so a manifest written by
// one run can drive an identical rerun.

#include "expogame/audit.hpp"
#include "expogame/core.hpp"
#include "expogame/hardmax.hpp"
#include "expogame/io/config.hpp"
#include "expogame/io/csv.hpp"
#include "expogame/io/files.hpp"
#include "expogame/io/json.hpp"
#include "expogame/lne.hpp"
#include "expogame/mf.hpp"
#include "expogame/scenarios.hpp"
#include "expogame/sphere.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdlib>
#include <ctime>
#include <exception>
#include <filesystem>
#include <iomanip>
#include <map>
#include <mutex>
#include <optional>
#include <ostream>
#include <random>
#include <regex>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#ifndef EXPOGAME_VERSION
#define EXPOGAME_VERSION "0.1.0"
#endif

namespace expogame::cli {

namespace fs = std::filesystem;
using io::json;

inline const char* version() { return EXPOGAME_VERSION; }

/// Bad flags or option combinations.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Worker-pool size from EXPOGAME_WORKERS, else the hardware thread count.
inline std::size_t worker_count() {
  if (const char* env = std::getenv("EXPOGAME_WORKERS"); env && *env) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (*end != '\0' || v < 1) {
      throw UsageError(std::string("EXPOGAME_WORKERS must be a positive integer, got '") + env +
                       "'");
    }
    return static_cast<std::size_t>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

/// Runs fn(0..count-1) on up to `workers` threads. The first exception is
/// rethrown after all threads stop.
template <typename Fn>
void parallel_for(std::size_t count, std::size_t workers, Fn&& fn) {
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr error;
  std::mutex mu;
  auto body = [&] {
    while (!failed) {
      const std::size_t i = next++;
      if (i >= count) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(mu);
        if (!error) error = std::current_exception();
        failed = true;
      }
    }
  };
  const std::size_t n = std::min(workers, count);
  if (n <= 1) {
    body();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < n; ++t) pool.emplace_back(body);
    for (auto& th : pool) th.join();
  }
  if (error) std::rethrow_exception(error);
}

/// State shared by a command and its manifest.
struct RunContext {
  fs::path out;
  std::ostream* log = nullptr;
  std::vector<std::pair<std::string, std::string>> inputs;  // (path, sha256)
  json seeds = json::object();
  /// Options after defaults are filled in; replaces the raw snapshot when set.
  json resolved;
  int exit_code = 0;

  void add_input(const fs::path& p) {
    const std::string abs = fs::absolute(p).lexically_normal().string();
    for (const auto& [path, digest] : inputs) {
      if (path == abs) return;
    }
    inputs.emplace_back(abs, io::sha256_file(p));
  }

  std::ostream& say() const {
    static std::ostringstream sink;
    return log ? *log : sink;
  }
};

namespace detail {

inline std::string utc_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream s;
  s << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return s.str();
}

inline std::string label(double v) {
  std::ostringstream s;
  s << v;
  return s.str();
}

inline fs::path absolute(const fs::path& p) { return fs::absolute(p).lexically_normal(); }

template <typename T>
std::vector<T> list_or(const json& j, const char* key, std::vector<T> fallback) {
  if (!j.contains(key) || j[key].is_null()) return fallback;
  return j[key].get<std::vector<T>>();
}

template <typename T>
std::optional<T> optional_of(const json& j, const char* key) {
  if (!j.contains(key) || j[key].is_null()) return std::nullopt;
  return j[key].get<T>();
}

template <typename T>
json json_of(const std::optional<T>& v) {
  return v ? json(*v) : json(nullptr);
}

inline Matrix normalized_rows(const Matrix& m) {
  Matrix out = m;
  for (Index i = 0; i < m.rows(); ++i) {
    const double nrm = m.row(i).norm();
    if (!(nrm > 0.0)) {
      throw std::invalid_argument("embedding row " + std::to_string(i) + " has zero norm");
    }
    out.row(i) /= nrm;
  }
  return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// synth: seeded synthetic ratings

struct SynthOptions {
  Index users = 300;
  Index items = 200;
  Index d = 3;
  double density = 0.2;
  double noise = 0.5;
  std::uint64_t seed = 0;
  /// Dense r = 3 + a_u b_v with zero-mean b and no group columns.
  bool rank1 = false;

  json to_json() const {
    return {{"users", users}, {"items", items}, {"d", d},         {"density", density},
            {"noise", noise}, {"seed", seed},   {"rank1", rank1}};
  }
  static SynthOptions from_json(const json& j) {
    SynthOptions o;
    o.users = j.value("users", o.users);
    o.items = j.value("items", o.items);
    o.d = j.value("d", o.d);
    o.density = j.value("density", o.density);
    o.noise = j.value("noise", o.noise);
    o.seed = j.value("seed", o.seed);
    o.rank1 = j.value("rank1", o.rank1);
    return o;
  }
};

/// Star ratings from a two-group latent model: users are M with probability
/// 0.7, creators M with probability 0.6, and each group has its own latent mean.
inline RatingsDataset synth_ratings(const SynthOptions& o) {
  if (o.users < 1 || o.items < 1 || o.d < 1) throw UsageError("synth needs users, items, d >= 1");
  if (!(o.density > 0.0 && o.density <= 1.0)) throw UsageError("density must be in (0, 1]");
  std::mt19937_64 rng(o.seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<Rating> rs;
  if (o.rank1) {
    Vector a(o.users);
    Vector b(o.items);
    for (Index u = 0; u < o.users; ++u) a(u) = 0.5 + unif(rng);
    for (Index v = 0; v < o.items; ++v) b(v) = 0.5 + unif(rng);
    b.array() -= b.mean();
    for (Index u = 0; u < o.users; ++u) {
      for (Index v = 0; v < o.items; ++v) rs.push_back({u, v, 3.0 + a(u) * b(v)});
    }
    return RatingsDataset::from_triples(o.users, o.items, std::move(rs));
  }
  Matrix means(2, o.d);
  for (Index g = 0; g < 2; ++g) {
    for (Index a = 0; a < o.d; ++a) means(g, a) = normal(rng);
  }
  RatingsDataset data = RatingsDataset::from_triples(o.users, o.items, {});
  Matrix uf(o.users, o.d);
  Matrix vf(o.items, o.d);
  for (Index u = 0; u < o.users; ++u) {
    const bool m = unif(rng) < 0.7;
    data.user_groups.push_back(m ? "M" : "F");
    for (Index a = 0; a < o.d; ++a) uf(u, a) = means(m ? 0 : 1, a) + 0.5 * normal(rng);
  }
  for (Index v = 0; v < o.items; ++v) {
    const bool m = unif(rng) < 0.6;
    data.item_groups.push_back(m ? "M" : "F");
    for (Index a = 0; a < o.d; ++a) vf(v, a) = means(m ? 0 : 1, a) + 0.5 * normal(rng);
  }
  const double scale = 1.0 / static_cast<double>(o.d);
  for (Index u = 0; u < o.users; ++u) {
    for (Index v = 0; v < o.items; ++v) {
      if (unif(rng) >= o.density) continue;
      const double raw = 3.0 + scale * uf.row(u).dot(vf.row(v)) + o.noise * normal(rng);
      rs.push_back({u, v, std::clamp(std::round(raw), 1.0, 5.0)});
    }
  }
  if (rs.empty()) throw UsageError("density too low: no ratings generated");
  data.ratings = std::move(rs);
  return data;
}

inline void run_synth(const json& cfg, RunContext& ctx) {
  const auto o = SynthOptions::from_json(cfg);
  const auto data = synth_ratings(o);
  io::write_file_atomic(ctx.out / "ratings.csv", io::ratings_csv(data));
  ctx.seeds["synth"] = o.seed;
  ctx.say() << "wrote " << data.ratings.size() << " ratings for " << data.users() << " users and "
            << data.items() << " items to " << (ctx.out / "ratings.csv").string() << "\n";
}

// ---------------------------------------------------------------------------
// train

struct TrainOptions {
  fs::path ratings;
  std::string variant = "pmf";
  Index d = 3;
  double reg = 0.02;
  double lr = 0.01;
  int epochs = 100;
  std::uint64_t seed = 0;
  int seeds = 1;
  bool biases = false;
  double holdout = 0.0;

  json to_json() const {
    return {{"ratings", detail::absolute(ratings).string()},
            {"variant", variant},
            {"d", d},
            {"reg", reg},
            {"lr", lr},
            {"epochs", epochs},
            {"seed", seed},
            {"seeds", seeds},
            {"biases", biases},
            {"holdout", holdout}};
  }
  static TrainOptions from_json(const json& j) {
    TrainOptions o;
    o.ratings = j.at("ratings").get<std::string>();
    o.variant = j.value("variant", o.variant);
    o.d = j.value("d", o.d);
    o.reg = j.value("reg", o.reg);
    o.lr = j.value("lr", o.lr);
    o.epochs = j.value("epochs", o.epochs);
    o.seed = j.value("seed", o.seed);
    o.seeds = j.value("seeds", o.seeds);
    o.biases = j.value("biases", o.biases);
    o.holdout = j.value("holdout", o.holdout);
    return o;
  }
};

inline std::string rec_dir(std::uint64_t seed) { return "rec-" + std::to_string(seed); }

inline void run_train(const json& cfg, RunContext& ctx) {
  const auto o = TrainOptions::from_json(cfg);
  const MfVariant variant = mf_variant_from_string(o.variant);
  if (o.seeds < 1) throw UsageError("--seeds must be >= 1");
  ctx.add_input(o.ratings);
  std::vector<std::size_t> lines;
  const RatingsDataset data = io::read_ratings_csv(o.ratings, &lines);
  data.validate();
  if (variant == MfVariant::nmf) {
    for (std::size_t k = 0; k < data.ratings.size(); ++k) {
      const auto& r = data.ratings[k];
      if (r.value < 0.0) {
        throw io::ParseError(o.ratings.string(), lines[k],
                             "negative rating " + io::format_double(r.value) + " (user " +
                                 data.user_ids[static_cast<std::size_t>(r.user)] + ", item " +
                                 data.item_ids[static_cast<std::size_t>(r.item)] +
                                 "); nmf needs non-negative ratings");
      }
    }
  }

  const auto count = static_cast<std::size_t>(o.seeds);
  std::vector<TrainResult> results(count);
  parallel_for(count, worker_count(), [&](std::size_t k) {
    MfOptions mo;
    mo.d = o.d;
    mo.reg = o.reg;
    mo.lr = o.lr;
    mo.epochs = o.epochs;
    mo.seed = o.seed + k;
    mo.biases = o.biases;
    mo.holdout_fraction = o.holdout;
    results[k] = train(data, variant, mo);
  });

  json per_seed = json::array();
  json seeds = json::array();
  for (std::size_t k = 0; k < count; ++k) {
    const std::uint64_t s = o.seed + k;
    const auto& r = results[k];
    const fs::path dir = ctx.out / rec_dir(s);
    io::write_file_atomic(dir / "users.csv",
                          io::embeddings_csv({data.user_ids, r.model.users, data.user_groups}));
    io::write_file_atomic(dir / "items.csv",
                          io::embeddings_csv({data.item_ids, r.model.items, data.item_groups}));
    json entry = io::to_json(r.report);
    entry["seed"] = s;
    entry["mu"] = r.model.mu;
    entry["users_nonneg"] = (r.model.users.array() >= 0.0).all();
    per_seed.push_back(entry);
    seeds.push_back(s);
    ctx.say() << rec_dir(s) << ": train RMSE " << io::format_double(r.report.train_rmse);
    if (r.report.holdout_rmse) ctx.say() << ", holdout RMSE " << io::format_double(*r.report.holdout_rmse);
    ctx.say() << "\n";
  }
  const json metrics = {{"variant", o.variant},
                        {"d", o.d},
                        {"users", data.users()},
                        {"items", data.items()},
                        {"ratings", data.ratings.size()},
                        {"user_groups", !data.user_groups.empty()},
                        {"item_groups", !data.item_groups.empty()},
                        {"runs", per_seed}};
  io::write_file_atomic(ctx.out / "metrics.json", io::dump(metrics));
  ctx.seeds["recommender"] = seeds;
}

// ---------------------------------------------------------------------------
// solve

struct SolveOptions {
  std::optional<fs::path> embeddings;  // train output directory
  std::optional<fs::path> users;       // single embedding CSV
  std::optional<std::string> scenario;  // built-in name or scenario file
  std::vector<Index> n;
  std::vector<double> tau;
  std::vector<double> step;
  Index runs = 10;
  Index seeds = 1;
  long max_iters = 50000;
  bool scale_step = false;
  bool confirmed_only = false;
  bool standard_grid = false;

  json to_json() const {
    auto path = [](const std::optional<fs::path>& p) {
      return p ? json(detail::absolute(*p).string()) : json(nullptr);
    };
    return {{"embeddings", path(embeddings)},
            {"users", path(users)},
            {"scenario", detail::json_of(scenario)},
            {"n", n},
            {"tau", tau},
            {"step", step},
            {"runs", runs},
            {"seeds", seeds},
            {"max_iters", max_iters},
            {"scale_step", scale_step},
            {"confirmed_only", confirmed_only},
            {"standard_grid", standard_grid}};
  }
  static SolveOptions from_json(const json& j) {
    SolveOptions o;
    if (auto p = detail::optional_of<std::string>(j, "embeddings")) o.embeddings = *p;
    if (auto p = detail::optional_of<std::string>(j, "users")) o.users = *p;
    o.scenario = detail::optional_of<std::string>(j, "scenario");
    o.n = detail::list_or<Index>(j, "n", {});
    o.tau = detail::list_or<double>(j, "tau", {});
    o.step = detail::list_or<double>(j, "step", {});
    o.runs = j.value("runs", o.runs);
    o.seeds = j.value("seeds", o.seeds);
    o.max_iters = j.value("max_iters", o.max_iters);
    o.scale_step = j.value("scale_step", o.scale_step);
    o.confirmed_only = j.value("confirmed_only", o.confirmed_only);
    o.standard_grid = j.value("standard_grid", o.standard_grid);
    return o;
  }
};

/// Sweep defaults: n in {10, 100}, tau in {0.01, 0.1, 1}, step in {0.01, 0.1}.
/// The embedding dimension comes from the trained model (train with --d 3 and --d 50).
inline void apply_standard_grid(SolveOptions& o) {
  if (o.n.empty()) o.n = {10, 100};
  if (o.tau.empty()) o.tau = {0.01, 0.1, 1.0};
  if (o.step.empty()) o.step = {0.01, 0.1};
}

namespace detail {

struct DemandSource {
  std::string label;
  std::uint64_t recommender_seed = 0;
  LabeledDemand demand;
  std::optional<GameConfig> defaults;
};

inline bool looks_like_file(const std::string& s) {
  return s.find('/') != std::string::npos || s.ends_with(".yaml") || s.ends_with(".yml") ||
         fs::exists(s);
}

inline Scenario resolve_scenario(const std::string& s, RunContext& ctx,
                                 std::optional<double> tau = std::nullopt,
                                 const std::vector<double>& taus = {},
                                 std::optional<Index> resolution = std::nullopt) {
  if (!looks_like_file(s)) return builtin_scenario(s, tau, taus, resolution);
  ctx.add_input(s);
  Scenario sc = io::load_scenario(s);
  if (tau) sc.config.tau = *tau;
  for (auto& c : sc.checks) {
    if (c.kind == "eps-pne" && c.taus.empty()) c.taus = taus;
    if (c.kind == "hardmax-no-pne" && resolution) c.params["resolution"] = static_cast<double>(*resolution);
  }
  sc.validate();
  return sc;
}

/// rec-<seed> subdirectories of a train output, ordered by seed.
inline std::vector<std::pair<std::uint64_t, fs::path>> rec_dirs(const fs::path& root) {
  if (!fs::is_directory(root)) throw UsageError("not a directory: " + root.string());
  static const std::regex pat("rec-([0-9]+)");
  std::vector<std::pair<std::uint64_t, fs::path>> out;
  for (const auto& e : fs::directory_iterator(root)) {
    std::smatch m;
    const std::string name = e.path().filename().string();
    if (e.is_directory() && std::regex_match(name, m, pat) && fs::exists(e.path() / "users.csv")) {
      out.emplace_back(std::stoull(m[1].str()), e.path());
    }
  }
  std::sort(out.begin(), out.end());
  if (out.empty()) throw UsageError("no rec-<seed>/users.csv under " + root.string());
  return out;
}

inline std::vector<DemandSource> solve_sources(const SolveOptions& o, RunContext& ctx) {
  const int given = int(o.embeddings.has_value()) + int(o.users.has_value()) +
                    int(o.scenario.has_value());
  if (given != 1) throw UsageError("solve needs exactly one of --embeddings, --users, --scenario");
  if (o.seeds < 1) throw UsageError("--seeds must be >= 1");
  std::vector<DemandSource> out;
  if (o.embeddings) {
    const auto dirs = rec_dirs(*o.embeddings);
    if (static_cast<Index>(dirs.size()) < o.seeds) {
      throw UsageError("--seeds " + std::to_string(o.seeds) + " but only " +
                       std::to_string(dirs.size()) + " trained recommender seeds in " +
                       o.embeddings->string());
    }
    for (Index s = 0; s < o.seeds; ++s) {
      const auto& [seed, dir] = dirs[static_cast<std::size_t>(s)];
      ctx.add_input(dir / "users.csv");
      const auto t = io::read_embeddings_csv(dir / "users.csv");
      out.push_back({dir.filename().string(), seed, build_demand(t.points, t.ids, t.groups), {}});
    }
    return out;
  }
  if (o.seeds != 1) throw UsageError("--seeds > 1 needs --embeddings with several trained seeds");
  if (o.users) {
    ctx.add_input(*o.users);
    const auto t = io::read_embeddings_csv(*o.users);
    out.push_back({"users", 0, build_demand(t.points, t.ids, t.groups), {}});
    return out;
  }
  const Scenario sc = resolve_scenario(*o.scenario, ctx);
  LabeledDemand ld{sc.demand, sc.config.nonneg, {}, {}};
  out.push_back({"scenario-" + sc.name, 0, ld, sc.config});
  return out;
}

}  // namespace detail

inline SolveOptions resolve_solve(SolveOptions o, const std::optional<GameConfig>& defaults) {
  if (o.standard_grid) apply_standard_grid(o);
  if (o.n.empty()) o.n = {defaults ? defaults->n : 10};
  if (o.tau.empty()) o.tau = {defaults && defaults->tau > 0.0 ? defaults->tau : 1.0};
  if (o.step.empty()) o.step = {0.1};
  for (Index v : o.n) {
    if (v < 1) throw UsageError("invalid grid value: n = " + std::to_string(v) + " (need n >= 1)");
  }
  for (double v : o.tau) {
    if (!(v > 0.0) || !std::isfinite(v)) {
      throw UsageError("invalid grid value: tau = " + detail::label(v) + " (need tau > 0)");
    }
  }
  for (double v : o.step) {
    if (!(v > 0.0) || !std::isfinite(v)) {
      throw UsageError("invalid grid value: step = " + detail::label(v) + " (need step > 0)");
    }
  }
  if (o.runs < 1) throw UsageError("invalid grid value: --runs must be >= 1");
  if (o.max_iters < 1) throw UsageError("--max-iters must be >= 1");
  return o;
}

inline std::string run_id(const std::string& source, Index n, double tau, double step,
                          std::uint64_t opt_seed) {
  return source + "_n" + std::to_string(n) + "_tau" + detail::label(tau) + "_step" +
         detail::label(step) + "_opt" + std::to_string(opt_seed);
}

inline void run_solve(const json& cfg, RunContext& ctx) {
  SolveOptions o = SolveOptions::from_json(cfg);
  const auto sources = detail::solve_sources(o, ctx);
  o = resolve_solve(o, sources.front().defaults);
  ctx.resolved = o.to_json();

  struct Cell {
    std::size_t source;
    Index n;
    double tau;
    double step;
    std::uint64_t opt_seed;
  };
  std::vector<Cell> cells;
  for (std::size_t s = 0; s < sources.size(); ++s) {
    for (Index n : o.n) {
      for (double tau : o.tau) {
        for (double step : o.step) {
          for (Index r = 0; r < o.runs; ++r) {
            cells.push_back({s, n, tau, step, static_cast<std::uint64_t>(r)});
          }
        }
      }
    }
  }
  ctx.say() << "solving " << cells.size() << " cells\n";

  std::vector<json> summary(cells.size());
  parallel_for(cells.size(), worker_count(), [&](std::size_t k) {
    const Cell& c = cells[k];
    const auto& src = sources[c.source];
    io::RecordMeta meta;
    meta.source = src.label;
    meta.recommender_seed = src.recommender_seed;
    meta.optimizer_seed = c.opt_seed;
    meta.config = {src.demand.demand.dim(), c.n, c.tau, src.demand.nonneg};
    meta.optimizer.step_size = c.step;
    meta.optimizer.max_iters = o.max_iters;
    meta.optimizer.seed = c.opt_seed;
    meta.optimizer.scale_step_by_tau = o.scale_step;
    meta.run_id = run_id(src.label, c.n, c.tau, c.step, c.opt_seed);
    const RunRecord rec = run_lne(meta.config, src.demand.demand, meta.optimizer);
    const Index clusters = cluster_count(rec.profile);
    const bool keep = !o.confirmed_only || rec.second_order.classification == LneClass::confirmed;
    const std::string file = "records/" + meta.run_id + ".json";
    if (keep) io::write_file_atomic(ctx.out / file, io::dump(io::record_json(meta, rec, clusters)));
    summary[k] = {{"run_id", meta.run_id},
                  {"file", keep ? json(file) : json(nullptr)},
                  {"source", src.label},
                  {"recommender_seed", src.recommender_seed},
                  {"optimizer_seed", c.opt_seed},
                  {"n", c.n},
                  {"tau", c.tau},
                  {"step", c.step},
                  {"converged", rec.converged},
                  {"iterations", rec.iterations},
                  {"classification", to_string(rec.second_order.classification)},
                  {"cluster_count", clusters}};
  });

  std::map<std::string, std::size_t> counts;
  for (auto c : {LneClass::confirmed, LneClass::inconclusive, LneClass::violated}) counts[to_string(c)] = 0;
  std::size_t written = 0;
  std::size_t converged = 0;
  for (const auto& e : summary) {
    ++counts[e["classification"].get<std::string>()];
    if (!e["file"].is_null()) ++written;
    if (e["converged"].get<bool>()) ++converged;
  }
  const json doc = {{"cells", cells.size()},
                    {"written", written},
                    {"converged", converged},
                    {"classification_counts", counts},
                    {"confirmed_only", o.confirmed_only},
                    {"records", summary}};
  io::write_file_atomic(ctx.out / "summary.json", io::dump(doc));

  json rec_seeds = json::array();
  for (const auto& s : sources) rec_seeds.push_back(s.recommender_seed);
  json opt_seeds = json::array();
  for (Index r = 0; r < o.runs; ++r) opt_seeds.push_back(r);
  ctx.seeds["recommender"] = rec_seeds;
  ctx.seeds["optimizer"] = opt_seeds;
  ctx.say() << written << " records written (" << counts[to_string(LneClass::confirmed)]
            << " confirmed, " << counts[to_string(LneClass::inconclusive)] << " inconclusive, "
            << counts[to_string(LneClass::violated)]
            << " violated; " << converged << " converged)\n";
}

// ---------------------------------------------------------------------------
// audit

struct AuditOptions {
  fs::path records;                    // solve output directory
  std::optional<fs::path> embeddings;  // train output directory
  std::vector<std::string> metrics;    // clusters, gender-gap, best-rated, creator-bias
  std::string group_a = "M";
  std::string group_b = "F";
  std::string creator_m = "M";
  std::string creator_f = "F";
  std::vector<Index> k;

  json to_json() const {
    return {{"records", detail::absolute(records).string()},
            {"embeddings",
             embeddings ? json(detail::absolute(*embeddings).string()) : json(nullptr)},
            {"metrics", metrics},
            {"group_a", group_a},
            {"group_b", group_b},
            {"creator_m", creator_m},
            {"creator_f", creator_f},
            {"k", k}};
  }
  static AuditOptions from_json(const json& j) {
    AuditOptions o;
    o.records = j.at("records").get<std::string>();
    if (auto p = detail::optional_of<std::string>(j, "embeddings")) o.embeddings = *p;
    o.metrics = detail::list_or<std::string>(j, "metrics", {});
    o.group_a = j.value("group_a", o.group_a);
    o.group_b = j.value("group_b", o.group_b);
    o.creator_m = j.value("creator_m", o.creator_m);
    o.creator_f = j.value("creator_f", o.creator_f);
    o.k = detail::list_or<Index>(j, "k", {});
    return o;
  }
};

inline const std::vector<std::string>& audit_metric_names() {
  static const std::vector<std::string> names{"clusters", "gender-gap", "best-rated",
                                              "creator-bias"};
  return names;
}

namespace detail {

struct Embeddings {
  io::EmbeddingTable users;
  std::optional<io::EmbeddingTable> items;
};

inline std::string config_label(const io::StoredRecord& r, double step) {
  return "n" + std::to_string(r.config.n) + "_tau" + label(r.config.tau) + "_step" + label(step);
}

inline void csv_row(std::string& out, const std::string& metric, const std::string& config,
                    const std::string& seed, double x, double y) {
  out += metric + "," + config + "," + seed + "," + io::format_double(x) + "," +
         (std::isfinite(y) ? io::format_double(y) : std::string("nan")) + "\n";
}

}  // namespace detail

inline void run_audit(const json& cfg, RunContext& ctx) {
  AuditOptions o = AuditOptions::from_json(cfg);
  std::set<std::string> metrics;
  if (o.metrics.empty()) {
    metrics = o.embeddings ? std::set<std::string>(audit_metric_names().begin(),
                                                   audit_metric_names().end())
                           : std::set<std::string>{"clusters"};
  }
  for (const auto& m : o.metrics) {
    if (std::find(audit_metric_names().begin(), audit_metric_names().end(), m) ==
        audit_metric_names().end()) {
      throw UsageError("unknown metric '" + m + "' (expected clusters, gender-gap, best-rated, creator-bias)");
    }
    metrics.insert(m);
  }
  const bool user_metrics = metrics.count("gender-gap") || metrics.count("best-rated");
  const bool creator = metrics.count("creator-bias") > 0;
  if ((user_metrics || creator) && !o.embeddings) {
    throw UsageError("group metrics need --embeddings pointing at a train output directory");
  }

  const fs::path summary_path = o.records / "summary.json";
  ctx.add_input(summary_path);
  const json summary = json::parse(io::read_file(summary_path));
  std::vector<std::pair<io::StoredRecord, double>> records;  // (record, step)
  for (const auto& e : summary.at("records")) {
    if (e.at("file").is_null()) continue;
    const fs::path p = o.records / e["file"].get<std::string>();
    ctx.add_input(p);
    records.emplace_back(io::stored_record_from_json(json::parse(io::read_file(p))),
                         e.at("step").get<double>());
  }
  if (records.empty()) throw UsageError("no records to audit in " + o.records.string());

  std::map<std::string, detail::Embeddings> cache;
  auto load = [&](const std::string& source) -> const detail::Embeddings& {
    auto it = cache.find(source);
    if (it != cache.end()) return it->second;
    detail::Embeddings e;
    const fs::path dir = *o.embeddings / source;
    ctx.add_input(dir / "users.csv");
    e.users = io::read_embeddings_csv(dir / "users.csv");
    if (user_metrics && !e.users.has_groups()) {
      throw UsageError((dir / "users.csv").string() +
                       " has no group column; the gender-gap and best-rated metrics need a "
                       "user_group column in the ratings CSV");
    }
    if (creator) {
      ctx.add_input(dir / "items.csv");
      e.items = io::read_embeddings_csv(dir / "items.csv");
      if (!e.items->has_groups()) {
        throw UsageError((dir / "items.csv").string() +
                         " has no group column; the creator-bias metric needs an item_group "
                         "column in the ratings CSV");
      }
    }
    return cache.emplace(source, std::move(e)).first->second;
  };

  if (creator && o.k.empty()) {
    const Index q = load(records.front().first.source).items->points.rows();
    for (Index k : {1, 5, 10, 20, 50, 100}) {
      if (k <= q) o.k.push_back(k);
    }
  }

  o.metrics.assign(metrics.begin(), metrics.end());
  ctx.resolved = o.to_json();

  auto audit_one = [&](const std::string& id, const std::string& source, const Matrix& strategies,
                       RunAudit a) {
    a.run_id = id;
    a.cluster_count = cluster_count(StrategyProfile(detail::normalized_rows(strategies)));
    if (user_metrics || creator) {
      const auto& e = load(source);
      if (user_metrics) {
        const LabeledPoints consumers{e.users.points, e.users.groups};
        if (metrics.count("gender-gap")) {
          a.group_maxima = group_max_ratings(consumers, strategies, o.group_a, o.group_b);
          a.max_rating_gap = a.group_maxima->gap();
        }
        if (metrics.count("best-rated")) {
          a.proportion_gap = best_rated_proportion_gap(consumers, strategies, o.group_a, o.group_b);
        }
      }
      if (creator) {
        const LabeledPoints base{e.items->points, e.items->groups};
        a.neighborhood = neighborhood_creator_bias(base, strategies, o.k, o.creator_m, o.creator_f);
      }
    }
    return a;
  };

  AuditReport report;
  std::string csv = "metric,config,seed,x,y\n";
  std::vector<RunAudit> confirmed;
  std::set<std::uint64_t> rec_seeds;
  std::set<std::uint64_t> opt_seeds;
  for (const auto& [r, step] : records) {
    RunAudit a;
    a.recommender_seed = r.recommender_seed;
    a.optimizer_seed = r.optimizer_seed;
    a.tau = r.config.tau;
    a.n = r.config.n;
    a.classification = r.classification;
    a = audit_one(r.run_id, r.source, r.profile.matrix(), a);
    const std::string conf = detail::config_label(r, step);
    if (metrics.count("clusters")) detail::csv_row(csv, "cluster_count", conf, r.run_id, a.tau, static_cast<double>(a.cluster_count));
    if (a.max_rating_gap) detail::csv_row(csv, "max_rating_gap", conf, r.run_id, a.tau, *a.max_rating_gap);
    if (a.proportion_gap) detail::csv_row(csv, "best_rated_proportion_gap", conf, r.run_id, a.tau, *a.proportion_gap);
    for (const auto& p : a.neighborhood) {
      detail::csv_row(csv, "neighborhood_proportion_gap", conf, r.run_id, static_cast<double>(p.k), p.proportion_gap);
      detail::csv_row(csv, "neighborhood_distance_gap", conf, r.run_id, static_cast<double>(p.k), p.distance_gap);
    }
    if (a.classification == to_string(LneClass::confirmed)) confirmed.push_back(a);
    report.runs.push_back(a);
    report.provenance.run_ids.push_back(r.run_id);
    rec_seeds.insert(r.recommender_seed);
    opt_seeds.insert(r.optimizer_seed);
  }

  // Baseline: the pre-adaptation catalogue of the lowest recommender seed.
  if (o.embeddings) {
    const auto& first = *std::min_element(records.begin(), records.end(), [](const auto& x, const auto& y) {
      return x.first.recommender_seed < y.first.recommender_seed;
    });
    const fs::path items = *o.embeddings / first.first.source / "items.csv";
    ctx.add_input(items);
    const auto t = io::read_embeddings_csv(items);
    RunAudit b;
    b.recommender_seed = first.first.recommender_seed;
    b.n = t.points.rows();
    b.classification = "baseline";
    b = audit_one("baseline-" + first.first.source, first.first.source, t.points, b);
    if (b.max_rating_gap) detail::csv_row(csv, "max_rating_gap", "baseline", b.run_id, 0.0, *b.max_rating_gap);
    if (b.proportion_gap) detail::csv_row(csv, "best_rated_proportion_gap", "baseline", b.run_id, 0.0, *b.proportion_gap);
    for (const auto& p : b.neighborhood) {
      detail::csv_row(csv, "neighborhood_proportion_gap", "baseline", b.run_id, static_cast<double>(p.k), p.proportion_gap);
      detail::csv_row(csv, "neighborhood_distance_gap", "baseline", b.run_id, static_cast<double>(p.k), p.distance_gap);
    }
    report.baseline = b;
  }

  report.all = aggregate(report.runs);
  report.confirmed_only = aggregate(confirmed);
  std::string mlist;
  for (const auto& m : metrics) mlist += (mlist.empty() ? "" : "+") + m;
  report.provenance.config = "records=" + o.records.filename().string() + ";metrics=" + mlist +
                             ";groups=" + o.group_a + "-" + o.group_b + ";creators=" +
                             o.creator_m + "-" + o.creator_f;
  report.provenance.recommender_seeds.assign(rec_seeds.begin(), rec_seeds.end());
  report.provenance.optimizer_seeds.assign(opt_seeds.begin(), opt_seeds.end());

  io::write_file_atomic(ctx.out / "audit.json", io::dump(io::to_json(report)));
  io::write_file_atomic(ctx.out / "audit.csv", csv);
  ctx.seeds["recommender"] = report.provenance.recommender_seeds;
  ctx.seeds["optimizer"] = report.provenance.optimizer_seeds;
  ctx.say() << "audited " << report.runs.size() << " runs (" << confirmed.size()
            << " confirmed); mean cluster count " << io::format_double(report.all.mean_cluster_count)
            << "\n";
}

// ---------------------------------------------------------------------------
// scenario

struct ScenarioOptions {
  std::string scenario;
  std::optional<double> tau;
  std::vector<double> taus;
  std::optional<Index> hardmax_sweep;

  json to_json() const {
    const std::string s = detail::looks_like_file(scenario) ? detail::absolute(scenario).string()
                                                            : scenario;
    return {{"scenario", s},
            {"tau", detail::json_of(tau)},
            {"taus", taus},
            {"hardmax_sweep", detail::json_of(hardmax_sweep)}};
  }
  static ScenarioOptions from_json(const json& j) {
    ScenarioOptions o;
    o.scenario = j.at("scenario").get<std::string>();
    o.tau = detail::optional_of<double>(j, "tau");
    o.taus = detail::list_or<double>(j, "taus", {});
    o.hardmax_sweep = detail::optional_of<Index>(j, "hardmax_sweep");
    return o;
  }
};

inline void run_scenario_cmd(const json& cfg, RunContext& ctx) {
  const auto o = ScenarioOptions::from_json(cfg);
  if (o.hardmax_sweep && *o.hardmax_sweep < 2) throw UsageError("--hardmax-sweep must be >= 2");
  Scenario sc;
  try {
    sc = detail::resolve_scenario(o.scenario, ctx, o.tau, o.taus, o.hardmax_sweep);
  } catch (const std::invalid_argument& e) {
    std::string names;
    for (const auto& n : builtin_scenario_names()) names += " " + n;
    throw UsageError(std::string(e.what()) + " (built-in scenarios:" + names + ")");
  }
  const ScenarioReport rep = run_scenario(sc);
  io::write_file_atomic(ctx.out / "report.json", io::dump(io::to_json(rep)));
  for (const auto& c : rep.checks) {
    ctx.say() << (c.passed ? "PASS " : "FAIL ") << c.name;
    for (const auto& [k, v] : c.values) ctx.say() << " " << k << "=" << io::format_double(v);
    if (!c.note.empty()) ctx.say() << " (" << c.note << ")";
    ctx.say() << "\n";
  }
  ctx.say() << (rep.passed() ? "PASS " : "FAIL ") << "scenario " << rep.scenario << "\n";
  if (!rep.passed()) ctx.exit_code = 1;
}

// ---------------------------------------------------------------------------
// hardmax

struct HardmaxOptions {
  std::string method = "lp";
  std::optional<std::string> scenario;
  std::optional<fs::path> users;
  Index k = 360;
  std::optional<Index> d;
  Index max_support = 3;
  Index verify_resolution = 3600;

  json to_json() const {
    std::optional<std::string> sc = scenario;
    if (sc && detail::looks_like_file(*sc)) sc = detail::absolute(*sc).string();
    return {{"method", method},
            {"scenario", detail::json_of(sc)},
            {"users", users ? json(detail::absolute(*users).string()) : json(nullptr)},
            {"k", k},
            {"d", detail::json_of(d)},
            {"max_support", max_support},
            {"verify_resolution", verify_resolution}};
  }
  static HardmaxOptions from_json(const json& j) {
    HardmaxOptions o;
    o.method = j.value("method", o.method);
    o.scenario = detail::optional_of<std::string>(j, "scenario");
    if (auto p = detail::optional_of<std::string>(j, "users")) o.users = *p;
    o.k = j.value("k", o.k);
    o.d = detail::optional_of<Index>(j, "d");
    o.max_support = j.value("max_support", o.max_support);
    o.verify_resolution = j.value("verify_resolution", o.verify_resolution);
    return o;
  }
};

inline void check_grid(Index d, Index k) {
  if (d < 2) throw UsageError("grid needs d >= 2");
  if (k < 2) throw UsageError("grid needs k >= 2");
  if (sphere_grid_size(d, k) < 0) {
    throw UsageError("grid overflow: k^(d-1) = " + std::to_string(k) + "^" +
                     std::to_string(d - 1) + " points exceeds the limit of " +
                     std::to_string(kMaxGridPoints));
  }
}

/// Largest resolution r <= cap whose k^(d-1) grid stays within `points`.
inline Index verification_resolution(Index d, Index cap, Index points = 40000) {
  Index r = cap;
  while (r > 2 && (sphere_grid_size(d, r) < 0 || sphere_grid_size(d, r) > points)) --r;
  return r;
}

inline void run_hardmax(const json& cfg, RunContext& ctx) {
  const auto o = HardmaxOptions::from_json(cfg);
  if (o.method != "lp" && o.method != "hitting-set") {
    throw UsageError("unknown method '" + o.method + "' (expected lp or hitting-set)");
  }
  if (o.method == "lp" && o.d) check_grid(*o.d, o.k);
  if (o.scenario && o.users) throw UsageError("give at most one of --scenario and --users");
  DemandDistribution demand;
  if (o.users) {
    ctx.add_input(*o.users);
    demand = DemandDistribution(io::read_embeddings_csv(*o.users).points);
  } else {
    demand = detail::resolve_scenario(o.scenario.value_or("triangle"), ctx).demand;
  }
  const Index d = demand.dim();
  if (o.d && *o.d != d) {
    throw UsageError("--d " + std::to_string(*o.d) + " does not match demand dimension " +
                     std::to_string(d));
  }
  json out = {{"method", o.method}, {"d", d}};
  MixedStrategy mix;
  if (o.method == "lp") {
    check_grid(d, o.k);
    const GameConfig game{d, 2, 0.0, false};
    const Matrix grid = discretize_sphere(d, o.k);
    const auto eq = lp_mixed_ne(game, demand, grid);
    mix = eq.strategy;
    out["k"] = o.k;
    out["grid_points"] = grid.rows();
    out["value"] = eq.value;
    out["grid_indices"] = eq.grid_indices;
  } else {
    if (d != 2) throw UsageError("hitting-set method requires d = 2, got d = " + std::to_string(d));
    HittingSetOptions hs;
    hs.max_support = o.max_support;
    const auto res = hitting_set_mixed_ne(demand, hs);
    if (!res) {
      throw std::runtime_error("no mixed equilibrium with support <= " +
                               std::to_string(o.max_support) + " found");
    }
    mix = res->strategy;
    out["rounds"] = res->rounds;
    out["constraints"] = res->constraints;
  }
  const Index vr = d == 2 ? o.verify_resolution : verification_resolution(d, o.verify_resolution);
  const double worst = verify_mixed_strategy(demand, mix, vr);
  out["support"] = io::to_json(mix.support());
  out["probs"] = io::to_json(mix.probs());
  out["verification"] = {{"resolution", vr}, {"min_payoff", worst}, {"margin", worst - 0.5}};
  io::write_file_atomic(ctx.out / "mixed.json", io::dump(out));
  ctx.say() << o.method << ": support " << mix.size() << ", verification margin "
            << io::format_double(worst - 0.5) << "\n";
  for (Index i = 0; i < mix.size(); ++i) {
    ctx.say() << "  p=" << io::format_double(mix.probs()(i)) << "  s=";
    for (Index a = 0; a < d; ++a) ctx.say() << (a ? "," : "") << io::format_double(mix.support()(i, a));
    ctx.say() << "\n";
  }
}

// ---------------------------------------------------------------------------
// dispatch, manifests, replay

inline const std::vector<std::string>& command_names() {
  static const std::vector<std::string> names{"synth", "train", "solve", "audit", "scenario",
                                              "hardmax"};
  return names;
}

/// Runs `command` with option snapshot `cfg`, writing outputs and
/// manifest.json under `out`. Returns the process exit code.
inline int execute(const std::string& command, const json& cfg, const fs::path& out,
                   std::ostream* log = nullptr) {
  RunContext ctx;
  ctx.out = out;
  ctx.log = log;
  const std::string started = detail::utc_now();
  const auto t0 = std::chrono::steady_clock::now();
  fs::create_directories(out);
  if (command == "synth") {
    run_synth(cfg, ctx);
  } else if (command == "train") {
    run_train(cfg, ctx);
  } else if (command == "solve") {
    run_solve(cfg, ctx);
  } else if (command == "audit") {
    run_audit(cfg, ctx);
  } else if (command == "scenario") {
    run_scenario_cmd(cfg, ctx);
  } else if (command == "hardmax") {
    run_hardmax(cfg, ctx);
  } else {
    throw UsageError("unknown command '" + command + "'");
  }
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  json inputs = json::array();
  for (const auto& [p, digest] : ctx.inputs) inputs.push_back({{"path", p}, {"sha256", digest}});
  const json manifest = {{"command", command},
                         {"tool_version", version()},
                         {"config", ctx.resolved.is_null() ? cfg : ctx.resolved},
                         {"seeds", ctx.seeds},
                         {"inputs", inputs},
                         {"output_dir", detail::absolute(out).string()},
                         {"workers", worker_count()},
                         {"wall_clock", {{"started", started}, {"finished", detail::utc_now()}, {"seconds", secs}}}};
  io::write_file_atomic(out / "manifest.json", io::dump(manifest));
  return ctx.exit_code;
}

/// Files under `dir` other than manifest.json, as sorted relative paths.
inline std::vector<std::string> output_files(const fs::path& dir) {
  std::vector<std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    const std::string rel = fs::relative(e.path(), dir).generic_string();
    if (rel != "manifest.json") out.push_back(rel);
  }
  std::sort(out.begin(), out.end());
  return out;
}

/// Byte comparison of two output trees; returns the differing relative paths.
inline std::vector<std::string> compare_outputs(const fs::path& a, const fs::path& b) {
  const auto fa = output_files(a);
  const auto fb = output_files(b);
  std::vector<std::string> diff;
  std::set_symmetric_difference(fa.begin(), fa.end(), fb.begin(), fb.end(),
                                std::back_inserter(diff));
  for (const auto& f : fa) {
    if (std::binary_search(fb.begin(), fb.end(), f) && io::read_file(a / f) != io::read_file(b / f)) {
      diff.push_back(f);
    }
  }
  std::sort(diff.begin(), diff.end());
  return diff;
}

/// Reruns a manifest into `out`. Inputs must still match their recorded
/// digests. With `verify`, outputs are compared byte for byte against the
/// original run and a mismatch yields exit code 1.
inline int replay(const fs::path& manifest_path, const fs::path& out, bool verify,
                  std::ostream* log = nullptr) {
  const json m = json::parse(io::read_file(manifest_path));
  for (const auto& in : m.at("inputs")) {
    const std::string p = in.at("path").get<std::string>();
    if (!fs::exists(p)) throw std::runtime_error("replay input missing: " + p);
    if (io::sha256_file(p) != in.at("sha256").get<std::string>()) {
      throw std::runtime_error("replay input changed since the original run: " + p);
    }
  }
  const fs::path original = m.at("output_dir").get<std::string>();
  if (detail::absolute(out) == detail::absolute(original)) {
    throw UsageError("replay output directory must differ from the original");
  }
  const int code = execute(m.at("command").get<std::string>(), m.at("config"), out, log);
  if (!verify) return code;
  const auto diff = compare_outputs(original, out);
  if (log) {
    if (diff.empty()) {
      *log << "replay identical: " << output_files(out).size() << " files\n";
    } else {
      for (const auto& f : diff) *log << "differs: " << f << "\n";
    }
  }
  return diff.empty() ? code : 1;
}

}  // namespace expogame::cli
