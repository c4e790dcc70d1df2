#pragma once

// Post-equilibrium audit statistics: cluster counts, group rating gaps and
// creator-neighborhood bias of strategic items against a baseline catalogue.

#include "expogame/core.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace expogame {

/// Connected components of the graph joining strategies closer than
/// 1e-5 * sqrt(d) in Euclidean distance.
inline Index cluster_count(const StrategyProfile& profile) {
  const Index n = profile.size();
  const double thr = 1e-5 * std::sqrt(static_cast<double>(profile.dim()));
  std::vector<Index> parent(static_cast<std::size_t>(n));
  std::iota(parent.begin(), parent.end(), Index{0});
  auto find = [&](Index x) {
    while (parent[x] != x) {
      parent[x] = parent[parent[x]];
      x = parent[x];
    }
    return x;
  };
  const Matrix& s = profile.matrix();
  for (Index i = 0; i < n; ++i) {
    for (Index j = i + 1; j < n; ++j) {
      if ((s.row(i) - s.row(j)).norm() < thr) parent[find(i)] = find(j);
    }
  }
  Index roots = 0;
  for (Index i = 0; i < n; ++i) roots += find(i) == i ? 1 : 0;
  return roots;
}

/// Cosine similarity <c, s> / (|c| |s|).
inline double normalized_rating(const Vector& c, const Vector& s) {
  const double nc = c.norm();
  const double ns = s.norm();
  if (!(nc > 0.0) || !(ns > 0.0)) {
    throw std::invalid_argument("normalized rating needs non-zero vectors");
  }
  return c.dot(s) / (nc * ns);
}

inline double median(std::vector<double> v) {
  if (v.empty()) throw std::invalid_argument("median of an empty set");
  std::sort(v.begin(), v.end());
  const std::size_t h = v.size() / 2;
  return v.size() % 2 == 1 ? v[h] : 0.5 * (v[h - 1] + v[h]);
}

/// Consumers (rows) carrying group labels.
struct LabeledPoints {
  Matrix points;
  std::vector<std::string> labels;

  void validate() const {
    if (static_cast<Index>(labels.size()) != points.rows()) {
      throw std::invalid_argument("group labels missing or misaligned with points");
    }
  }

  std::vector<Index> members(const std::string& group) const {
    std::vector<Index> out;
    for (std::size_t j = 0; j < labels.size(); ++j) {
      if (labels[j] == group) out.push_back(static_cast<Index>(j));
    }
    return out;
  }
};

namespace detail {

inline std::vector<Index> require_members(const LabeledPoints& lp, const std::string& group) {
  lp.validate();
  auto m = lp.members(group);
  if (m.empty()) throw std::invalid_argument("group '" + group + "' is empty");
  return m;
}

/// Cosine similarity of every consumer (rows) with every strategy (columns).
inline Matrix rating_matrix(const Matrix& points, const Matrix& strategies) {
  const Vector pn = points.rowwise().norm();
  const Vector sn = strategies.rowwise().norm();
  if (!(pn.minCoeff() > 0.0) || !(sn.minCoeff() > 0.0)) {
    throw std::invalid_argument("normalized rating needs non-zero vectors");
  }
  Matrix r = points * strategies.transpose();
  for (Index j = 0; j < r.rows(); ++j) {
    for (Index i = 0; i < r.cols(); ++i) r(j, i) /= pn(j) * sn(i);
  }
  return r;
}

}  // namespace detail

/// max_i r(c, s_i) for every consumer in each of two groups.
struct GroupMaxRatings {
  std::vector<double> a;
  std::vector<double> b;

  double gap() const { return median(a) - median(b); }
};

inline GroupMaxRatings group_max_ratings(const LabeledPoints& consumers, const Matrix& strategies,
                                         const std::string& group_a, const std::string& group_b) {
  const auto ia = detail::require_members(consumers, group_a);
  const auto ib = detail::require_members(consumers, group_b);
  const Matrix r = detail::rating_matrix(consumers.points, strategies);
  GroupMaxRatings out;
  for (Index j : ia) out.a.push_back(r.row(j).maxCoeff());
  for (Index j : ib) out.b.push_back(r.row(j).maxCoeff());
  return out;
}

/// median_{c in A} max_i r(c, s_i) - median_{c in B} max_i r(c, s_i).
inline double group_max_rating_gap(const LabeledPoints& consumers, const Matrix& strategies,
                                   const std::string& group_a, const std::string& group_b) {
  return group_max_ratings(consumers, strategies, group_a, group_b).gap();
}

/// Index of the consumer rating each strategy highest (lowest index on ties).
inline std::vector<Index> best_rating_consumers(const Matrix& points, const Matrix& strategies) {
  const Matrix r = detail::rating_matrix(points, strategies);
  std::vector<Index> out;
  for (Index i = 0; i < r.cols(); ++i) {
    Index best = 0;
    for (Index j = 1; j < r.rows(); ++j) {
      if (r(j, i) > r(best, i)) best = j;
    }
    out.push_back(best);
  }
  return out;
}

/// (1/n) sum_i [1{best rater of s_i in A} - 1{best rater of s_i in B}].
inline double best_rated_proportion_gap(const LabeledPoints& consumers, const Matrix& strategies,
                                        const std::string& group_a, const std::string& group_b) {
  detail::require_members(consumers, group_a);
  detail::require_members(consumers, group_b);
  const auto best = best_rating_consumers(consumers.points, strategies);
  double acc = 0.0;
  for (Index j : best) {
    const auto& g = consumers.labels[static_cast<std::size_t>(j)];
    if (g == group_a) acc += 1.0;
    if (g == group_b) acc -= 1.0;
  }
  return acc / static_cast<double>(best.size());
}

struct NeighborhoodPoint {
  Index k = 0;
  /// Mean over strategic items of (fraction M - fraction F) among the k nearest.
  double proportion_gap = 0.0;
  /// Mean over items where both groups appear among the k nearest of
  /// (median distance to F - median distance to M); NaN if no item qualifies.
  double distance_gap = std::numeric_limits<double>::quiet_NaN();
  std::vector<double> item_proportion_gaps;
  /// NaN entries mark items whose neighborhood misses one group.
  std::vector<double> item_distance_gaps;
};

/// Neighborhood composition of each strategic item within a labeled baseline
/// catalogue, by cosine distance 1 - cos. Distance ties keep catalogue order.
inline std::vector<NeighborhoodPoint> neighborhood_creator_bias(
    const LabeledPoints& baseline, const Matrix& strategies, const std::vector<Index>& ks,
    const std::string& group_m = "M", const std::string& group_f = "F") {
  baseline.validate();
  const Index q = baseline.points.rows();
  if (q < 1) throw std::invalid_argument("baseline catalogue is empty");
  for (Index k : ks) {
    if (k < 1 || k > q) {
      throw std::invalid_argument("neighborhood size " + std::to_string(k) +
                                  " outside [1, " + std::to_string(q) + "]");
    }
  }
  const Matrix r = detail::rating_matrix(baseline.points, strategies);  // q x n
  const Index n = strategies.rows();
  std::vector<NeighborhoodPoint> out(ks.size());
  for (std::size_t a = 0; a < ks.size(); ++a) out[a].k = ks[a];

  std::vector<Index> order(static_cast<std::size_t>(q));
  for (Index i = 0; i < n; ++i) {
    std::iota(order.begin(), order.end(), Index{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](Index x, Index y) { return 1.0 - r(x, i) < 1.0 - r(y, i); });
    for (auto& pt : out) {
      std::vector<double> dm;
      std::vector<double> df;
      for (Index t = 0; t < pt.k; ++t) {
        const Index j = order[static_cast<std::size_t>(t)];
        const auto& g = baseline.labels[static_cast<std::size_t>(j)];
        if (g == group_m) dm.push_back(1.0 - r(j, i));
        if (g == group_f) df.push_back(1.0 - r(j, i));
      }
      const double kk = static_cast<double>(pt.k);
      pt.item_proportion_gaps.push_back(static_cast<double>(dm.size()) / kk -
                                        static_cast<double>(df.size()) / kk);
      pt.item_distance_gaps.push_back(dm.empty() || df.empty()
                                          ? std::numeric_limits<double>::quiet_NaN()
                                          : median(df) - median(dm));
    }
  }
  for (auto& pt : out) {
    double sum = 0.0;
    for (double v : pt.item_proportion_gaps) sum += v;
    pt.proportion_gap = sum / static_cast<double>(n);
    double dsum = 0.0;
    Index cnt = 0;
    for (double v : pt.item_distance_gaps) {
      if (std::isnan(v)) continue;
      dsum += v;
      ++cnt;
    }
    if (cnt > 0) pt.distance_gap = dsum / static_cast<double>(cnt);
  }
  return out;
}

/// Audit values for one strategy set (an equilibrium run or the baseline).
struct RunAudit {
  std::string run_id;
  std::uint64_t recommender_seed = 0;
  std::uint64_t optimizer_seed = 0;
  double tau = 0.0;
  Index n = 0;
  std::string classification;
  Index cluster_count = 0;
  std::optional<double> max_rating_gap;
  std::optional<double> proportion_gap;
  std::vector<NeighborhoodPoint> neighborhood;
  /// Raw per-consumer maxima, kept for pooled aggregation.
  std::optional<GroupMaxRatings> group_maxima;
};

struct AuditAggregate {
  std::size_t runs = 0;
  double mean_cluster_count = 0.0;
  Index min_cluster_count = 0;
  Index max_cluster_count = 0;
  /// Median of per-run gaps, and gap of medians over pooled consumers.
  std::optional<double> max_rating_gap_per_run_median;
  std::optional<double> max_rating_gap_pooled;
  std::optional<double> proportion_gap_mean;
  /// k -> mean over runs of the per-run proportion / distance gap.
  std::map<Index, double> neighborhood_proportion_gap;
  std::map<Index, double> neighborhood_distance_gap;
};

inline AuditAggregate aggregate(const std::vector<RunAudit>& runs) {
  AuditAggregate agg;
  agg.runs = runs.size();
  if (runs.empty()) return agg;
  agg.min_cluster_count = runs.front().cluster_count;
  agg.max_cluster_count = runs.front().cluster_count;
  double cc = 0.0;
  std::vector<double> gaps;
  GroupMaxRatings pooled;
  double prop = 0.0;
  std::size_t nprop = 0;
  std::map<Index, std::pair<double, std::size_t>> np;
  std::map<Index, std::pair<double, std::size_t>> nd;
  for (const auto& r : runs) {
    cc += static_cast<double>(r.cluster_count);
    agg.min_cluster_count = std::min(agg.min_cluster_count, r.cluster_count);
    agg.max_cluster_count = std::max(agg.max_cluster_count, r.cluster_count);
    if (r.max_rating_gap) gaps.push_back(*r.max_rating_gap);
    if (r.group_maxima) {
      pooled.a.insert(pooled.a.end(), r.group_maxima->a.begin(), r.group_maxima->a.end());
      pooled.b.insert(pooled.b.end(), r.group_maxima->b.begin(), r.group_maxima->b.end());
    }
    if (r.proportion_gap) {
      prop += *r.proportion_gap;
      ++nprop;
    }
    for (const auto& pt : r.neighborhood) {
      np[pt.k].first += pt.proportion_gap;
      ++np[pt.k].second;
      if (!std::isnan(pt.distance_gap)) {
        nd[pt.k].first += pt.distance_gap;
        ++nd[pt.k].second;
      }
    }
  }
  agg.mean_cluster_count = cc / static_cast<double>(runs.size());
  if (!gaps.empty()) agg.max_rating_gap_per_run_median = median(gaps);
  if (!pooled.a.empty() && !pooled.b.empty()) agg.max_rating_gap_pooled = pooled.gap();
  if (nprop > 0) agg.proportion_gap_mean = prop / static_cast<double>(nprop);
  for (const auto& [k, v] : np) agg.neighborhood_proportion_gap[k] = v.first / static_cast<double>(v.second);
  for (const auto& [k, v] : nd) agg.neighborhood_distance_gap[k] = v.first / static_cast<double>(v.second);
  return agg;
}

struct AuditProvenance {
  std::string config;
  std::vector<std::uint64_t> recommender_seeds;
  std::vector<std::uint64_t> optimizer_seeds;
  std::vector<std::string> run_ids;
};

struct AuditReport {
  std::vector<RunAudit> runs;
  std::optional<RunAudit> baseline;
  AuditAggregate all;
  AuditAggregate confirmed_only;
  AuditProvenance provenance;
};

}  // namespace expogame
