#pragma once

// Matrix factorization recommenders that supply consumer and item embeddings:
// PMF fitted by SGD on centered ratings, NMF fitted by multiplicative updates.

#include "expogame/core.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

namespace expogame {

struct Rating {
  Index user = 0;
  Index item = 0;
  double value = 0.0;
};

/// Rating triples over dense user/item indices. Group vectors are either
/// empty or aligned with the id vectors.
struct RatingsDataset {
  std::vector<std::string> user_ids;
  std::vector<std::string> item_ids;
  std::vector<Rating> ratings;
  std::vector<std::string> user_groups;
  std::vector<std::string> item_groups;

  Index users() const { return static_cast<Index>(user_ids.size()); }
  Index items() const { return static_cast<Index>(item_ids.size()); }

  void validate() const {
    if (ratings.empty()) throw std::invalid_argument("ratings dataset is empty");
    for (const auto& r : ratings) {
      if (r.user < 0 || r.user >= users() || r.item < 0 || r.item >= items()) {
        throw std::invalid_argument("rating refers to an unknown user or item");
      }
      if (!std::isfinite(r.value)) throw std::invalid_argument("rating is not finite");
    }
    if (!user_groups.empty() && user_groups.size() != user_ids.size()) {
      throw std::invalid_argument("user group labels misaligned");
    }
    if (!item_groups.empty() && item_groups.size() != item_ids.size()) {
      throw std::invalid_argument("item group labels misaligned");
    }
  }

  /// Dataset with ids "0".."users-1" and "0".."items-1".
  static RatingsDataset from_triples(Index users, Index items, std::vector<Rating> triples) {
    RatingsDataset d;
    for (Index u = 0; u < users; ++u) d.user_ids.push_back(std::to_string(u));
    for (Index v = 0; v < items; ++v) d.item_ids.push_back(std::to_string(v));
    d.ratings = std::move(triples);
    return d;
  }
};

enum class MfVariant { pmf, nmf };

inline std::string to_string(MfVariant v) { return v == MfVariant::pmf ? "pmf" : "nmf"; }

inline MfVariant mf_variant_from_string(const std::string& s) {
  if (s == "pmf") return MfVariant::pmf;
  if (s == "nmf") return MfVariant::nmf;
  throw std::invalid_argument("unknown factorization variant: " + s);
}

struct MfOptions {
  Index d = 3;
  double reg = 0.02;
  /// SGD learning rate (PMF only; multiplicative NMF updates have no step).
  double lr = 0.01;
  int epochs = 100;
  std::uint64_t seed = 0;
  /// PMF with per-user and per-item bias terms. Biases never enter the
  /// exported embeddings.
  bool biases = false;
  /// Fraction of ratings held out for an RMSE report; 0 disables.
  double holdout_fraction = 0.0;
};

struct MFModel {
  MfVariant variant = MfVariant::pmf;
  Matrix users;  // m x d
  Matrix items;  // q x d
  double mu = 0.0;
  Vector user_bias;
  Vector item_bias;

  double predict(Index u, Index v) const {
    double r = users.row(u).dot(items.row(v));
    if (variant == MfVariant::pmf) {
      r += mu;
      if (user_bias.size() > 0) r += user_bias(u) + item_bias(v);
    }
    return r;
  }
};

struct TrainReport {
  double train_rmse = 0.0;
  std::optional<double> holdout_rmse;
  /// Regularized objective after each epoch.
  std::vector<double> objective;
};

struct TrainResult {
  MFModel model;
  TrainReport report;
};

namespace detail {

inline void check_options(const MfOptions& o) {
  if (o.d < 1) throw std::invalid_argument("embedding dimension must be >= 1");
  if (!(o.reg > 0.0)) throw std::invalid_argument("regularization must be positive");
  if (!(o.lr > 0.0)) throw std::invalid_argument("learning rate must be positive");
  if (o.epochs < 0) throw std::invalid_argument("epochs must be >= 0");
  if (o.holdout_fraction < 0.0 || o.holdout_fraction >= 1.0) {
    throw std::invalid_argument("holdout fraction must lie in [0, 1)");
  }
}

/// Ratings in a canonical order so results do not depend on input order,
/// split into (train, holdout) with a seeded draw.
inline std::pair<std::vector<Rating>, std::vector<Rating>> canonical_split(
    const RatingsDataset& data, double holdout, std::uint64_t seed) {
  std::vector<Rating> all = data.ratings;
  std::sort(all.begin(), all.end(), [](const Rating& a, const Rating& b) {
    return std::tie(a.user, a.item, a.value) < std::tie(b.user, b.item, b.value);
  });
  if (holdout <= 0.0) return {all, {}};
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<Rating> train;
  std::vector<Rating> test;
  for (const auto& r : all) (unif(rng) < holdout ? test : train).push_back(r);
  if (train.empty()) throw std::invalid_argument("holdout split left no training data");
  return {train, test};
}

inline double rmse(const MFModel& m, const std::vector<Rating>& rs) {
  if (rs.empty()) return 0.0;
  double se = 0.0;
  for (const auto& r : rs) {
    const double e = r.value - m.predict(r.user, r.item);
    se += e * e;
  }
  return std::sqrt(se / static_cast<double>(rs.size()));
}

inline double objective(const MFModel& m, const std::vector<Rating>& rs, double reg) {
  double se = 0.0;
  for (const auto& r : rs) {
    const double e = r.value - m.predict(r.user, r.item);
    se += e * e;
  }
  double pen = m.users.squaredNorm() + m.items.squaredNorm();
  if (m.user_bias.size() > 0) pen += m.user_bias.squaredNorm() + m.item_bias.squaredNorm();
  return se + reg * pen;
}

}  // namespace detail

/// Minimizes sum (r - mu - <c_u, s_v>)^2 + reg (|C|^2 + |S|^2) by SGD with a
/// seeded per-epoch shuffle. Initial entries ~ N(0, 0.1^2).
inline TrainResult train_pmf(const RatingsDataset& data, const MfOptions& opt) {
  data.validate();
  detail::check_options(opt);
  auto [train, holdout] = detail::canonical_split(data, opt.holdout_fraction, opt.seed);

  std::mt19937_64 rng(opt.seed);
  std::normal_distribution<double> init(0.0, 0.1);
  MFModel m;
  m.variant = MfVariant::pmf;
  m.users.resize(data.users(), opt.d);
  m.items.resize(data.items(), opt.d);
  for (Index i = 0; i < m.users.size(); ++i) m.users.data()[i] = init(rng);
  for (Index i = 0; i < m.items.size(); ++i) m.items.data()[i] = init(rng);
  if (opt.biases) {
    m.user_bias = Vector::Zero(data.users());
    m.item_bias = Vector::Zero(data.items());
  }
  double sum = 0.0;
  for (const auto& r : train) sum += r.value;
  m.mu = sum / static_cast<double>(train.size());

  TrainResult out;
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Vector cu(opt.d);
  for (int epoch = 0; epoch < opt.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (const std::size_t k : order) {
      const Rating& r = train[k];
      const double e = r.value - m.predict(r.user, r.item);
      cu = m.users.row(r.user).transpose();
      m.users.row(r.user) += opt.lr * (e * m.items.row(r.item) - opt.reg * m.users.row(r.user));
      m.items.row(r.item) += opt.lr * (e * cu.transpose() - opt.reg * m.items.row(r.item));
      if (opt.biases) {
        m.user_bias(r.user) += opt.lr * (e - opt.reg * m.user_bias(r.user));
        m.item_bias(r.item) += opt.lr * (e - opt.reg * m.item_bias(r.item));
      }
    }
    out.report.objective.push_back(detail::objective(m, train, opt.reg));
  }
  out.report.train_rmse = detail::rmse(m, train);
  if (!holdout.empty()) out.report.holdout_rmse = detail::rmse(m, holdout);
  out.model = std::move(m);
  return out;
}

/// Non-negative factorization of the observed ratings by multiplicative
/// updates on sum (r - <c_u, s_v>)^2 + reg (|C|^2 + |S|^2). Initial entries
/// ~ Uniform(0, 1). The objective is non-increasing across epochs.
inline TrainResult train_nmf(const RatingsDataset& data, const MfOptions& opt) {
  data.validate();
  detail::check_options(opt);
  for (std::size_t k = 0; k < data.ratings.size(); ++k) {
    if (data.ratings[k].value < 0.0) {
      throw std::invalid_argument("NMF requires non-negative ratings; rating #" +
                                  std::to_string(k + 1) + " (user " +
                                  data.user_ids[static_cast<std::size_t>(data.ratings[k].user)] +
                                  ", item " +
                                  data.item_ids[static_cast<std::size_t>(data.ratings[k].item)] +
                                  ") is " + std::to_string(data.ratings[k].value));
    }
  }
  auto [train, holdout] = detail::canonical_split(data, opt.holdout_fraction, opt.seed);

  std::mt19937_64 rng(opt.seed);
  std::uniform_real_distribution<double> init(0.0, 1.0);
  MFModel m;
  m.variant = MfVariant::nmf;
  m.users.resize(data.users(), opt.d);
  m.items.resize(data.items(), opt.d);
  for (Index i = 0; i < m.users.size(); ++i) m.users.data()[i] = init(rng);
  for (Index i = 0; i < m.items.size(); ++i) m.items.data()[i] = init(rng);

  constexpr double kDenomFloor = 1e-300;
  TrainResult out;
  Matrix num;
  Matrix den;
  for (int epoch = 0; epoch < opt.epochs; ++epoch) {
    num = Matrix::Zero(m.users.rows(), opt.d);
    den = Matrix::Zero(m.users.rows(), opt.d);
    for (const auto& r : train) {
      const double pred = m.users.row(r.user).dot(m.items.row(r.item));
      num.row(r.user) += r.value * m.items.row(r.item);
      den.row(r.user) += pred * m.items.row(r.item);
    }
    den += opt.reg * m.users;
    m.users = m.users.cwiseProduct(num).cwiseQuotient(den.cwiseMax(kDenomFloor));

    num = Matrix::Zero(m.items.rows(), opt.d);
    den = Matrix::Zero(m.items.rows(), opt.d);
    for (const auto& r : train) {
      const double pred = m.users.row(r.user).dot(m.items.row(r.item));
      num.row(r.item) += r.value * m.users.row(r.user);
      den.row(r.item) += pred * m.users.row(r.user);
    }
    den += opt.reg * m.items;
    m.items = m.items.cwiseProduct(num).cwiseQuotient(den.cwiseMax(kDenomFloor));
    out.report.objective.push_back(detail::objective(m, train, opt.reg));
  }
  out.report.train_rmse = detail::rmse(m, train);
  if (!holdout.empty()) out.report.holdout_rmse = detail::rmse(m, holdout);
  out.model = std::move(m);
  return out;
}

inline TrainResult train(const RatingsDataset& data, MfVariant variant, const MfOptions& opt) {
  return variant == MfVariant::pmf ? train_pmf(data, opt) : train_nmf(data, opt);
}

/// Demand P_c = (1/m) sum_j delta_{c_j} over the rows of an embedding matrix,
/// with optional ids and group labels carried along for audits.
struct LabeledDemand {
  DemandDistribution demand;
  bool nonneg = false;
  std::vector<std::string> ids;
  std::vector<std::string> groups;
};

inline LabeledDemand build_demand(const Matrix& user_embeddings,
                                  std::vector<std::string> ids = {},
                                  std::vector<std::string> groups = {}) {
  if (user_embeddings.rows() < 1) throw std::invalid_argument("cannot build demand from zero users");
  LabeledDemand out{DemandDistribution(user_embeddings), false, std::move(ids), std::move(groups)};
  out.nonneg = out.demand.nonnegative();
  return out;
}

inline LabeledDemand build_demand(const MFModel& model) { return build_demand(model.users); }

}  // namespace expogame
