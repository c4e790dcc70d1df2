#include <expogame/audit.hpp>
#include <expogame/sphere.hpp>

#include <gtest/gtest.h>

#include "oracles.hpp"

#include <cmath>
#include <numbers>
#include <random>

using namespace expogame;

namespace {

LabeledPoints two_groups() {
  LabeledPoints lp;
  lp.points.resize(4, 2);
  lp.points << 1, 0, 2, 0, 0, 1, 0, 3;
  lp.labels = {"A", "A", "B", "B"};
  return lp;
}

LabeledPoints swap_labels(LabeledPoints lp, const std::string& x, const std::string& y) {
  for (auto& l : lp.labels) {
    if (l == x) {
      l = y;
    } else if (l == y) {
      l = x;
    }
  }
  return lp;
}

Matrix rows(std::initializer_list<std::initializer_list<double>> r) {
  Matrix m(static_cast<Index>(r.size()), static_cast<Index>(r.begin()->size()));
  Index i = 0;
  for (const auto& row : r) {
    Index j = 0;
    for (double v : row) m(i, j++) = v;
    ++i;
  }
  return m;
}

}  // namespace

TEST(Clusters, IdenticalIsOne) {
  EXPECT_EQ(cluster_count(StrategyProfile::repeated(Vector::Unit(3, 1), 7)), 1);
}

TEST(Clusters, DistantPairIsTwo) {
  Matrix s(2, 2);
  s.row(0) = unit_at(0.0).transpose();
  s.row(1) = unit_at(std::numbers::pi / 3.0).transpose();  // distance exactly 1
  EXPECT_EQ(cluster_count(StrategyProfile(s)), 2);
}

TEST(Clusters, ChainConnects) {
  const double thr = 1e-5 * std::sqrt(2.0);
  Matrix s(3, 2);
  for (int k = 0; k < 3; ++k) s.row(k) = unit_at(k * 0.5 * thr).transpose();
  EXPECT_EQ(cluster_count(StrategyProfile(s)), 1);
  // Endpoints 1.8 thr apart are joined through the middle point.
  Matrix t(3, 2);
  for (int k = 0; k < 3; ++k) t.row(k) = unit_at(k * 0.9 * thr).transpose();
  EXPECT_EQ(cluster_count(StrategyProfile(t)), 1);
  Matrix ends(2, 2);
  ends << t.row(0), t.row(2);
  EXPECT_EQ(cluster_count(StrategyProfile(ends)), 2);
}

TEST(Clusters, PermutationAndRotationInvariant) {
  std::mt19937_64 rng(1);
  Matrix s(6, 3);
  const Vector a = oracle::random_unit(rng, 3);
  const Vector b = oracle::random_unit(rng, 3);
  for (Index i = 0; i < 6; ++i) s.row(i) = (i % 2 == 0 ? a : b).transpose();
  const Index base = cluster_count(StrategyProfile(s));
  EXPECT_EQ(base, 2);
  Eigen::PermutationMatrix<Eigen::Dynamic> perm(6);
  perm.indices() << 5, 3, 1, 0, 2, 4;
  EXPECT_EQ(cluster_count(StrategyProfile(perm * s)), base);
  Eigen::HouseholderQR<Matrix> qr(Matrix::Random(3, 3));
  const Matrix rot = qr.householderQ() * Matrix::Identity(3, 3);
  EXPECT_EQ(cluster_count(StrategyProfile(s * rot.transpose())), base);
}

TEST(Rating, Cosine) {
  const Vector s = Vector::Unit(3, 0);
  EXPECT_DOUBLE_EQ(normalized_rating(2.0 * s, s), 1.0);
  EXPECT_DOUBLE_EQ(normalized_rating(Vector::Unit(3, 1), s), 0.0);
  EXPECT_DOUBLE_EQ(normalized_rating(-s, s), -1.0);
  EXPECT_THROW(normalized_rating(Vector::Zero(3), s), std::invalid_argument);
}

TEST(GroupGap, ForcedValues) {
  const auto lp = two_groups();
  EXPECT_DOUBLE_EQ(group_max_rating_gap(lp, rows({{1, 0}, {1, 0}}), "A", "B"), 1.0);
  const double h = std::sqrt(0.5);
  EXPECT_DOUBLE_EQ(group_max_rating_gap(lp, rows({{h, h}}), "A", "B"), 0.0);
  LabeledPoints same;
  same.points = rows({{1, 2}, {1, 2}});
  same.labels = {"A", "B"};
  EXPECT_DOUBLE_EQ(group_max_rating_gap(same, rows({{0, 1}}), "A", "B"), 0.0);
  EXPECT_THROW(group_max_rating_gap(lp, rows({{1, 0}}), "A", "C"), std::invalid_argument);
}

TEST(ProportionGap, ForcedValues) {
  const auto lp = two_groups();
  EXPECT_DOUBLE_EQ(best_rated_proportion_gap(lp, rows({{1, 0}, {1, 0}}), "A", "B"), 1.0);
  EXPECT_DOUBLE_EQ(best_rated_proportion_gap(lp, rows({{1, 0}, {0, 1}}), "A", "B"), 0.0);
  EXPECT_DOUBLE_EQ(best_rated_proportion_gap(lp, rows({{0, 1}}), "A", "B"), -1.0);
}

TEST(ProportionGap, TiesGoToLowestIndex) {
  const auto lp = two_groups();  // consumers 0 and 1 tie for e1
  EXPECT_EQ(best_rating_consumers(lp.points, rows({{1, 0}})), (std::vector<Index>{0}));
}

TEST(Neighborhood, ForcedValues) {
  LabeledPoints base;
  base.points = rows({{1, 1}, {1, -1}});
  base.labels = {"M", "F"};
  const auto eq = neighborhood_creator_bias(base, rows({{1, 0}}), {2});
  EXPECT_DOUBLE_EQ(eq[0].proportion_gap, 0.0);
  EXPECT_DOUBLE_EQ(eq[0].distance_gap, 0.0);

  LabeledPoints allm;
  allm.points = rows({{1, 0}, {0, 1}, {-1, 0}});
  allm.labels = {"M", "M", "M"};
  for (const auto& pt : neighborhood_creator_bias(allm, rows({{1, 0}, {0, 1}}), {1, 2, 3})) {
    EXPECT_DOUBLE_EQ(pt.proportion_gap, 1.0);
    EXPECT_TRUE(std::isnan(pt.distance_gap));
  }
}

TEST(Neighborhood, FullCatalogueMatchesPopulation) {
  std::mt19937_64 rng(2);
  LabeledPoints base;
  base.points = oracle::random_points(rng, 10, 3);
  base.labels = {"M", "M", "F", "M", "F", "M", "M", "F", "M", "M"};  // 7 M, 3 F
  const auto pts = neighborhood_creator_bias(base, oracle::random_profile(rng, 4, 3), {10});
  EXPECT_NEAR(pts[0].proportion_gap, 0.4, 1e-15);
  EXPECT_EQ(pts[0].item_proportion_gaps.size(), 4u);
}

TEST(Neighborhood, RejectsOversizedK) {
  LabeledPoints base;
  base.points = rows({{1, 0}});
  base.labels = {"M"};
  EXPECT_THROW(neighborhood_creator_bias(base, rows({{1, 0}}), {2}), std::invalid_argument);
}

TEST(Properties, LabelSwapAntisymmetry) {
  std::mt19937_64 rng(3);
  for (int t = 0; t < 20; ++t) {
    LabeledPoints lp;
    lp.points = oracle::random_points(rng, 11, 3);
    for (int j = 0; j < 11; ++j) lp.labels.push_back(j % 3 == 0 ? "A" : "B");
    const Matrix s = oracle::random_profile(rng, 5, 3);
    const auto sw = swap_labels(lp, "A", "B");
    EXPECT_EQ(group_max_rating_gap(sw, s, "A", "B"), -group_max_rating_gap(lp, s, "A", "B"));
    EXPECT_EQ(best_rated_proportion_gap(sw, s, "A", "B"),
              -best_rated_proportion_gap(lp, s, "A", "B"));

    LabeledPoints base;
    base.points = oracle::random_points(rng, 12, 3);
    for (int j = 0; j < 12; ++j) base.labels.push_back(j % 2 == 0 ? "M" : "F");
    const auto a = neighborhood_creator_bias(base, s, {2, 6, 12});
    const auto b = neighborhood_creator_bias(swap_labels(base, "M", "F"), s, {2, 6, 12});
    for (std::size_t k = 0; k < a.size(); ++k) {
      EXPECT_EQ(b[k].proportion_gap, -a[k].proportion_gap);
      if (!std::isnan(a[k].distance_gap)) EXPECT_EQ(b[k].distance_gap, -a[k].distance_gap);
    }
  }
}

TEST(Properties, ScaleInvariance) {
  std::mt19937_64 rng(4);
  LabeledPoints lp;
  lp.points = oracle::random_points(rng, 9, 3);
  for (int j = 0; j < 9; ++j) lp.labels.push_back(j < 4 ? "A" : "B");
  const Matrix s = oracle::random_profile(rng, 4, 3);
  for (double g : {0.25, 2.0, 1024.0}) {
    LabeledPoints sc = lp;
    sc.points *= g;
    EXPECT_EQ(group_max_rating_gap(sc, s, "A", "B"), group_max_rating_gap(lp, s, "A", "B"));
    EXPECT_EQ(best_rated_proportion_gap(sc, s, "A", "B"),
              best_rated_proportion_gap(lp, s, "A", "B"));
    for (Index j = 0; j < 9; ++j) {
      EXPECT_EQ(normalized_rating(sc.points.row(j).transpose(), s.row(0).transpose()),
                normalized_rating(lp.points.row(j).transpose(), s.row(0).transpose()));
    }
    LabeledPoints base;
    base.points = lp.points;
    base.labels = {"M", "F", "M", "F", "M", "M", "F", "M", "F"};
    LabeledPoints based = base;
    based.points *= g;
    const auto a = neighborhood_creator_bias(base, s, {3, 9});
    const auto b = neighborhood_creator_bias(based, s, {3, 9});
    for (std::size_t k = 0; k < a.size(); ++k) {
      EXPECT_EQ(a[k].proportion_gap, b[k].proportion_gap);
      EXPECT_EQ(a[k].distance_gap, b[k].distance_gap);
    }
  }
}

TEST(Aggregate, PerRunAndPooled) {
  RunAudit a;
  a.cluster_count = 1;
  a.group_maxima = GroupMaxRatings{{1.0, 0.8}, {0.2}};
  a.max_rating_gap = a.group_maxima->gap();
  RunAudit b;
  b.cluster_count = 3;
  b.group_maxima = GroupMaxRatings{{0.5}, {0.5, 0.1}};
  b.max_rating_gap = b.group_maxima->gap();
  const auto agg = aggregate({a, b});
  EXPECT_DOUBLE_EQ(agg.mean_cluster_count, 2.0);
  EXPECT_EQ(agg.max_cluster_count, 3);
  EXPECT_DOUBLE_EQ(*agg.max_rating_gap_per_run_median, 0.5 * (0.7 + 0.2));
  EXPECT_DOUBLE_EQ(*agg.max_rating_gap_pooled, 0.8 - 0.2);
}
