#include <cmath>
#include <numbers>
#include <set>

#include <gtest/gtest.h>

#include "indirect/baselines.hpp"
#include "indirect/metrics.hpp"
#include "support/brute_force.hpp"
#include "support/fixtures.hpp"

namespace indirect {
namespace {

std::vector<char> flags(std::initializer_list<int> v) { return std::vector<char>(v.begin(), v.end()); }

// Points on a line through the origin at the given angles (radians) in the x-y plane.
EmbeddingSet angles(std::initializer_list<double> thetas) {
  RowMatrix rows(static_cast<Eigen::Index>(thetas.size()), 2);
  Eigen::Index i = 0;
  for (double t : thetas) rows.row(i++) << std::cos(t), std::sin(t);
  return EmbeddingSet(rows);
}

void expect_same(const RetrievalScores& fast, const testing::BruteForceScores& slow) {
  EXPECT_EQ(fast.precision_at_1, slow.precision_at_1);
  EXPECT_EQ(fast.r_precision, slow.r_precision);
  EXPECT_EQ(fast.map_at_r, slow.map_at_r);
  EXPECT_EQ(fast.map, slow.map);
  EXPECT_EQ(fast.mrr, slow.mrr);
  EXPECT_EQ(fast.queries, slow.queries);
  EXPECT_EQ(fast.skipped, slow.skipped);
}

TEST(RankNeighbors, OrdersByCosine) {
  RowMatrix rows(3, 2);
  rows << 1, 0, 0.9, std::sqrt(1 - 0.81), 0.1, std::sqrt(1 - 0.01);
  const auto ranked = rank_neighbors(0, EmbeddingSet(rows));
  EXPECT_EQ(ranked.neighbors, (std::vector<Eigen::Index>{1, 2}));
}

TEST(RankNeighbors, TiesBreakByIndexAndQueryIsExcluded) {
  RowMatrix rows(4, 2);
  rows << 1, 0, 0, 1, 0, 1, 0, 1;
  const auto ranked = rank_neighbors(2, EmbeddingSet(rows));
  EXPECT_EQ(ranked.neighbors, (std::vector<Eigen::Index>{1, 3, 0}));
  for (int k = 0; k < 5; ++k) EXPECT_EQ(rank_neighbors(2, EmbeddingSet(rows)).neighbors, ranked.neighbors);
}

TEST(RankNeighbors, ScaleInvariantAndDegenerateRowsRejected) {
  SplitMix64 rng(1);
  RowMatrix rows = testing::gaussian_rows(20, 5, rng);
  const auto base = rank_neighbors(3, EmbeddingSet(rows)).neighbors;
  for (Eigen::Index i = 0; i < rows.rows(); ++i) rows.row(i) *= std::ldexp(1.0, static_cast<int>(rng.below(20)) - 10);
  EXPECT_EQ(rank_neighbors(3, EmbeddingSet(rows)).neighbors, base);

  rows.row(5).setZero();
  EXPECT_THROW(rank_neighbors(3, EmbeddingSet(rows)), DegenerateError);
  EXPECT_THROW(rank_neighbors(0, EmbeddingSet(RowMatrix::Ones(1, 2))), ConfigError);
}

TEST(ScoreRanking, HandCases) {
  // R = 2, relevant at ranks 2 and 4
  auto s = score_ranking(flags({0, 1, 0, 1}), 2);
  EXPECT_DOUBLE_EQ(s.map_at_r, 0.25);
  EXPECT_DOUBLE_EQ(s.r_precision, 0.5);
  EXPECT_EQ(s.precision_at_1, 0.0);
  EXPECT_DOUBLE_EQ(s.reciprocal_rank, 0.5);
  EXPECT_DOUBLE_EQ(s.average_precision, (0.5 + 0.5) / 2);

  s = score_ranking(flags({1, 1, 1, 0, 0}), 3);
  EXPECT_EQ(s.map_at_r, 1.0);
  EXPECT_EQ(s.r_precision, 1.0);
  EXPECT_EQ(s.average_precision, 1.0);
  EXPECT_EQ(s.reciprocal_rank, 1.0);

  s = score_ranking(flags({0, 0, 1, 0}), 1);
  EXPECT_DOUBLE_EQ(s.reciprocal_rank, 1.0 / 3);
}

TEST(ScoreRanking, MapCanExceedMrr) {
  // AP over all relevant items is not bounded by the reciprocal rank
  const auto s = score_ranking(flags({0, 1, 1}), 2);
  EXPECT_DOUBLE_EQ(s.average_precision, (1.0 / 2 + 2.0 / 3) / 2);
  EXPECT_GT(s.average_precision, s.reciprocal_rank);
}

TEST(Retrieval, TwoTightClustersArePerfect) {
  const auto e = angles({0.0, 0.01, 0.02, 1.5, 1.51, 1.52});
  const auto s = evaluate_retrieval(e, std::vector<int>{0, 0, 0, 1, 1, 1});
  EXPECT_EQ(s.precision_at_1, 1.0);
  EXPECT_EQ(s.map_at_r, 1.0);
  EXPECT_EQ(s.r_precision, 1.0);
  EXPECT_EQ(s.map, 1.0);
  EXPECT_EQ(s.mrr, 1.0);
}

TEST(Retrieval, AdversarialLabelsScoreZeroAtOne) {
  // nearest neighbors pair up (0,1), (2,3); labels split every pair
  const auto e = angles({0.0, 0.01, 1.5, 1.51});
  EXPECT_EQ(evaluate_retrieval(e, std::vector<int>{0, 1, 0, 1}).precision_at_1, 0.0);
}

TEST(Retrieval, FirstRelevantAtRankThree) {
  // each query sees two other-class items before its single partner
  const auto e = angles({0.0, 0.1, 0.2, 0.3, 1.4, 1.5, 1.6, 1.7});
  const std::vector<int> labels = {0, 1, 2, 0, 1, 2, 0, 1};
  const auto s = evaluate_retrieval(e, labels);
  expect_same(s, testing::brute_force_retrieval(e.data(), labels));
}

TEST(Retrieval, SingletonQueriesAreSkippedAndCounted) {
  const auto e = angles({0.0, 0.1, 0.2, 1.0});
  const auto s = evaluate_retrieval(e, std::vector<int>{0, 0, 1, 2});
  EXPECT_EQ(s.skipped, 2u);
  EXPECT_EQ(s.queries, 2u);
  EXPECT_THROW(evaluate_retrieval(e, std::vector<int>{0, 1, 2, 3}), DataError);
}

TEST(Retrieval, LabelSetOverloadsAlignById) {
  RowMatrix rows(4, 2);
  rows << 1, 0, 1, 0.01, 0, 1, 0.01, 1;
  const EmbeddingSet e(rows, std::vector<std::string>{"a", "b", "c", "d"});
  const LabelSet labels({{"d", "y"}, {"c", "y"}, {"b", "x"}, {"a", "x"}});
  EXPECT_EQ(precision_at_1(e, labels), 1.0);
  EXPECT_EQ(map_at_r(e, labels), 1.0);
  EXPECT_EQ(r_precision(e, labels), 1.0);
  EXPECT_EQ(mean_average_precision(e, labels), 1.0);
  EXPECT_EQ(mean_reciprocal_rank(e, labels), 1.0);
  EXPECT_THROW(precision_at_1(e, LabelSet({{"a", "x"}, {"b", "x"}, {"c", "y"}, {"z", "y"}})), DataError);
}

TEST(Retrieval, ExhaustiveLabelingsOfSixItems) {
  SplitMix64 rng(2);
  const EmbeddingSet e(testing::gaussian_rows(6, 3, rng));
  std::vector<int> labels(6, 0);
  int checked = 0;
  for (int code = 0; code < 729; ++code) {
    int c = code;
    for (auto& l : labels) {
      l = c % 3;
      c /= 3;
    }
    std::map<int, int> sizes;
    for (int l : labels) ++sizes[l];
    if (std::none_of(sizes.begin(), sizes.end(), [](const auto& kv) { return kv.second > 1; })) continue;
    expect_same(evaluate_retrieval(e, labels), testing::brute_force_retrieval(e.data(), labels));
    ++checked;
  }
  EXPECT_GT(checked, 700);
}

TEST(Retrieval, RandomInstancesMatchBruteForceExactly) {
  SplitMix64 rng(3);
  for (int trial = 0; trial < 300; ++trial) {
    const auto m = static_cast<Eigen::Index>(2 + rng.below(31));
    const auto r = static_cast<Eigen::Index>(1 + rng.below(6));
    const int classes = 1 + static_cast<int>(rng.below(5));
    RowMatrix rows = testing::gaussian_rows(m, r, rng);
    // duplicate rows force exact similarity ties
    if (m > 3 && trial % 3 == 0) rows.row(m - 1) = rows.row(0);
    std::vector<int> labels(static_cast<std::size_t>(m));
    for (auto& l : labels) l = static_cast<int>(rng.below(static_cast<std::uint64_t>(classes)));
    std::map<int, int> sizes;
    for (int l : labels) ++sizes[l];
    if (std::none_of(sizes.begin(), sizes.end(), [](const auto& kv) { return kv.second > 1; })) continue;
    const EmbeddingSet e(rows);
    expect_same(evaluate_retrieval(e, labels, 1 + trial % 4), testing::brute_force_retrieval(rows, labels));
  }
}

TEST(Retrieval, PerQueryInvariants) {
  SplitMix64 rng(4);
  for (int trial = 0; trial < 200; ++trial) {
    const auto m = static_cast<Eigen::Index>(3 + rng.below(30));
    const EmbeddingSet e(testing::gaussian_rows(m, 4, rng));
    std::vector<int> labels(static_cast<std::size_t>(m));
    for (auto& l : labels) l = static_cast<int>(rng.below(3));
    for (Eigen::Index q = 0; q < m; ++q) {
      const long r = std::count(labels.begin(), labels.end(), labels[static_cast<std::size_t>(q)]) - 1;
      if (r < 1) continue;
      const auto s = score_ranking(rank_neighbors(q, e, &labels).relevant, r);
      EXPECT_LE(0.0, s.map_at_r);
      EXPECT_LE(s.map_at_r, s.r_precision);
      EXPECT_LE(s.r_precision, 1.0);
      EXPECT_LE(s.map_at_r, s.average_precision);
      EXPECT_LE(s.average_precision, 1.0);
      EXPECT_LE(s.precision_at_1, s.reciprocal_rank);
      EXPECT_LE(s.reciprocal_rank, 1.0);
    }
  }
}

TEST(Retrieval, ThreadCountDoesNotChangeResults) {
  const auto e = random_unit_embeddings(300, 8, 5);
  std::vector<int> labels(300);
  for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = static_cast<int>(i % 7);
  const auto one = evaluate_retrieval(e, labels, 1);
  const auto many = evaluate_retrieval(e, labels, 8);
  EXPECT_EQ(one.map_at_r, many.map_at_r);
  EXPECT_EQ(one.map, many.map);
  EXPECT_EQ(one.mrr, many.mrr);
}

TEST(Retrieval, RandomEmbeddingsSitAtChance) {
  std::vector<int> labels(1000);
  for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = static_cast<int>(i % 5);
  // each query's nearest neighbor is same-class with probability 199/999
  const double p = 199.0 / 999.0;
  const double sigma = std::sqrt(p * (1 - p) / 1000.0);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto s = evaluate_retrieval(random_unit_embeddings(1000, 16, seed), labels);
    EXPECT_NEAR(s.precision_at_1, p, 3 * sigma) << "seed " << seed;
  }
}

TEST(KMeans, SeparatesAntipodalClusters) {
  const auto e = angles({0.0, 0.02, -0.02, std::numbers::pi, std::numbers::pi + 0.02, std::numbers::pi - 0.02});
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto km = kmeans(e, 2, seed);
    EXPECT_EQ(nmi(km.assignments, {0, 0, 0, 1, 1, 1}), 1.0);
    EXPECT_TRUE(km.converged);
  }
}

TEST(KMeans, KEqualsMGivesSingletons) {
  const auto e = random_unit_embeddings(12, 4, 6);
  const auto km = kmeans(e, 12, 0);
  EXPECT_EQ(std::set<int>(km.assignments.begin(), km.assignments.end()).size(), 12u);
  EXPECT_NEAR(km.objective.back(), 0.0, 1e-12);
  EXPECT_THROW(kmeans(e, 13, 0), ConfigError);
  EXPECT_THROW(kmeans(e, 0, 0), ConfigError);
}

TEST(KMeans, ObjectiveNeverIncreasesAndSeedsAreDeterministic) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto e = random_unit_embeddings(400, 6, 100 + seed);
    const auto km = kmeans(e, 8, seed);
    for (std::size_t t = 1; t < km.objective.size(); ++t) EXPECT_LE(km.objective[t], km.objective[t - 1] + 1e-9);
    EXPECT_EQ(km.assignments, kmeans(e, 8, seed).assignments);
    EXPECT_LE(km.iterations, kKMeansMaxIterations);
  }
}

TEST(KMeans, DuplicatePointsStillFillEveryCluster) {
  RowMatrix rows(6, 2);
  rows << 1, 0, 1, 0, 1, 0, 1, 0, 0, 1, 0, 1;
  const auto km = kmeans(EmbeddingSet(rows), 3, 0);
  EXPECT_EQ(std::set<int>(km.assignments.begin(), km.assignments.end()).size(), 3u);
}

TEST(PartitionScores, IdenticalAndPerfectTables) {
  const std::vector<int> a = {0, 0, 1, 1, 2, 2, 2};
  EXPECT_NEAR(nmi(a, a), 1.0, 1e-12);
  EXPECT_NEAR(ami(a, a), 1.0, 1e-12);
  // relabeling is irrelevant
  EXPECT_NEAR(nmi({5, 5, 9, 9}, {0, 0, 1, 1}), 1.0, 1e-12);
  EXPECT_NEAR(ami({5, 5, 9, 9}, {0, 0, 1, 1}), 1.0, 1e-12);
}

TEST(PartitionScores, DegenerateEntropies) {
  EXPECT_EQ(nmi({0, 0, 0}, {4, 4, 4}), 1.0);
  EXPECT_EQ(ami({0, 0, 0}, {4, 4, 4}), 1.0);
  EXPECT_EQ(nmi({0, 0, 0}, {0, 1, 2}), 0.0);
  EXPECT_EQ(ami({0, 1, 2}, {2, 0, 1}), 1.0);
  EXPECT_THROW(nmi({0}, {0, 1}), ConfigError);
}

TEST(PartitionScores, MatchPermutationReference) {
  SplitMix64 rng(7);
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t n = 3 + rng.below(5);
    std::vector<int> a(n), b(n);
    for (auto& x : a) x = static_cast<int>(rng.below(3));
    for (auto& x : b) x = static_cast<int>(rng.below(3));
    const double mi = testing::brute_mutual_information(a, b);
    const double h = 0.5 * (testing::brute_entropy(a) + testing::brute_entropy(b));
    const double emi = testing::brute_expected_mutual_information(a, b);
    if (h > 0) EXPECT_NEAR(nmi(a, b), mi / h, 1e-12);
    if (h - emi > 1e-9) EXPECT_NEAR(ami(a, b), (mi - emi) / (h - emi), 1e-9);
  }
}

TEST(PartitionScores, NmiDominatesAmi) {
  SplitMix64 rng(8);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t n = 2 + rng.below(60);
    std::vector<int> a(n), b(n);
    const auto ka = 1 + rng.below(6), kb = 1 + rng.below(6);
    for (auto& x : a) x = static_cast<int>(rng.below(ka));
    for (auto& x : b) x = static_cast<int>(rng.below(kb));
    EXPECT_GE(nmi(a, b) + 1e-12, ami(a, b));
    EXPECT_LE(ami(a, b), 1.0 + 1e-12);
    EXPECT_GE(nmi(a, b), 0.0);
    EXPECT_LE(nmi(a, b), 1.0);
  }
}

TEST(PartitionScores, IndependentPartitionsHaveZeroAmi) {
  SplitMix64 rng(9);
  std::vector<int> a(10'000), b(10'000);
  for (auto& x : a) x = static_cast<int>(rng.below(10));
  for (auto& x : b) x = static_cast<int>(rng.below(10));
  EXPECT_LT(std::abs(ami(a, b)), 0.02);
}

TEST(Clustering, TightClustersScorePerfectly) {
  SplitMix64 rng(10);
  RowMatrix rows(60, 8);
  std::vector<int> labels(60);
  const Eigen::MatrixXd q = testing::random_orthogonal(8, rng);
  for (Eigen::Index i = 0; i < 60; ++i) {
    labels[static_cast<std::size_t>(i)] = static_cast<int>(i % 3);
    rows.row(i) = q.col(i % 3).transpose();
    for (Eigen::Index j = 0; j < 8; ++j) rows(i, j) += 0.01 * rng.normal();
  }
  const auto s = evaluate_clustering(EmbeddingSet(rows), labels, 0);
  EXPECT_NEAR(s.nmi, 1.0, 1e-12);
  EXPECT_NEAR(s.ami, 1.0, 1e-12);
}

}  // namespace
}  // namespace indirect
