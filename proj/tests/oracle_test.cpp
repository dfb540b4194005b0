#include <cmath>

#include <gtest/gtest.h>

#include "indirect/metrics.hpp"
#include "indirect/oracle.hpp"
#include "support/fixtures.hpp"

namespace indirect {
namespace {

using Pairs = std::vector<std::pair<std::string, std::string>>;

TransformMatrix identity(Eigen::Index r) { return TransformMatrix(Eigen::MatrixXd::Identity(r, r), TransformMethod::kOracle); }

// Two Gaussian clusters around orthogonal centers; ids i#, labels c0/c1.
std::pair<EmbeddingSet, LabelSet> two_clusters(Eigen::Index per_class, Eigen::Index r, std::uint64_t seed) {
  SplitMix64 rng(seed);
  const Eigen::MatrixXd q = testing::random_orthogonal(r, rng);
  RowMatrix rows(2 * per_class, r);
  for (Eigen::Index i = 0; i < rows.rows(); ++i) {
    rows.row(i) = 3.0 * q.col(i % 2).transpose();
    for (Eigen::Index j = 0; j < r; ++j) rows(i, j) += 0.3 * rng.normal();
  }
  return {EmbeddingSet(rows, testing::row_ids(rows.rows())), testing::round_robin_labels(rows.rows(), 2)};
}

TEST(OracleLoss, SingleClassIsZero) {
  SplitMix64 rng(1);
  const EmbeddingSet v(testing::gaussian_rows(5, 3, rng), testing::row_ids(5));
  const ClassPrototypes protos({"c0"}, RowMatrix::Ones(1, 3));
  EXPECT_EQ(oracle_loss(identity(3), protos, v, testing::round_robin_labels(5, 1)), 0.0);
}

TEST(OracleLoss, TwoClassHandValue) {
  RowMatrix row(1, 2);
  row << 1, 0;
  RowMatrix c(2, 2);
  c << 1, 0, 0, 1;
  const double loss = oracle_loss(identity(2), ClassPrototypes({"a", "b"}, c),
                                  EmbeddingSet(row, std::vector<std::string>{"x"}), LabelSet(Pairs{{"x", "a"}}));
  EXPECT_NEAR(loss, -std::log(std::exp(1.0) / (std::exp(1.0) + 1.0)), 1e-15);
  EXPECT_NEAR(loss, 0.31326, 1e-5);
}

TEST(OracleLoss, OrderAndScaleInvariant) {
  SplitMix64 rng(2);
  RowMatrix rows = testing::gaussian_rows(12, 6, rng);
  const auto ids = testing::row_ids(12);
  const auto labels = testing::round_robin_labels(12, 3);
  const TransformMatrix u(gaussian_matrix(6, 3, 0.1, rng), TransformMethod::kOracle);
  const ClassPrototypes protos({"c0", "c1", "c2"}, testing::gaussian_rows(3, 3, rng));
  const double base = oracle_loss(u, protos, EmbeddingSet(rows, ids), labels);

  RowMatrix reversed = rows.colwise().reverse();
  std::vector<std::string> reversed_ids(ids.rbegin(), ids.rend());
  EXPECT_NEAR(oracle_loss(u, protos, EmbeddingSet(reversed, reversed_ids), labels), base, 1e-14);

  for (Eigen::Index i = 0; i < rows.rows(); ++i) rows.row(i) *= 0.01 + 10 * rng.uniform();
  EXPECT_NEAR(oracle_loss(u, protos, EmbeddingSet(rows, ids), labels), base, 1e-13);
}

TEST(OracleLoss, UnknownLabelIsNamed) {
  RowMatrix rows = RowMatrix::Identity(2, 2);
  const EmbeddingSet v(rows, std::vector<std::string>{"img-1", "img-2"});
  const ClassPrototypes protos({"a"}, RowMatrix::Ones(1, 2));
  try {
    oracle_loss(identity(2), protos, v, LabelSet({{"img-1", "a"}, {"img-2", "zebra"}}));
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("img-2"), std::string::npos);
  }
}

TEST(OracleLoss, GradientMatchesCentralDifferences) {
  SplitMix64 rng(3);
  const Eigen::MatrixXd v = normalize_rows(EmbeddingSet(testing::gaussian_rows(10, 7, rng)));
  const std::vector<int> targets = {0, 1, 2, 0, 1, 2, 0, 1, 2, 0};
  const Eigen::MatrixXd u = gaussian_matrix(7, 4, 0.3, rng);
  const Eigen::MatrixXd c = gaussian_matrix(3, 4, 1.0, rng);
  Eigen::MatrixXd gu, gc;
  detail::oracle_loss_and_gradient(u, c, v, targets, nullptr, &gu, &gc);
  const auto du = testing::central_difference(
      [&](const Eigen::MatrixXd& x) { return detail::oracle_loss_and_gradient(x, c, v, targets, nullptr, nullptr, nullptr); },
      u, 1e-6);
  const auto dc = testing::central_difference(
      [&](const Eigen::MatrixXd& x) { return detail::oracle_loss_and_gradient(u, x, v, targets, nullptr, nullptr, nullptr); },
      c, 1e-6);
  EXPECT_LT(testing::max_relative_error(gu, du), 1e-5);
  EXPECT_LT(testing::max_relative_error(gc, dc), 1e-5);
}

TEST(FitOracle, SeparatesTwoClusters) {
  const auto [images, labels] = two_clusters(40, 16, 4);
  OracleConfig config;
  config.target_dim = 4;
  const auto fit = fit_oracle(images, labels, config);
  const auto transformed = transform_images(images, fit.transform);
  EXPECT_EQ(precision_at_1(transformed, labels), 1.0);
  EXPECT_LE(fit.final_loss, fit.loss_trace.front().second);
  EXPECT_NEAR(oracle_loss(fit.transform, fit.prototypes, images, labels), fit.final_loss, 1e-12);
  EXPECT_EQ(fit.transform.method(), TransformMethod::kOracle);
}

TEST(FitOracle, PrototypesStayOnTheSphere) {
  const auto [images, labels] = two_clusters(10, 8, 5);
  OracleConfig config;
  config.target_dim = 3;
  config.max_iterations = 50;
  const auto fit = fit_oracle(images, labels, config);
  for (Eigen::Index j = 0; j < fit.prototypes.vectors().rows(); ++j)
    EXPECT_NEAR(fit.prototypes.vectors().row(j).norm(), 1.0, 1e-9);
  EXPECT_EQ(fit.prototypes.classes(), (std::vector<std::string>{"c0", "c1"}));
}

TEST(FitOracle, OrthogonalSingletonsApproachSimplexBound) {
  // With unit logits scale the best C-class configuration is a regular simplex,
  // giving loss log(1 + (C - 1) exp(-C / (C - 1))) per item.
  const int classes = 4;
  RowMatrix rows = RowMatrix::Identity(classes, 8);
  const EmbeddingSet images(rows, testing::row_ids(classes));
  const auto labels = testing::round_robin_labels(classes, classes);
  OracleConfig config;
  config.target_dim = classes;
  const auto fit = fit_oracle(images, labels, config);
  const double bound = std::log(1.0 + (classes - 1) * std::exp(-classes / (classes - 1.0)));
  EXPECT_GE(fit.final_loss, bound - 1e-9);
  EXPECT_LT(fit.final_loss, bound + 1e-2);
}

TEST(FitOracle, DeterministicPerSeed) {
  const auto [images, labels] = two_clusters(8, 6, 6);
  OracleConfig config;
  config.target_dim = 2;
  config.max_iterations = 100;
  const auto a = fit_oracle(images, labels, config);
  const auto b = fit_oracle(images, labels, config);
  EXPECT_EQ(a.loss_trace, b.loss_trace);
  config.seed = 1;
  EXPECT_NE(fit_oracle(images, labels, config).loss_trace, a.loss_trace);
}

TEST(FitOracle, RejectsBadInputs) {
  OracleConfig config;
  config.target_dim = 2;
  EXPECT_THROW(fit_oracle(EmbeddingSet(RowMatrix::Ones(1, 3), std::vector<std::string>{"a"}), LabelSet(Pairs{{"a", "x"}}),
                          config),
               ConfigError);
  const auto [images, labels] = two_clusters(3, 4, 7);
  config.target_dim = 5;
  EXPECT_THROW(fit_oracle(images, labels, config), ConfigError);
  config.target_dim = 2;
  EXPECT_THROW(fit_oracle(images, testing::round_robin_labels(5, 2), config), DataError);
}

}  // namespace
}  // namespace indirect
