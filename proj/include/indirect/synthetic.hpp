#pragma once

// Synthetic notion datasets: classes differ only inside a low-dimensional
// notion subspace, while images also carry large nuisance components outside
// it. Prompts live in the notion subspace plus a shared offset direction.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>
#include <Eigen/QR>

#include "indirect/embedding_store.hpp"
#include "indirect/errors.hpp"
#include "indirect/random.hpp"

namespace indirect {

struct SyntheticConfig {
  Eigen::Index dim = 64;
  Eigen::Index notion_dim = 4;
  int classes = 5;
  Eigen::Index images_per_class = 30;
  Eigen::Index prompts = 40;
  double class_spread = 0.25;    // within-class noise inside the notion subspace
  double nuisance_scale = 2.0;   // norm scale of the off-notion image component
  double text_offset = 1.0;      // shared prompt direction outside the notion
  double text_noise = 0.02;      // isotropic prompt noise
  std::uint64_t seed = 0;
};

struct SyntheticDataset {
  EmbeddingSet texts;
  EmbeddingSet images;
  LabelSet labels;
  Eigen::MatrixXd notion_basis;  // dim x notion_dim, orthonormal columns
};

inline std::string padded_id(const char* prefix, Eigen::Index i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s-%04ld", prefix, static_cast<long>(i));
  return buf;
}

inline SyntheticDataset make_synthetic_dataset(const SyntheticConfig& c) {
  if (c.notion_dim < 1 || c.notion_dim + 2 > c.dim) throw ConfigError("need 1 <= notion_dim <= dim - 2");
  if (c.classes < 2 || c.images_per_class < 1 || c.prompts < 1) throw ConfigError("synthetic sizes must be positive");
  SplitMix64 rng(c.seed);
  const auto gaussian = [&](Eigen::Index rows, Eigen::Index cols) {
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
      for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = rng.normal();
    return m;
  };
  const Eigen::HouseholderQR<Eigen::MatrixXd> qr(gaussian(c.dim, c.dim));
  const Eigen::MatrixXd q = qr.householderQ();
  const Eigen::Index k = c.notion_dim;
  const Eigen::Index rest = c.dim - k - 1;
  const Eigen::MatrixXd notion = q.leftCols(k);
  const Eigen::VectorXd offset = q.col(k);
  const Eigen::MatrixXd nuisance = q.rightCols(rest);

  Eigen::MatrixXd centers = gaussian(c.classes, k);
  for (Eigen::Index j = 0; j < centers.rows(); ++j) centers.row(j).normalize();

  const Eigen::Index m = c.images_per_class * c.classes;
  RowMatrix images(m, c.dim);
  std::vector<std::string> image_ids;
  std::vector<std::pair<std::string, std::string>> labels;
  for (Eigen::Index i = 0; i < m; ++i) {
    const int cls = static_cast<int>(i % c.classes);
    const Eigen::VectorXd inside = centers.row(cls).transpose() + c.class_spread * gaussian(k, 1);
    const Eigen::VectorXd outside = gaussian(rest, 1) * (c.nuisance_scale / std::sqrt(static_cast<double>(rest)));
    images.row(i) = (notion * inside + nuisance * outside).transpose();
    image_ids.push_back(padded_id("img", i));
    labels.emplace_back(image_ids.back(), "class-" + std::to_string(cls));
  }

  RowMatrix texts(c.prompts, c.dim);
  std::vector<std::string> text_ids;
  for (Eigen::Index j = 0; j < c.prompts; ++j) {
    const int cls = static_cast<int>(j % c.classes);
    const Eigen::VectorXd inside = centers.row(cls).transpose() + c.class_spread * gaussian(k, 1);
    texts.row(j) = (notion * inside + c.text_offset * offset + c.text_noise * gaussian(c.dim, 1)).transpose();
    text_ids.push_back(padded_id("prompt", j));
  }
  return SyntheticDataset{EmbeddingSet(std::move(texts), std::move(text_ids)),
                          EmbeddingSet(std::move(images), std::move(image_ids)), LabelSet(std::move(labels)), notion};
}

struct SyntheticFiles {
  std::string texts;
  std::string images;
  std::string labels;
};

/// Writes texts.emb, images.emb and labels.tsv into `dir`, creating it if needed.
inline SyntheticFiles write_synthetic_dataset(const SyntheticDataset& d, const std::string& dir) {
  std::filesystem::create_directories(dir);
  const std::filesystem::path base(dir);
  SyntheticFiles f{(base / "texts.emb").string(), (base / "images.emb").string(), (base / "labels.tsv").string()};
  write_embeddings_file(d.texts, f.texts);
  write_embeddings_file(d.images, f.images);
  write_labels_file(d.labels, f.labels);
  return f;
}

}  // namespace indirect
