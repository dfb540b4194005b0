#pragma once

// Oracle upper bound: U trained directly on labeled image embeddings with a
// normalized softmax loss against one unit prototype per class.

#include <cmath>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "indirect/embedding_store.hpp"
#include "indirect/errors.hpp"
#include "indirect/hypersphere.hpp"
#include "indirect/optimizer.hpp"
#include "indirect/random.hpp"
#include "indirect/trainer.hpp"

namespace indirect {

class ClassPrototypes {
 public:
  ClassPrototypes(std::vector<std::string> classes, RowMatrix vectors) : classes_(std::move(classes)) {
    if (static_cast<Eigen::Index>(classes_.size()) != vectors.rows() || classes_.empty()) {
      throw ConfigError("need exactly one prototype per class");
    }
    for (std::size_t k = 0; k < classes_.size(); ++k) {
      if (!index_.emplace(classes_[k], static_cast<int>(k)).second) {
        throw ConfigError("duplicate prototype class '" + classes_[k] + "'");
      }
    }
    vectors_ = normalize_rows(EmbeddingSet(std::move(vectors)));
  }

  std::size_t size() const { return classes_.size(); }
  Eigen::Index dim() const { return vectors_.cols(); }
  const std::vector<std::string>& classes() const { return classes_; }
  const RowMatrix& vectors() const { return vectors_; }

  /// Index of `label`, or -1.
  int index_of(const std::string& label) const {
    const auto it = index_.find(label);
    return it == index_.end() ? -1 : it->second;
  }

 private:
  std::vector<std::string> classes_;
  RowMatrix vectors_;
  std::unordered_map<std::string, int> index_;
};

using OracleConfig = IndirectConfig;

struct OracleFit {
  TransformMatrix transform;
  ClassPrototypes prototypes;
  double final_loss;
  long iterations;
  LossTrace loss_trace;
};

namespace detail {

/// Mean negative log-softmax of v'_i c_j over classes, with v'_i = normalize(v_i U).
/// Fills gradients for U and the (unconstrained) prototype matrix when requested.
inline double oracle_loss_and_gradient(const Eigen::MatrixXd& u, const Eigen::MatrixXd& protos,
                                       const Eigen::MatrixXd& v_norm, const std::vector<int>& targets,
                                       const EmbeddingSet* names, Eigen::MatrixXd* grad_u,
                                       Eigen::MatrixXd* grad_c) {
  const Eigen::Index m = v_norm.rows();
  const Eigen::MatrixXd proj = v_norm * u;
  const Eigen::VectorXd proj_norm = proj.rowwise().norm();
  for (Eigen::Index i = 0; i < m; ++i) {
    if (!(proj_norm[i] > kNormEpsilon)) {
      throw DegenerateError("row " + (names ? names->label_of(i) : std::to_string(i)) +
                            " projects to the zero vector");
    }
  }
  const Eigen::MatrixXd vp = proj.array().colwise() / proj_norm.array();
  Eigen::MatrixXd logits = vp * protos.transpose();

  double total = 0.0;
  for (Eigen::Index i = 0; i < m; ++i) {
    const double top = logits.row(i).maxCoeff();
    logits.row(i).array() -= top;
    const double log_sum = std::log(logits.row(i).array().exp().sum());
    total += log_sum - logits(i, targets[static_cast<std::size_t>(i)]);
    // reuse the row as softmax - onehot for the gradient
    logits.row(i) = (logits.row(i).array() - log_sum).exp().matrix();
    logits(i, targets[static_cast<std::size_t>(i)]) -= 1.0;
  }
  const double scale = 1.0 / static_cast<double>(m);

  if (grad_u || grad_c) {
    const Eigen::MatrixXd d_logits = logits * scale;
    if (grad_c) grad_c->noalias() = d_logits.transpose() * vp;
    if (grad_u) {
      Eigen::MatrixXd d_vp = d_logits * protos;
      const Eigen::VectorXd radial = (d_vp.cwiseProduct(vp)).rowwise().sum();
      d_vp -= (vp.array().colwise() * radial.array()).matrix();
      d_vp.array().colwise() /= proj_norm.array();
      grad_u->noalias() = v_norm.transpose() * d_vp;
    }
  }
  return total * scale;
}

inline std::vector<int> oracle_targets(const EmbeddingSet& images, const LabelSet& labels,
                                       const ClassPrototypes& prototypes) {
  const auto per_row = align_labels(images, labels);
  std::vector<int> targets;
  targets.reserve(per_row.size());
  for (std::size_t i = 0; i < per_row.size(); ++i) {
    const int k = prototypes.index_of(per_row[i]);
    if (k < 0) {
      throw DataError("label '" + per_row[i] + "' of " + images.label_of(static_cast<Eigen::Index>(i)) +
                      " has no prototype");
    }
    targets.push_back(k);
  }
  return targets;
}

}  // namespace detail

inline double oracle_loss(const TransformMatrix& u, const ClassPrototypes& prototypes, const EmbeddingSet& images,
                          const LabelSet& labels) {
  if (images.dim() != u.rows()) throw ConfigError("image dim does not match U");
  if (prototypes.dim() != u.cols()) throw ConfigError("prototype dim does not match U");
  const auto targets = detail::oracle_targets(images, labels, prototypes);
  return detail::oracle_loss_and_gradient(u.values(), prototypes.vectors(), normalize_rows(images), targets, &images,
                                          nullptr, nullptr);
}

/// Joint Adam over U and the prototypes; prototypes are projected back to the
/// unit sphere after every step.
inline OracleFit fit_oracle(const EmbeddingSet& images, const LabelSet& labels, const OracleConfig& config) {
  if (images.count() < 2) throw ConfigError("oracle training needs at least two items");
  if (config.target_dim < 1 || config.target_dim > images.dim()) {
    throw ConfigError("target dim must be in [1, " + std::to_string(images.dim()) + "]");
  }
  if (!(config.init_stddev > 0)) throw ConfigError("init_stddev must be positive");

  std::vector<std::string> classes;
  encode_labels(align_labels(images, labels), &classes);
  SplitMix64 rng(config.seed, Stream::kPrototypeInit);
  const ClassPrototypes initial(classes, gaussian_matrix(static_cast<Eigen::Index>(classes.size()),
                                                          config.target_dim, 1.0, rng));
  const auto targets = detail::oracle_targets(images, labels, initial);
  const Eigen::MatrixXd v_norm = normalize_rows(images);

  TrainingOptions options;
  options.adam.lr = config.lr;
  options.patience = config.patience;
  options.max_iterations = config.max_iterations;

  auto objective = [&](const std::vector<Eigen::MatrixXd>& p, std::vector<Eigen::MatrixXd>& g) {
    return detail::oracle_loss_and_gradient(p[0], p[1], v_norm, targets, &images, &g[0], &g[1]);
  };
  auto renormalize = [](std::vector<Eigen::MatrixXd>& p) {
    for (Eigen::Index j = 0; j < p[1].rows(); ++j) {
      const double n = p[1].row(j).norm();
      if (!(n > kNormEpsilon)) throw DegenerateError("prototype " + std::to_string(j) + " collapsed to zero");
      p[1].row(j) /= n;
    }
  };
  auto out = minimize_adam(
      {initial_transform(images.dim(), config.target_dim, config.seed, config.init_stddev), initial.vectors()},
      objective, options, renormalize);
  return OracleFit{TransformMatrix(std::move(out.best_params[0]), TransformMethod::kOracle, config.seed, out.trace),
                   ClassPrototypes(classes, std::move(out.best_params[1])), out.best_loss, out.iterations,
                   std::move(out.trace)};
}

}  // namespace indirect
