#pragma once

// Learns U by minimizing the mean spherical distance between each normalized
// text embedding t and its reconstruction normalize(normalize(t U) U^T).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "indirect/embedding_store.hpp"
#include "indirect/errors.hpp"
#include "indirect/hypersphere.hpp"
#include "indirect/optimizer.hpp"
#include "indirect/random.hpp"

namespace indirect {

/// Rows whose cosine to their reconstruction is within this of +-1 get zero
/// gradient (arccos has unbounded slope there).
inline constexpr double kCosineGuard = 1e-7;

struct IndirectConfig {
  Eigen::Index target_dim = 128;
  double lr = 0.01;
  long patience = 100;
  long max_iterations = 100'000;
  std::uint64_t seed = 0;
  double init_stddev = 0.1;
};

struct FitResult {
  TransformMatrix transform;
  double final_loss;  // loss of the returned parameters (the best one observed)
  long iterations;
  LossTrace loss_trace;
};

/// U with i.i.d. N(0, stddev^2) entries; the InDiReCT initialization.
inline Eigen::MatrixXd initial_transform(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed,
                                         double stddev = 0.1) {
  SplitMix64 rng(seed, Stream::kTransformInit);
  return gaussian_matrix(rows, cols, stddev, rng);
}

namespace detail {

struct ReconstructionPass {
  Eigen::MatrixXd projected;      // t'_i rows, n x r'
  Eigen::VectorXd projected_norm; // ||t_i U||
  Eigen::MatrixXd recon;          // t_i^recon rows, n x r
  Eigen::VectorXd recon_norm;     // ||t'_i U^T||
  Eigen::VectorXd cosine;         // clamped t_i . t_i^recon
};

inline ReconstructionPass reconstruction_pass(const Eigen::MatrixXd& u, const Eigen::MatrixXd& t_norm,
                                              const EmbeddingSet* named_rows = nullptr) {
  ReconstructionPass pass;
  const auto n = t_norm.rows();
  const auto name = [&](Eigen::Index i) {
    return named_rows ? named_rows->label_of(i) : "#" + std::to_string(i);
  };
  pass.projected = t_norm * u;
  pass.projected_norm = pass.projected.rowwise().norm();
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!(pass.projected_norm[i] > kNormEpsilon)) {
      throw DegenerateError("text embedding " + name(i) + " lies in the kernel of U");
    }
    pass.projected.row(i) /= pass.projected_norm[i];
  }
  pass.recon = pass.projected * u.transpose();
  pass.recon_norm = pass.recon.rowwise().norm();
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!(pass.recon_norm[i] > kNormEpsilon)) {
      throw DegenerateError("reconstruction of text embedding " + name(i) + " has zero norm");
    }
    pass.recon.row(i) /= pass.recon_norm[i];
  }
  pass.cosine = (t_norm.cwiseProduct(pass.recon)).rowwise().sum();
  for (Eigen::Index i = 0; i < n; ++i) pass.cosine[i] = std::clamp(pass.cosine[i], -1.0, 1.0);
  return pass;
}

inline double mean_arccos(const Eigen::VectorXd& cosine) {
  double sum = 0.0;
  for (Eigen::Index i = 0; i < cosine.size(); ++i) sum += std::acos(cosine[i]);
  return sum / static_cast<double>(cosine.size());
}

/// Loss and dL/dU for already-normalized rows.
inline double loss_and_gradient(const Eigen::MatrixXd& u, const Eigen::MatrixXd& t_norm, Eigen::MatrixXd& grad,
                                const EmbeddingSet* named_rows = nullptr) {
  const auto pass = reconstruction_pass(u, t_norm, named_rows);
  const auto n = t_norm.rows();

  // dL/dc_i = -1 / (n sqrt(1 - c_i^2)), zero inside the guard band.
  Eigen::VectorXd d_cos(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double c = pass.cosine[i];
    d_cos[i] = std::abs(c) >= 1.0 - kCosineGuard ? 0.0 : -1.0 / (static_cast<double>(n) * std::sqrt(1.0 - c * c));
  }

  // q = y / ||y||:  dL/dy = (g - (g.q) q) / ||y||  with g = dL/dq = dL/dc * t.
  Eigen::MatrixXd d_recon = t_norm.array().colwise() * d_cos.array();
  const Eigen::VectorXd gq = (d_recon.cwiseProduct(pass.recon)).rowwise().sum();
  d_recon.array() -= pass.recon.array().colwise() * gq.array();
  d_recon.array().colwise() /= pass.recon_norm.array();

  // y = p U^T contributes dY^T P to dL/dU and dY U to dL/dp.
  grad.noalias() = d_recon.transpose() * pass.projected;
  Eigen::MatrixXd d_proj = d_recon * u;

  // p = z / ||z||, z = t U.
  const Eigen::VectorXd gp = (d_proj.cwiseProduct(pass.projected)).rowwise().sum();
  d_proj.array() -= pass.projected.array().colwise() * gp.array();
  d_proj.array().colwise() /= pass.projected_norm.array();
  grad.noalias() += t_norm.transpose() * d_proj;

  return mean_arccos(pass.cosine);
}

inline void check_shapes(const TransformMatrix& u, const EmbeddingSet& texts) {
  if (texts.dim() != u.rows()) {
    throw ConfigError("text embedding dim " + std::to_string(texts.dim()) + " does not match transform rows " +
                      std::to_string(u.rows()));
  }
}

}  // namespace detail

/// Mean spherical distance between normalized rows of `texts` and their
/// reconstructions through U. In [0, pi].
inline double indirect_loss(const TransformMatrix& u, const EmbeddingSet& texts) {
  detail::check_shapes(u, texts);
  const Eigen::MatrixXd t_norm = normalize_rows(texts);
  return detail::mean_arccos(detail::reconstruction_pass(u.values(), t_norm, &texts).cosine);
}

/// Analytic dL/dU (r x r') of indirect_loss.
inline Eigen::MatrixXd indirect_loss_gradient(const TransformMatrix& u, const EmbeddingSet& texts) {
  detail::check_shapes(u, texts);
  const Eigen::MatrixXd t_norm = normalize_rows(texts);
  Eigen::MatrixXd grad(u.rows(), u.cols());
  detail::loss_and_gradient(u.values(), t_norm, grad, &texts);
  return grad;
}

/// Fits U with full-batch Adam from a seeded N(0, init_stddev^2) start and
/// returns the parameters with the lowest observed loss.
inline FitResult fit_indirect(const EmbeddingSet& texts, const IndirectConfig& config) {
  if (config.target_dim < 1 || config.target_dim > texts.dim()) {
    throw ConfigError("target dim must be in [1, " + std::to_string(texts.dim()) + "], got " +
                      std::to_string(config.target_dim));
  }
  if (!(config.init_stddev > 0)) throw ConfigError("init_stddev must be positive");

  const Eigen::MatrixXd t_norm = normalize_rows(texts);
  TrainingOptions options;
  options.adam.lr = config.lr;
  options.patience = config.patience;
  options.max_iterations = config.max_iterations;

  auto objective = [&](const std::vector<Eigen::MatrixXd>& params, std::vector<Eigen::MatrixXd>& grads) {
    return detail::loss_and_gradient(params[0], t_norm, grads[0], &texts);
  };
  auto outcome = minimize_adam({initial_transform(texts.dim(), config.target_dim, config.seed, config.init_stddev)},
                               objective, options);
  return FitResult{
      TransformMatrix(std::move(outcome.best_params[0]), TransformMethod::kIndirect, config.seed, outcome.trace),
      outcome.best_loss, outcome.iterations, std::move(outcome.trace)};
}

}  // namespace indirect
