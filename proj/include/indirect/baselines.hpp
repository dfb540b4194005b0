#pragma once

// Non-InDiReCT embedding producers used as comparison points: PCA, a linear
// autoencoder, a small nonlinear autoencoder, an untrained random transform,
// and random points on the unit hypersphere.

#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>
#include <Eigen/SVD>

#include "indirect/embedding_store.hpp"
#include "indirect/errors.hpp"
#include "indirect/hypersphere.hpp"
#include "indirect/optimizer.hpp"
#include "indirect/random.hpp"
#include "indirect/trainer.hpp"

namespace indirect {

// ---------------------------------------------------------------------------
// PCA

struct PcaOptions {
  bool center = true;          // subtract the row mean before the SVD
  bool normalize_rows = true;  // scale every row to unit length first
};

struct PcaModel {
  TransformMatrix transform;
  Eigen::VectorXd explained_variance;  // per column, descending
  Eigen::RowVectorXd mean;             // zero when not centering
};

/// Top principal directions of the (normalized, centered) rows as the columns
/// of U. Columns are orthonormal, ordered by explained variance, and each
/// column's largest-magnitude entry is positive.
inline PcaModel fit_pca_model(const EmbeddingSet& texts, Eigen::Index target_dim, PcaOptions options = {}) {
  if (target_dim < 1 || target_dim > texts.dim()) {
    throw ConfigError("PCA target dim must be in [1, " + std::to_string(texts.dim()) + "]");
  }
  if (target_dim >= texts.count()) {
    throw ConfigError("PCA needs fewer target dimensions than data points: r'=" + std::to_string(target_dim) +
                      ", n=" + std::to_string(texts.count()));
  }
  Eigen::MatrixXd x = options.normalize_rows ? Eigen::MatrixXd(normalize_rows(texts)) : Eigen::MatrixXd(texts.data());
  Eigen::RowVectorXd mean = Eigen::RowVectorXd::Zero(x.cols());
  if (options.center) {
    mean = x.colwise().mean();
    x.rowwise() -= mean;
  }

  Eigen::BDCSVD<Eigen::MatrixXd> svd(x, Eigen::ComputeThinV);
  const auto& sigma = svd.singularValues();
  const double tol = static_cast<double>(std::max(x.rows(), x.cols())) * std::numeric_limits<double>::epsilon() *
                     (sigma.size() > 0 ? sigma[0] : 0.0);
  Eigen::Index rank = 0;
  while (rank < sigma.size() && sigma[rank] > tol) ++rank;
  if (rank < target_dim) {
    throw DataError("PCA: data has rank " + std::to_string(rank) + ", fewer than the " + std::to_string(target_dim) +
                    " requested dimensions");
  }

  Eigen::MatrixXd u = svd.matrixV().leftCols(target_dim);
  for (Eigen::Index j = 0; j < u.cols(); ++j) {
    Eigen::Index arg = 0;
    u.col(j).cwiseAbs().maxCoeff(&arg);
    if (u(arg, j) < 0) u.col(j) = -u.col(j);
  }
  const double dof = static_cast<double>(std::max<Eigen::Index>(x.rows() - 1, 1));
  Eigen::VectorXd variance = sigma.head(target_dim).array().square() / dof;
  return PcaModel{TransformMatrix(std::move(u), TransformMethod::kPca), std::move(variance), std::move(mean)};
}

inline TransformMatrix fit_pca(const EmbeddingSet& texts, Eigen::Index target_dim, PcaOptions options = {}) {
  return fit_pca_model(texts, target_dim, options).transform;
}

/// Sum over rows of ||x - reconstruction||^2 for centered PCA, on normalized rows.
inline double pca_reconstruction_error(const EmbeddingSet& texts, const PcaModel& model) {
  Eigen::MatrixXd x = normalize_rows(texts);
  x.rowwise() -= model.mean;
  const Eigen::MatrixXd& u = model.transform.values();
  return (x - x * u * u.transpose()).squaredNorm();
}

// ---------------------------------------------------------------------------
// Random baselines

/// U left at its N(0, 0.1^2) initialization; identical to the starting point
/// of fit_indirect with the same seed.
inline TransformMatrix random_transform(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
  if (cols < 1 || cols > rows) throw ConfigError("random transform needs 1 <= r' <= r");
  return TransformMatrix(initial_transform(rows, cols, seed), TransformMethod::kRandom, seed);
}

/// m points drawn uniformly from the unit sphere in R^dim (normalized Gaussians).
inline EmbeddingSet random_unit_embeddings(Eigen::Index m, Eigen::Index dim, std::uint64_t seed,
                                           std::optional<std::vector<std::string>> ids = std::nullopt) {
  if (m < 1 || dim < 1) throw ConfigError("random embeddings need m >= 1 and dim >= 1");
  SplitMix64 rng(seed, Stream::kUnitEmbeddings);
  RowMatrix out(m, dim);
  for (Eigen::Index i = 0; i < m; ++i) {
    double norm = 0.0;
    do {
      for (Eigen::Index j = 0; j < dim; ++j) out(i, j) = rng.normal();
      norm = out.row(i).norm();
    } while (!(norm > kNormEpsilon));
    out.row(i) /= norm;
  }
  return EmbeddingSet(std::move(out), std::move(ids));
}

// ---------------------------------------------------------------------------
// Autoencoders

struct AutoencoderConfig {
  Eigen::Index target_dim = 128;
  double lr = 0.01;
  long patience = 100;
  long max_iterations = 100'000;
  std::uint64_t seed = 0;
  double init_stddev = 0.1;
};

/// Linear autoencoder x -> (x W1 + b1) W2 + b2, rows as row vectors.
struct LaeParams {
  Eigen::MatrixXd w1;  // r x r'
  Eigen::MatrixXd b1;  // 1 x r'
  Eigen::MatrixXd w2;  // r' x r
  Eigen::MatrixXd b2;  // 1 x r
};

struct LaeFit {
  LaeParams params;
  double final_loss;
  long iterations;
  LossTrace loss_trace;
};

namespace detail {

inline void check_autoencoder_config(const EmbeddingSet& texts, const AutoencoderConfig& config) {
  if (texts.count() < 2) throw ConfigError("autoencoder training needs at least two rows");
  if (config.target_dim < 1 || config.target_dim > texts.dim()) {
    throw ConfigError("autoencoder target dim must be in [1, " + std::to_string(texts.dim()) + "]");
  }
}

inline TrainingOptions training_options(const AutoencoderConfig& config) {
  TrainingOptions options;
  options.adam.lr = config.lr;
  options.patience = config.patience;
  options.max_iterations = config.max_iterations;
  return options;
}

inline double lae_loss_and_gradient(const std::vector<Eigen::MatrixXd>& p, const Eigen::MatrixXd& x,
                                    std::vector<Eigen::MatrixXd>* grads) {
  const auto& [w1, b1, w2, b2] = std::tie(p[0], p[1], p[2], p[3]);
  Eigen::MatrixXd code = x * w1;
  code.rowwise() += b1.row(0);
  Eigen::MatrixXd residual = code * w2;
  residual.rowwise() += b2.row(0);
  residual -= x;
  const double loss = residual.squaredNorm();
  if (grads) {
    const Eigen::MatrixXd d_out = 2.0 * residual;
    (*grads)[2].noalias() = code.transpose() * d_out;
    (*grads)[3] = d_out.colwise().sum();
    const Eigen::MatrixXd d_code = d_out * w2.transpose();
    (*grads)[0].noalias() = x.transpose() * d_code;
    (*grads)[1] = d_code.colwise().sum();
  }
  return loss;
}

}  // namespace detail

/// Sum of squared reconstruction errors over all rows and coordinates.
inline double lae_loss(const LaeParams& params, const EmbeddingSet& texts) {
  return detail::lae_loss_and_gradient({params.w1, params.b1, params.w2, params.b2}, normalize_rows(texts), nullptr);
}

inline LaeFit fit_lae(const EmbeddingSet& texts, const AutoencoderConfig& config) {
  detail::check_autoencoder_config(texts, config);
  const Eigen::MatrixXd x = normalize_rows(texts);
  const auto r = texts.dim();
  const auto k = config.target_dim;
  SplitMix64 rng(config.seed, Stream::kAutoencoderInit);
  std::vector<Eigen::MatrixXd> init = {gaussian_matrix(r, k, config.init_stddev, rng), Eigen::MatrixXd::Zero(1, k),
                                       gaussian_matrix(k, r, config.init_stddev, rng), Eigen::MatrixXd::Zero(1, r)};
  auto objective = [&](const std::vector<Eigen::MatrixXd>& p, std::vector<Eigen::MatrixXd>& g) {
    return detail::lae_loss_and_gradient(p, x, &g);
  };
  auto out = minimize_adam(std::move(init), objective, detail::training_options(config));
  auto& best = out.best_params;
  return LaeFit{LaeParams{std::move(best[0]), std::move(best[1]), std::move(best[2]), std::move(best[3])},
                out.best_loss, out.iterations, std::move(out.trace)};
}

/// Encodes normalized rows: v' = v_norm W1 + b1 (not renormalized).
inline EmbeddingSet transform_lae(const EmbeddingSet& images, const LaeParams& params) {
  if (images.dim() != params.w1.rows()) throw ConfigError("image dim does not match LAE input dim");
  RowMatrix out = normalize_rows(images) * params.w1;
  out.rowwise() += params.b1.row(0);
  return EmbeddingSet(std::move(out), images.ids());
}

/// Two affine layers per side with a leaky ReLU between them:
/// encoder r -> hidden -> r', decoder r' -> hidden -> r.
struct AeParams {
  Eigen::MatrixXd enc_w1, enc_b1;  // r x h, 1 x h
  Eigen::MatrixXd enc_w2, enc_b2;  // h x r', 1 x r'
  Eigen::MatrixXd dec_w1, dec_b1;  // r' x h, 1 x h
  Eigen::MatrixXd dec_w2, dec_b2;  // h x r, 1 x r
  double negative_slope = 0.01;
};

struct AeConfig : AutoencoderConfig {
  Eigen::Index hidden = 512;
  double negative_slope = 0.01;
  double weight_decay = 1e-2;  // coefficient of sum(W^2) over weight matrices
};

struct AeFit {
  AeParams params;
  double final_loss;           // reconstruction + weight decay at the returned params
  double reconstruction_loss;  // reconstruction term alone
  long iterations;
  LossTrace loss_trace;
};

namespace detail {

inline Eigen::MatrixXd leaky_relu(const Eigen::MatrixXd& z, double slope) {
  return z.unaryExpr([slope](double v) { return v > 0 ? v : slope * v; });
}

inline Eigen::MatrixXd affine(const Eigen::MatrixXd& x, const Eigen::MatrixXd& w, const Eigen::MatrixXd& b) {
  Eigen::MatrixXd out = x * w;
  out.rowwise() += b.row(0);
  return out;
}

inline Eigen::MatrixXd ae_encode(const std::vector<Eigen::MatrixXd>& p, const Eigen::MatrixXd& x, double slope) {
  return affine(leaky_relu(affine(x, p[0], p[1]), slope), p[2], p[3]);
}

/// Returns (objective, reconstruction term). Parameter order matches AeParams.
inline std::pair<double, double> ae_loss_and_gradient(const std::vector<Eigen::MatrixXd>& p, const Eigen::MatrixXd& x,
                                                      double slope, double weight_decay,
                                                      std::vector<Eigen::MatrixXd>* grads) {
  const Eigen::MatrixXd z1 = affine(x, p[0], p[1]);
  const Eigen::MatrixXd h1 = leaky_relu(z1, slope);
  const Eigen::MatrixXd code = affine(h1, p[2], p[3]);
  const Eigen::MatrixXd z2 = affine(code, p[4], p[5]);
  const Eigen::MatrixXd h2 = leaky_relu(z2, slope);
  const Eigen::MatrixXd residual = affine(h2, p[6], p[7]) - x;

  const double recon = residual.squaredNorm();
  double decay = 0.0;
  for (std::size_t w : {0u, 2u, 4u, 6u}) decay += p[w].squaredNorm();

  if (grads) {
    auto& g = *grads;
    const auto relu_grad = [slope](const Eigen::MatrixXd& z) {
      return z.unaryExpr([slope](double v) { return v > 0 ? 1.0 : slope; });
    };
    const Eigen::MatrixXd d_out = 2.0 * residual;
    g[6].noalias() = h2.transpose() * d_out;
    g[7] = d_out.colwise().sum();
    const Eigen::MatrixXd d_z2 = (d_out * p[6].transpose()).cwiseProduct(relu_grad(z2));
    g[4].noalias() = code.transpose() * d_z2;
    g[5] = d_z2.colwise().sum();
    const Eigen::MatrixXd d_code = d_z2 * p[4].transpose();
    g[2].noalias() = h1.transpose() * d_code;
    g[3] = d_code.colwise().sum();
    const Eigen::MatrixXd d_z1 = (d_code * p[2].transpose()).cwiseProduct(relu_grad(z1));
    g[0].noalias() = x.transpose() * d_z1;
    g[1] = d_z1.colwise().sum();
    for (std::size_t w : {0u, 2u, 4u, 6u}) g[w] += 2.0 * weight_decay * p[w];
  }
  return {recon + weight_decay * decay, recon};
}

inline std::vector<Eigen::MatrixXd> ae_blocks(const AeParams& a) {
  return {a.enc_w1, a.enc_b1, a.enc_w2, a.enc_b2, a.dec_w1, a.dec_b1, a.dec_w2, a.dec_b2};
}

}  // namespace detail

/// (objective, reconstruction term) of `params` on `texts`.
inline std::pair<double, double> ae_loss(const AeParams& params, const EmbeddingSet& texts, double weight_decay) {
  return detail::ae_loss_and_gradient(detail::ae_blocks(params), normalize_rows(texts), params.negative_slope,
                                      weight_decay, nullptr);
}

inline AeFit fit_ae(const EmbeddingSet& texts, const AeConfig& config) {
  detail::check_autoencoder_config(texts, config);
  if (config.hidden < 1) throw ConfigError("autoencoder hidden width must be positive");
  if (config.weight_decay < 0) throw ConfigError("weight decay must be non-negative");
  const Eigen::MatrixXd x = normalize_rows(texts);
  const auto r = texts.dim();
  const auto k = config.target_dim;
  const auto h = config.hidden;
  const double sd = config.init_stddev;
  SplitMix64 rng(config.seed, Stream::kAutoencoderInit);
  std::vector<Eigen::MatrixXd> init;
  init.push_back(gaussian_matrix(r, h, sd, rng));
  init.push_back(Eigen::MatrixXd::Zero(1, h));
  init.push_back(gaussian_matrix(h, k, sd, rng));
  init.push_back(Eigen::MatrixXd::Zero(1, k));
  init.push_back(gaussian_matrix(k, h, sd, rng));
  init.push_back(Eigen::MatrixXd::Zero(1, h));
  init.push_back(gaussian_matrix(h, r, sd, rng));
  init.push_back(Eigen::MatrixXd::Zero(1, r));

  auto objective = [&](const std::vector<Eigen::MatrixXd>& p, std::vector<Eigen::MatrixXd>& g) {
    return detail::ae_loss_and_gradient(p, x, config.negative_slope, config.weight_decay, &g).first;
  };
  auto out = minimize_adam(std::move(init), objective, detail::training_options(config));
  auto& b = out.best_params;
  AeParams params{std::move(b[0]), std::move(b[1]), std::move(b[2]), std::move(b[3]),
                  std::move(b[4]), std::move(b[5]), std::move(b[6]), std::move(b[7]), config.negative_slope};
  const double recon =
      detail::ae_loss_and_gradient(detail::ae_blocks(params), x, config.negative_slope, config.weight_decay, nullptr)
          .second;
  return AeFit{std::move(params), out.best_loss, recon, out.iterations, std::move(out.trace)};
}

/// Encoder applied to normalized rows; outputs are not renormalized.
inline EmbeddingSet transform_ae(const EmbeddingSet& images, const AeParams& params) {
  if (images.dim() != params.enc_w1.rows()) throw ConfigError("image dim does not match AE input dim");
  RowMatrix out = detail::ae_encode(detail::ae_blocks(params), normalize_rows(images), params.negative_slope);
  return EmbeddingSet(std::move(out), images.ids());
}

}  // namespace indirect
