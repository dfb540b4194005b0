#pragma once

// Test-only data generators and numerical oracles. Nothing here calls into
// the code paths it is used to check.

#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/QR>

#include "indirect/embedding_store.hpp"
#include "indirect/random.hpp"

namespace indirect::testing {

inline RowMatrix gaussian_rows(Eigen::Index n, Eigen::Index r, SplitMix64& rng, double stddev = 1.0) {
  RowMatrix m(n, r);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < r; ++j) m(i, j) = stddev * rng.normal();
  return m;
}

inline EmbeddingSet gaussian_set(Eigen::Index n, Eigen::Index r, std::uint64_t seed) {
  SplitMix64 rng(seed);
  return EmbeddingSet(gaussian_rows(n, r, rng));
}

/// n rows of dimension r whose entries outside the first k coordinates are zero.
inline EmbeddingSet coordinate_subspace_set(Eigen::Index n, Eigen::Index r, Eigen::Index k, std::uint64_t seed) {
  SplitMix64 rng(seed);
  RowMatrix m = RowMatrix::Zero(n, r);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < k; ++j) m(i, j) = rng.normal();
  return EmbeddingSet(m);
}

/// r x cols matrix whose columns are the first `cols` coordinate axes.
inline Eigen::MatrixXd coordinate_columns(Eigen::Index r, Eigen::Index cols) {
  return Eigen::MatrixXd::Identity(r, cols);
}

/// Haar-ish random orthogonal matrix from the QR of a Gaussian matrix.
inline Eigen::MatrixXd random_orthogonal(Eigen::Index k, SplitMix64& rng) {
  Eigen::MatrixXd g(k, k);
  for (Eigen::Index i = 0; i < k; ++i)
    for (Eigen::Index j = 0; j < k; ++j) g(i, j) = rng.normal();
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
  return qr.householderQ() * Eigen::MatrixXd::Identity(k, k);
}

/// Central finite differences of a scalar function of a matrix.
inline Eigen::MatrixXd central_difference(const std::function<double(const Eigen::MatrixXd&)>& f,
                                          const Eigen::MatrixXd& at, double h) {
  Eigen::MatrixXd grad(at.rows(), at.cols());
  Eigen::MatrixXd x = at;
  for (Eigen::Index i = 0; i < at.rows(); ++i) {
    for (Eigen::Index j = 0; j < at.cols(); ++j) {
      const double saved = x(i, j);
      x(i, j) = saved + h;
      const double up = f(x);
      x(i, j) = saved - h;
      const double down = f(x);
      x(i, j) = saved;
      grad(i, j) = (up - down) / (2.0 * h);
    }
  }
  return grad;
}

/// Straight-line evaluation of the mean arc-length reconstruction loss:
/// each row is normalized, projected, renormalized, mapped back through U^T,
/// renormalized, and compared with acos of the (clamped) dot product.
inline double reference_reconstruction_loss(const Eigen::MatrixXd& u, const RowMatrix& texts) {
  double total = 0.0;
  for (Eigen::Index i = 0; i < texts.rows(); ++i) {
    Eigen::VectorXd t = texts.row(i).transpose();
    t /= std::sqrt(t.dot(t));
    Eigen::VectorXd p = u.transpose() * t;
    p /= std::sqrt(p.dot(p));
    Eigen::VectorXd y = u * p;
    y /= std::sqrt(y.dot(y));
    double c = t.dot(y);
    c = c > 1.0 ? 1.0 : (c < -1.0 ? -1.0 : c);
    total += std::acos(c);
  }
  return total / static_cast<double>(texts.rows());
}

/// max_ij |a - b| / max(|a|, |b|, floor).
inline double max_relative_error(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, double floor = 1e-8) {
  double worst = 0.0;
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    for (Eigen::Index j = 0; j < a.cols(); ++j) {
      const double denom = std::max({std::abs(a(i, j)), std::abs(b(i, j)), floor});
      worst = std::max(worst, std::abs(a(i, j) - b(i, j)) / denom);
    }
  }
  return worst;
}

/// Balanced labels "c0".."c{C-1}" assigned round-robin, ids "i0".."i{m-1}".
inline LabelSet round_robin_labels(Eigen::Index m, int classes) {
  std::vector<std::pair<std::string, std::string>> entries;
  for (Eigen::Index i = 0; i < m; ++i) {
    entries.emplace_back("i" + std::to_string(i), "c" + std::to_string(i % classes));
  }
  return LabelSet(std::move(entries));
}

inline std::vector<std::string> row_ids(Eigen::Index m) {
  std::vector<std::string> ids;
  for (Eigen::Index i = 0; i < m; ++i) ids.push_back("i" + std::to_string(i));
  return ids;
}

}  // namespace indirect::testing
