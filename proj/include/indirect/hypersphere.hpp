#pragma once

// Unit-hypersphere primitives: normalization, projection through a learned
// r x r' matrix U, reconstruction through U^T, and spherical distance.
// Everything is computed in double precision.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <utility>

#include <Eigen/Core>

#include "indirect/embedding_store.hpp"
#include "indirect/errors.hpp"

namespace indirect {

/// Norms at or below this are treated as having no direction.
inline constexpr double kNormEpsilon = 1e-12;

/// A vector of Euclidean norm 1. Only produced by normalize() and friends.
class UnitVector {
 public:
  Eigen::Index dim() const { return values_.size(); }
  const Eigen::VectorXd& values() const { return values_; }
  double operator[](Eigen::Index i) const { return values_[i]; }

  friend UnitVector normalize(const Eigen::Ref<const Eigen::VectorXd>& v);

 private:
  explicit UnitVector(Eigen::VectorXd values) : values_(std::move(values)) {}
  Eigen::VectorXd values_;
};

inline UnitVector normalize(const Eigen::Ref<const Eigen::VectorXd>& v) {
  const double norm = v.norm();
  if (!(norm > kNormEpsilon)) {
    throw DegenerateError("cannot normalize a vector of norm " + std::to_string(norm));
  }
  return UnitVector(v / norm);
}

enum class TransformMethod { kIndirect, kPca, kRandom, kLaeEncoder, kOracle };

inline const char* to_string(TransformMethod m) {
  switch (m) {
    case TransformMethod::kIndirect: return "indirect";
    case TransformMethod::kPca: return "pca";
    case TransformMethod::kRandom: return "random";
    case TransformMethod::kLaeEncoder: return "lae-encoder";
    case TransformMethod::kOracle: return "oracle";
  }
  return "unknown";
}

inline TransformMethod transform_method_from_string(const std::string& s) {
  for (auto m : {TransformMethod::kIndirect, TransformMethod::kPca, TransformMethod::kRandom,
                 TransformMethod::kLaeEncoder, TransformMethod::kOracle}) {
    if (s == to_string(m)) return m;
  }
  throw DataError("unknown transform method '" + s + "'");
}

/// The r x r' projection U together with where it came from.
class TransformMatrix {
 public:
  TransformMatrix(Eigen::MatrixXd values, TransformMethod method, std::uint64_t seed = 0,
                  LossTrace loss_trace = {})
      : values_(std::move(values)), method_(method), seed_(seed), loss_trace_(std::move(loss_trace)) {
    if (values_.rows() == 0 || values_.cols() == 0 || values_.cols() > values_.rows()) {
      throw ConfigError("transform must be r x r' with 1 <= r' <= r, got " + std::to_string(values_.rows()) +
                        " x " + std::to_string(values_.cols()));
    }
    if (!values_.allFinite()) throw NumericalError("transform matrix has non-finite entries");
  }

  Eigen::Index rows() const { return values_.rows(); }
  Eigen::Index cols() const { return values_.cols(); }
  const Eigen::MatrixXd& values() const { return values_; }
  TransformMethod method() const { return method_; }
  std::uint64_t seed() const { return seed_; }
  const LossTrace& loss_trace() const { return loss_trace_; }

 private:
  Eigen::MatrixXd values_;
  TransformMethod method_;
  std::uint64_t seed_;
  LossTrace loss_trace_;
};

/// normalize(v U): the r'-dimensional image of a unit vector.
inline UnitVector project(const UnitVector& v, const TransformMatrix& u) {
  if (v.dim() != u.rows()) throw ConfigError("project: vector dim does not match transform rows");
  const Eigen::VectorXd z = u.values().transpose() * v.values();
  if (!(z.norm() > kNormEpsilon)) throw DegenerateError("project: input lies in the kernel of the transform");
  return normalize(z);
}

/// normalize(t' U^T): maps an r'-dimensional unit vector back to r dimensions.
inline UnitVector reconstruct(const UnitVector& t_prime, const TransformMatrix& u) {
  if (t_prime.dim() != u.cols()) throw ConfigError("reconstruct: vector dim does not match transform cols");
  const Eigen::VectorXd y = u.values() * t_prime.values();
  if (!(y.norm() > kNormEpsilon)) throw DegenerateError("reconstruct: reconstruction has zero norm");
  return normalize(y);
}

/// Arc length between two unit vectors, in [0, pi].
inline double spherical_distance(const UnitVector& a, const UnitVector& b) {
  if (a.dim() != b.dim()) throw ConfigError("spherical_distance: dimension mismatch");
  return std::acos(std::clamp(a.values().dot(b.values()), -1.0, 1.0));
}

inline double cosine_similarity(const Eigen::Ref<const Eigen::VectorXd>& a,
                                const Eigen::Ref<const Eigen::VectorXd>& b) {
  if (a.size() != b.size()) throw ConfigError("cosine_similarity: dimension mismatch");
  const double na = a.norm();
  const double nb = b.norm();
  if (!(na > kNormEpsilon) || !(nb > kNormEpsilon)) throw DegenerateError("cosine_similarity: zero-norm input");
  return std::clamp(a.dot(b) / (na * nb), -1.0, 1.0);
}

/// Rows of `set` scaled to unit length. Fails naming the first degenerate row.
inline RowMatrix normalize_rows(const EmbeddingSet& set) {
  RowMatrix out(set.count(), set.dim());
  for (Eigen::Index i = 0; i < set.count(); ++i) {
    const double norm = set.row(i).norm();
    if (!(norm > kNormEpsilon)) throw DegenerateError("embedding " + set.label_of(i) + " has zero norm");
    out.row(i) = set.row(i) / norm;
  }
  return out;
}

/// Maps every row v to normalize(normalize(v) U). Rows are independent, so the
/// result does not depend on evaluation order.
inline EmbeddingSet transform_images(const EmbeddingSet& images, const TransformMatrix& u) {
  if (images.dim() != u.rows()) {
    throw ConfigError("image dim " + std::to_string(images.dim()) + " does not match transform rows " +
                      std::to_string(u.rows()));
  }
  const Eigen::MatrixXd ut = u.values().transpose();
  RowMatrix out(images.count(), u.cols());
  for (Eigen::Index i = 0; i < images.count(); ++i) {
    const double norm = images.row(i).norm();
    if (!(norm > kNormEpsilon)) throw DegenerateError("embedding " + images.label_of(i) + " has zero norm");
    const Eigen::VectorXd v = images.row(i).transpose() / norm;
    const Eigen::VectorXd z = ut * v;
    const double z_norm = z.norm();
    if (!(z_norm > kNormEpsilon)) {
      throw DegenerateError("embedding " + images.label_of(i) + " lies in the kernel of the transform");
    }
    out.row(i) = (z / z_norm).transpose();
  }
  return EmbeddingSet(std::move(out), images.ids());
}

}  // namespace indirect
