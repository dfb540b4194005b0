#pragma once

// Fitted models as JSON files.
//
//   {"format": "indirect-model", "version": 1, "method": "...", "seed": s,
//    "final_loss": x, "iterations": n, "kind": "linear" | "affine" | "mlp", ...}
//
// linear: "u" (r x r').  affine: "w" (r x r'), "b" (1 x r').
// mlp: "layers" [{"w", "b"}, {"w", "b"}] (encoder only) and "negative_slope".
// Matrices are {"rows": R, "cols": C, "data": [row-major values]}; doubles are
// written with round-trip precision, so a saved model reloads exactly.

#include <cstdint>
#include <fstream>
#include <string>
#include <type_traits>
#include <variant>

#include <json.hpp>

#include "indirect/baselines.hpp"
#include "indirect/errors.hpp"
#include "indirect/experiment.hpp"
#include "indirect/hypersphere.hpp"
#include "indirect/oracle.hpp"
#include "indirect/trainer.hpp"

namespace indirect {

struct FittedModel {
  Method method = Method::kIndirect;
  std::uint64_t seed = 0;
  double final_loss = 0;
  long iterations = 0;
  std::variant<LaeParams, AeParams, TransformMatrix> params;
};

/// Fits the model `c.method` trains for one seed. Methods without a model are config errors.
inline FittedModel fit_model(const ExperimentConfig& c, const ExperimentData& d, std::uint64_t seed) {
  std::optional<EmbeddingSet> texts = d.texts;
  if (c.prompt_sample) texts = d.texts->select(sample_prompt_rows(d.texts->count(), *c.prompt_sample, seed));
  IndirectConfig ic;
  ic.target_dim = c.target_dim;
  ic.lr = c.lr;
  ic.patience = c.patience;
  ic.max_iterations = c.max_iterations;
  ic.seed = seed;
  ic.init_stddev = c.init_stddev;
  AeConfig ac;
  ac.target_dim = c.target_dim;
  ac.lr = c.lr;
  ac.patience = c.patience;
  ac.max_iterations = c.max_iterations;
  ac.seed = seed;
  ac.init_stddev = c.init_stddev;
  ac.hidden = c.ae_hidden;
  ac.weight_decay = c.ae_weight_decay;

  switch (c.method) {
    case Method::kIndirect: {
      auto fit = fit_indirect(*texts, ic);
      return {c.method, seed, fit.final_loss, fit.iterations, std::move(fit.transform)};
    }
    case Method::kPca: {
      auto model = fit_pca_model(*texts, c.target_dim, PcaOptions{.center = c.pca_center});
      const double err = pca_reconstruction_error(*texts, model);
      return {c.method, 0, err, 0, std::move(model.transform)};
    }
    case Method::kLae: {
      auto fit = fit_lae(*texts, ac);
      return {c.method, seed, fit.final_loss, fit.iterations, std::move(fit.params)};
    }
    case Method::kAe: {
      auto fit = fit_ae(*texts, ac);
      return {c.method, seed, fit.final_loss, fit.iterations, std::move(fit.params)};
    }
    case Method::kRandomTransform:
      return {c.method, seed, 0.0, 0, random_transform(d.images ? d.images->dim() : d.texts->dim(), c.target_dim, seed)};
    case Method::kOracle: {
      auto fit = fit_oracle(*d.images, d.labels, ic);
      return {c.method, seed, fit.final_loss, fit.iterations, std::move(fit.transform)};
    }
    case Method::kRandomEmbedding:
    case Method::kClipPassthrough: break;
  }
  throw ConfigError(std::string("method ") + to_string(c.method) + " has no model to fit");
}

inline EmbeddingSet apply_model(const FittedModel& model, const EmbeddingSet& images) {
  return std::visit(
      [&](const auto& p) -> EmbeddingSet {
        using P = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<P, TransformMatrix>) {
          if (images.dim() != p.rows()) throw DataError("image dim does not match the model input dim");
          return transform_images(images, p);
        } else if constexpr (std::is_same_v<P, LaeParams>) {
          if (images.dim() != p.w1.rows()) throw DataError("image dim does not match the model input dim");
          return transform_lae(images, p);
        } else {
          if (images.dim() != p.enc_w1.rows()) throw DataError("image dim does not match the model input dim");
          return transform_ae(images, p);
        }
      },
      model.params);
}

namespace detail {

inline nlohmann::json matrix_to_json(const Eigen::MatrixXd& m) {
  std::vector<double> data;
  data.reserve(static_cast<std::size_t>(m.size()));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) data.push_back(m(i, j));
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", data}};
}

inline Eigen::MatrixXd matrix_from_json(const nlohmann::json& j) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  const auto data = j.at("data").get<std::vector<double>>();
  if (rows < 1 || cols < 1 || static_cast<Eigen::Index>(data.size()) != rows * cols) {
    throw DataError("model matrix has " + std::to_string(data.size()) + " values for shape " + std::to_string(rows) +
                    " x " + std::to_string(cols));
  }
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j2 = 0; j2 < cols; ++j2) m(i, j2) = data[static_cast<std::size_t>(i * cols + j2)];
  return m;
}

}  // namespace detail

inline nlohmann::json to_json(const FittedModel& model) {
  nlohmann::json j = {{"format", "indirect-model"},
                      {"version", 1},
                      {"method", to_string(model.method)},
                      {"seed", model.seed},
                      {"final_loss", model.final_loss},
                      {"iterations", model.iterations}};
  std::visit(
      [&](const auto& p) {
        using P = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<P, TransformMatrix>) {
          j["kind"] = "linear";
          j["u"] = detail::matrix_to_json(p.values());
        } else if constexpr (std::is_same_v<P, LaeParams>) {
          j["kind"] = "affine";
          j["w"] = detail::matrix_to_json(p.w1);
          j["b"] = detail::matrix_to_json(p.b1);
        } else {
          j["kind"] = "mlp";
          j["negative_slope"] = p.negative_slope;
          j["layers"] = {{{"w", detail::matrix_to_json(p.enc_w1)}, {"b", detail::matrix_to_json(p.enc_b1)}},
                         {{"w", detail::matrix_to_json(p.enc_w2)}, {"b", detail::matrix_to_json(p.enc_b2)}}};
        }
      },
      model.params);
  return j;
}

/// Reads a model; decoder weights are not stored, so loaded mlp models only encode.
inline FittedModel model_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format").get<std::string>() != "indirect-model") throw DataError("not a model file");
    if (j.at("version").get<int>() != 1) throw DataError("unsupported model file version");
    FittedModel m;
    m.method = method_from_string(j.at("method").get<std::string>());
    m.seed = j.at("seed").get<std::uint64_t>();
    m.final_loss = j.at("final_loss").get<double>();
    m.iterations = j.at("iterations").get<long>();
    const auto kind = j.at("kind").get<std::string>();
    if (kind == "linear") {
      const auto method = m.method == Method::kPca              ? TransformMethod::kPca
                          : m.method == Method::kOracle         ? TransformMethod::kOracle
                          : m.method == Method::kRandomTransform ? TransformMethod::kRandom
                                                                : TransformMethod::kIndirect;
      m.params = TransformMatrix(detail::matrix_from_json(j.at("u")), method, m.seed);
    } else if (kind == "affine") {
      LaeParams p;
      p.w1 = detail::matrix_from_json(j.at("w"));
      p.b1 = detail::matrix_from_json(j.at("b"));
      if (p.b1.rows() != 1 || p.b1.cols() != p.w1.cols()) throw DataError("affine model bias shape mismatch");
      m.params = std::move(p);
    } else if (kind == "mlp") {
      AeParams p;
      const auto& layers = j.at("layers");
      if (layers.size() != 2) throw DataError("mlp model must have two encoder layers");
      p.enc_w1 = detail::matrix_from_json(layers[0].at("w"));
      p.enc_b1 = detail::matrix_from_json(layers[0].at("b"));
      p.enc_w2 = detail::matrix_from_json(layers[1].at("w"));
      p.enc_b2 = detail::matrix_from_json(layers[1].at("b"));
      if (p.enc_w2.rows() != p.enc_w1.cols() || p.enc_b1.cols() != p.enc_w1.cols() ||
          p.enc_b2.cols() != p.enc_w2.cols() || p.enc_b1.rows() != 1 || p.enc_b2.rows() != 1) {
        throw DataError("mlp model layer shapes do not chain");
      }
      p.negative_slope = j.at("negative_slope").get<double>();
      m.params = std::move(p);
    } else {
      throw DataError("unknown model kind '" + kind + "'");
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed model file: ") + e.what());
  } catch (const ConfigError& e) {
    throw DataError(std::string("malformed model file: ") + e.what());
  }
}

inline void write_model_file(const FittedModel& model, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot create model file '" + path + "'");
  out << to_json(model).dump(1) << '\n';
  if (!out) throw DataError("failed writing '" + path + "'");
}

inline FittedModel read_model_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open model file '" + path + "'");
  try {
    return model_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError("model file '" + path + "' is not valid JSON: " + e.what());
  }
}

}  // namespace indirect
