#pragma once

// End-to-end experiments: load embeddings and labels, fit a method per seed,
// transform the images, evaluate, and aggregate into a RetrievalReport.

#include <algorithm>
#include <array>
#include <exception>
#include <fstream>
#include <numeric>
#include <thread>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "indirect/baselines.hpp"
#include "indirect/embedding_store.hpp"
#include "indirect/errors.hpp"
#include "indirect/hypersphere.hpp"
#include "indirect/metrics.hpp"
#include "indirect/oracle.hpp"
#include "indirect/random.hpp"
#include "indirect/report.hpp"
#include "indirect/trainer.hpp"

namespace indirect {

enum class Method { kIndirect, kPca, kLae, kAe, kRandomTransform, kRandomEmbedding, kClipPassthrough, kOracle };

inline constexpr std::array<Method, 8> kAllMethods = {Method::kIndirect,        Method::kPca,
                                                      Method::kLae,             Method::kAe,
                                                      Method::kRandomTransform, Method::kRandomEmbedding,
                                                      Method::kClipPassthrough, Method::kOracle};

inline const char* to_string(Method m) {
  switch (m) {
    case Method::kIndirect: return "indirect";
    case Method::kPca: return "pca";
    case Method::kLae: return "lae";
    case Method::kAe: return "ae";
    case Method::kRandomTransform: return "random-transform";
    case Method::kRandomEmbedding: return "random-embedding";
    case Method::kClipPassthrough: return "clip-passthrough";
    case Method::kOracle: return "oracle";
  }
  return "?";
}

inline Method method_from_string(const std::string& s) {
  for (Method m : kAllMethods)
    if (s == to_string(m)) return m;
  throw ConfigError("unknown method '" + s + "'");
}

inline bool needs_texts(Method m) {
  return m == Method::kIndirect || m == Method::kPca || m == Method::kLae || m == Method::kAe;
}

inline bool uses_seed(Method m) { return m != Method::kPca && m != Method::kClipPassthrough; }

/// Environment variable naming the directory relative data paths resolve against.
inline constexpr const char* kDataDirEnv = "INDIRECT_DATA_DIR";

inline std::string resolve_data_path(const std::string& path) {
  if (path.empty()) return path;
  const std::filesystem::path p(path);
  if (p.is_absolute()) return path;
  if (const char* dir = std::getenv(kDataDirEnv); dir != nullptr && *dir != '\0') {
    return (std::filesystem::path(dir) / p).string();
  }
  return path;
}

struct ExperimentConfig {
  Method method = Method::kIndirect;
  std::string text_embeddings;
  std::string image_embeddings;
  std::string labels;
  Eigen::Index target_dim = 128;
  std::vector<std::uint64_t> seeds = {0, 1, 2, 3, 4};
  std::vector<Metric> metrics = {kAllMetrics.begin(), kAllMetrics.end()};

  double lr = 0.01;
  long patience = 100;
  long max_iterations = 100'000;
  double init_stddev = 0.1;
  bool pca_center = true;
  Eigen::Index ae_hidden = 512;
  double ae_weight_decay = 1e-2;

  // Fit on a per-seed random subset of this many prompts (sorted, without replacement).
  std::optional<long> prompt_sample;

  std::vector<long> sweep_dims;
  std::vector<long> sweep_prompt_counts;

  unsigned threads = 0;  // 0 = hardware concurrency; never affects results
};

inline nlohmann::json to_json(const ExperimentConfig& c) {
  nlohmann::json metrics = nlohmann::json::array();
  for (Metric m : c.metrics) metrics.push_back(metric_key(m));
  nlohmann::json j = {{"method", to_string(c.method)},
                      {"text_embeddings", c.text_embeddings},
                      {"image_embeddings", c.image_embeddings},
                      {"labels", c.labels},
                      {"target_dim", c.target_dim},
                      {"seeds", c.seeds},
                      {"metrics", metrics},
                      {"lr", c.lr},
                      {"patience", c.patience},
                      {"max_iterations", c.max_iterations},
                      {"init_stddev", c.init_stddev},
                      {"pca_center", c.pca_center},
                      {"ae_hidden", c.ae_hidden},
                      {"ae_weight_decay", c.ae_weight_decay},
                      {"prompt_sample", c.prompt_sample ? nlohmann::json(*c.prompt_sample) : nlohmann::json(nullptr)},
                      {"sweep_dims", c.sweep_dims},
                      {"sweep_prompt_counts", c.sweep_prompt_counts}};
  return j;
}

/// Reads a config object; absent keys keep their defaults, unknown keys are errors.
inline ExperimentConfig config_from_json(const nlohmann::json& j, ExperimentConfig c = {}) {
  if (!j.is_object()) throw ConfigError("experiment config must be a JSON object");
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "method") c.method = method_from_string(value.get<std::string>());
      else if (key == "text_embeddings") c.text_embeddings = value.get<std::string>();
      else if (key == "image_embeddings") c.image_embeddings = value.get<std::string>();
      else if (key == "labels") c.labels = value.get<std::string>();
      else if (key == "target_dim") c.target_dim = value.get<Eigen::Index>();
      else if (key == "seeds") c.seeds = value.get<std::vector<std::uint64_t>>();
      else if (key == "metrics") {
        c.metrics.clear();
        for (const auto& m : value) c.metrics.push_back(metric_from_string(m.get<std::string>()));
      } else if (key == "lr") c.lr = value.get<double>();
      else if (key == "patience") c.patience = value.get<long>();
      else if (key == "max_iterations") c.max_iterations = value.get<long>();
      else if (key == "init_stddev") c.init_stddev = value.get<double>();
      else if (key == "pca_center") c.pca_center = value.get<bool>();
      else if (key == "ae_hidden") c.ae_hidden = value.get<Eigen::Index>();
      else if (key == "ae_weight_decay") c.ae_weight_decay = value.get<double>();
      else if (key == "prompt_sample") {
        c.prompt_sample = value.is_null() ? std::nullopt : std::optional<long>(value.get<long>());
      } else if (key == "sweep_dims") c.sweep_dims = value.get<std::vector<long>>();
      else if (key == "sweep_prompt_counts") c.sweep_prompt_counts = value.get<std::vector<long>>();
      else if (key == "threads") c.threads = value.get<unsigned>();
      else throw ConfigError("unknown config key '" + key + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad config value: ") + e.what());
  }
  return c;
}

inline ExperimentConfig read_config_file(const std::string& path, ExperimentConfig base = {}) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  try {
    return config_from_json(nlohmann::json::parse(in), std::move(base));
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config file '" + path + "' is not valid JSON: " + e.what());
  }
}

/// Checks that do not need the data files.
inline void validate(const ExperimentConfig& c) {
  if (c.seeds.empty()) throw ConfigError("at least one seed is required");
  if (c.metrics.empty()) throw ConfigError("at least one metric is required");
  if (c.target_dim < 1) throw ConfigError("target_dim must be positive");
  if (c.labels.empty()) throw ConfigError("a label file is required for evaluation");
  if (needs_texts(c.method) && c.text_embeddings.empty()) {
    throw ConfigError(std::string("method ") + to_string(c.method) + " requires text embeddings");
  }
  if (c.method != Method::kRandomEmbedding && c.image_embeddings.empty()) {
    throw ConfigError(std::string("method ") + to_string(c.method) + " requires image embeddings");
  }
  if (!(c.lr > 0) || c.patience < 1 || c.max_iterations < 1 || !(c.init_stddev > 0)) {
    throw ConfigError("training hyperparameters must be positive");
  }
  if (c.ae_hidden < 1 || c.ae_weight_decay < 0) throw ConfigError("invalid autoencoder settings");
  if (c.prompt_sample) {
    if (!needs_texts(c.method)) throw ConfigError("prompt sampling applies only to text-trained methods");
    if (*c.prompt_sample < 1) throw ConfigError("prompt sample size must be positive");
  }
  std::vector<Metric> seen;
  for (Metric m : c.metrics) {
    if (std::find(seen.begin(), seen.end(), m) != seen.end()) {
      throw ConfigError(std::string("metric listed twice: ") + metric_key(m));
    }
    seen.push_back(m);
  }
}

struct ExperimentData {
  std::optional<EmbeddingSet> texts;
  std::optional<EmbeddingSet> images;
  LabelSet labels;
  std::vector<int> classes;      // per image row
  std::vector<std::string> ids;  // per image row
};

/// Loads and cross-checks every file the method needs.
inline ExperimentData load_experiment_data(const ExperimentConfig& c) {
  validate(c);
  ExperimentData d;
  d.labels = read_labels_file(resolve_data_path(c.labels));
  if (needs_texts(c.method)) d.texts = read_embeddings_file(resolve_data_path(c.text_embeddings));
  if (!c.image_embeddings.empty()) d.images = read_embeddings_file(resolve_data_path(c.image_embeddings));

  if (d.images) {
    d.classes = encode_labels(align_labels(*d.images, d.labels));
    for (Eigen::Index i = 0; i < d.images->count(); ++i) d.ids.push_back(d.images->label_of(i));
  } else {
    std::vector<std::string> per_row;
    for (const auto& [id, label] : d.labels.entries()) {
      d.ids.push_back(id);
      per_row.push_back(label);
    }
    d.classes = encode_labels(per_row);
  }
  if (d.texts && d.images && d.texts->dim() != d.images->dim()) {
    throw DataError("text embeddings have dim " + std::to_string(d.texts->dim()) + " but image embeddings have dim " +
                    std::to_string(d.images->dim()));
  }
  const Eigen::Index input_dim = d.images ? d.images->dim() : c.target_dim;
  const bool reduces = c.method != Method::kClipPassthrough && c.method != Method::kRandomEmbedding;
  if (reduces && c.target_dim > input_dim) {
    throw ConfigError("target_dim " + std::to_string(c.target_dim) + " exceeds input dim " + std::to_string(input_dim));
  }
  if (c.method == Method::kPca && c.target_dim >= d.texts->count()) {
    throw ConfigError("PCA needs target_dim < number of prompts (" + std::to_string(d.texts->count()) + ")");
  }
  if (c.prompt_sample && *c.prompt_sample > d.texts->count()) {
    throw ConfigError("prompt sample of " + std::to_string(*c.prompt_sample) + " exceeds the " +
                      std::to_string(d.texts->count()) + " available prompts");
  }
  return d;
}

/// `size` prompt rows drawn without replacement, kept in their original order.
inline std::vector<Eigen::Index> sample_prompt_rows(Eigen::Index n, long size, std::uint64_t seed) {
  if (size < 1 || size > n) throw ConfigError("prompt sample size out of range");
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), Eigen::Index{0});
  if (size == n) return idx;
  SplitMix64 rng(seed, Stream::kPromptSampling);
  for (long k = 0; k < size; ++k) {
    const auto j = static_cast<std::size_t>(k) + static_cast<std::size_t>(rng.below(static_cast<std::uint64_t>(n - k)));
    std::swap(idx[static_cast<std::size_t>(k)], idx[j]);
  }
  idx.resize(static_cast<std::size_t>(size));
  std::sort(idx.begin(), idx.end());
  return idx;
}

/// The image embeddings produced by `c.method` for one seed.
inline EmbeddingSet embed_images(const ExperimentConfig& c, const ExperimentData& d, std::uint64_t seed) {
  std::optional<EmbeddingSet> texts = d.texts;
  if (c.prompt_sample) texts = d.texts->select(sample_prompt_rows(d.texts->count(), *c.prompt_sample, seed));

  IndirectConfig ic;
  ic.target_dim = c.target_dim;
  ic.lr = c.lr;
  ic.patience = c.patience;
  ic.max_iterations = c.max_iterations;
  ic.seed = seed;
  ic.init_stddev = c.init_stddev;

  switch (c.method) {
    case Method::kIndirect: return transform_images(*d.images, fit_indirect(*texts, ic).transform);
    case Method::kPca: {
      if (c.target_dim >= texts->count()) {
        throw ConfigError("PCA needs target_dim < number of prompts (" + std::to_string(texts->count()) + ")");
      }
      return transform_images(*d.images, fit_pca(*texts, c.target_dim, PcaOptions{.center = c.pca_center}));
    }
    case Method::kLae: {
      AutoencoderConfig ac;
      ac.target_dim = c.target_dim;
      ac.lr = c.lr;
      ac.patience = c.patience;
      ac.max_iterations = c.max_iterations;
      ac.seed = seed;
      ac.init_stddev = c.init_stddev;
      return transform_lae(*d.images, fit_lae(*texts, ac).params);
    }
    case Method::kAe: {
      AeConfig ac;
      ac.target_dim = c.target_dim;
      ac.lr = c.lr;
      ac.patience = c.patience;
      ac.max_iterations = c.max_iterations;
      ac.seed = seed;
      ac.init_stddev = c.init_stddev;
      ac.hidden = c.ae_hidden;
      ac.weight_decay = c.ae_weight_decay;
      return transform_ae(*d.images, fit_ae(*texts, ac).params);
    }
    case Method::kRandomTransform:
      return transform_images(*d.images, random_transform(d.images->dim(), c.target_dim, seed));
    case Method::kRandomEmbedding:
      return random_unit_embeddings(static_cast<Eigen::Index>(d.classes.size()), c.target_dim, seed, d.ids);
    case Method::kClipPassthrough: return EmbeddingSet(normalize_rows(*d.images), d.images->ids());
    case Method::kOracle: return transform_images(*d.images, fit_oracle(*d.images, d.labels, ic).transform);
  }
  throw ConfigError("unhandled method");
}

struct SeedResult {
  std::vector<double> values;  // aligned with config.metrics
  std::size_t skipped_queries = 0;
};

inline SeedResult evaluate_embeddings(const EmbeddingSet& e, const std::vector<int>& classes,
                                      const std::vector<Metric>& metrics, std::uint64_t seed, unsigned threads = 0) {
  const bool retrieval = std::any_of(metrics.begin(), metrics.end(), [](Metric m) { return !is_clustering_metric(m); });
  const bool clustering = std::any_of(metrics.begin(), metrics.end(), is_clustering_metric);
  RetrievalScores r;
  ClusteringScores k;
  if (retrieval) r = evaluate_retrieval(e, classes, threads);
  if (clustering) k = evaluate_clustering(e, classes, seed);
  SeedResult out;
  out.skipped_queries = r.skipped;
  for (Metric m : metrics) {
    switch (m) {
      case Metric::kMapAtR: out.values.push_back(r.map_at_r); break;
      case Metric::kPrecAt1: out.values.push_back(r.precision_at_1); break;
      case Metric::kRPrec: out.values.push_back(r.r_precision); break;
      case Metric::kMap: out.values.push_back(r.map); break;
      case Metric::kMrr: out.values.push_back(r.mrr); break;
      case Metric::kAmi: out.values.push_back(k.ami); break;
      case Metric::kNmi: out.values.push_back(k.nmi); break;
    }
  }
  return out;
}

namespace detail {

[[noreturn]] inline void rethrow_for_seed(std::uint64_t seed) {
  const std::string where = "seed " + std::to_string(seed) + ": ";
  try {
    throw;
  } catch (const DivergenceError& e) {
    throw DivergenceError(where + e.what(), e.trace());
  } catch (const DegenerateError& e) {
    throw DegenerateError(where + e.what());
  } catch (const NumericalError& e) {
    throw NumericalError(where + e.what());
  } catch (const DataError& e) {
    throw DataError(where + e.what());
  } catch (const ConfigError& e) {
    throw ConfigError(where + e.what());
  }
}

}  // namespace detail

inline RetrievalReport aggregate(const ExperimentConfig& c, const std::vector<SeedResult>& per_seed) {
  RetrievalReport report;
  report.method = to_string(c.method);
  report.seeds = c.seeds;
  report.config = to_json(c);
  report.fingerprint = config_fingerprint(report.config);
  report.skipped_queries = per_seed.empty() ? 0 : per_seed.front().skipped_queries;
  for (std::size_t k = 0; k < c.metrics.size(); ++k) {
    std::vector<double> runs;
    for (const auto& s : per_seed) runs.push_back(s.values[k]);
    report.metrics.emplace_back(c.metrics[k], MetricSummary::of(std::move(runs)));
  }
  return report;
}

/// One run per seed on already-loaded data. Seeds run in parallel; results are
/// collected by seed position, so the report does not depend on thread count.
inline RetrievalReport run_experiment(const ExperimentConfig& c, const ExperimentData& d) {
  validate(c);
  unsigned threads = c.threads ? c.threads : std::max(1u, std::thread::hardware_concurrency());
  const unsigned seed_threads = std::min<unsigned>(threads, static_cast<unsigned>(c.seeds.size()));
  const unsigned metric_threads = std::max(1u, threads / std::max(1u, seed_threads));
  std::vector<SeedResult> per_seed(c.seeds.size());
  std::vector<std::exception_ptr> failures(c.seeds.size());
  detail::parallel_for(c.seeds.size(), seed_threads, [&](std::size_t k) {
    try {
      const auto e = embed_images(c, d, c.seeds[k]);
      per_seed[k] = evaluate_embeddings(e, d.classes, c.metrics, c.seeds[k], metric_threads);
    } catch (...) {
      failures[k] = std::current_exception();
    }
  });
  for (std::size_t k = 0; k < failures.size(); ++k) {
    if (!failures[k]) continue;
    try {
      std::rethrow_exception(failures[k]);
    } catch (...) {
      detail::rethrow_for_seed(c.seeds[k]);
    }
  }
  return aggregate(c, per_seed);
}

inline RetrievalReport run_experiment(const ExperimentConfig& c) { return run_experiment(c, load_experiment_data(c)); }

enum class SweepAxis { kTargetDim, kPromptCount };

struct SweepPoint {
  long value = 0;
  std::optional<RetrievalReport> report;
  std::string error;  // set when the point could not run
};

inline nlohmann::json to_json(const SweepPoint& p) {
  nlohmann::json j = {{"value", p.value}};
  if (p.report) j["report"] = to_json(*p.report);
  else j["error"] = p.error;
  return j;
}

/// One experiment per axis value, run in parallel and returned in axis order.
/// Inapplicable points record their error.
inline std::vector<SweepPoint> run_sweep(const ExperimentConfig& c, SweepAxis axis, const std::vector<long>& values) {
  if (values.empty()) throw ConfigError("sweep needs at least one axis value");
  if (axis == SweepAxis::kPromptCount && !needs_texts(c.method)) {
    throw ConfigError("prompt-count sweeps apply only to text-trained methods");
  }
  ExperimentConfig base = c;
  base.sweep_dims.clear();
  base.sweep_prompt_counts.clear();
  validate(base);
  // load once with a dimension every point can reuse; per-point checks run below
  ExperimentConfig probe = base;
  probe.target_dim = 1;
  probe.prompt_sample.reset();
  const ExperimentData data = load_experiment_data(probe);

  const unsigned threads = c.threads ? c.threads : std::max(1u, std::thread::hardware_concurrency());
  const unsigned point_threads = std::min<unsigned>(threads, static_cast<unsigned>(values.size()));
  std::vector<SweepPoint> out(values.size());
  detail::parallel_for(values.size(), point_threads, [&](std::size_t k) {
    const long v = values[k];
    ExperimentConfig point = base;
    point.threads = std::max(1u, threads / point_threads);
    if (axis == SweepAxis::kTargetDim) point.target_dim = v;
    else point.prompt_sample = v;
    SweepPoint p{v, std::nullopt, {}};
    try {
      validate(point);
      const Eigen::Index input_dim = data.images ? data.images->dim() : point.target_dim;
      const bool reduces = point.method != Method::kClipPassthrough && point.method != Method::kRandomEmbedding;
      if (reduces && point.target_dim > input_dim) {
        throw ConfigError("target_dim " + std::to_string(point.target_dim) + " exceeds input dim " +
                          std::to_string(input_dim));
      }
      if (point.prompt_sample && *point.prompt_sample > data.texts->count()) {
        throw ConfigError("prompt sample of " + std::to_string(*point.prompt_sample) + " exceeds the " +
                          std::to_string(data.texts->count()) + " available prompts");
      }
      p.report = run_experiment(point, data);
    } catch (const ConfigError& e) {
      p.error = e.what();
    } catch (const DataError& e) {
      p.error = e.what();
    } catch (const NumericalError& e) {
      p.error = e.what();
    }
    out[k] = std::move(p);
  });
  return out;
}

}  // namespace indirect
