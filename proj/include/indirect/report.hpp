#pragma once

// Aggregated metric reports: JSON form, configuration fingerprint, and the
// fixed-width percent table.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "indirect/errors.hpp"

namespace indirect {

enum class Metric { kMapAtR, kPrecAt1, kRPrec, kMap, kMrr, kAmi, kNmi };

inline constexpr std::array<Metric, 7> kAllMetrics = {Metric::kMapAtR, Metric::kPrecAt1, Metric::kRPrec, Metric::kMap,
                                                      Metric::kMrr,    Metric::kAmi,     Metric::kNmi};

inline const char* metric_key(Metric m) {
  switch (m) {
    case Metric::kMapAtR: return "map_at_r";
    case Metric::kPrecAt1: return "prec_at_1";
    case Metric::kRPrec: return "r_prec";
    case Metric::kMap: return "map";
    case Metric::kMrr: return "mrr";
    case Metric::kAmi: return "ami";
    case Metric::kNmi: return "nmi";
  }
  return "?";
}

inline const char* metric_display_name(Metric m) {
  switch (m) {
    case Metric::kMapAtR: return "MAP@R";
    case Metric::kPrecAt1: return "Prec@1";
    case Metric::kRPrec: return "R-Prec";
    case Metric::kMap: return "MAP";
    case Metric::kMrr: return "MRR";
    case Metric::kAmi: return "AMI";
    case Metric::kNmi: return "NMI";
  }
  return "?";
}

/// Accepts either the JSON key ("map_at_r") or the display name ("MAP@R"), any case.
inline Metric metric_from_string(const std::string& s) {
  const auto lower = [](std::string x) {
    std::transform(x.begin(), x.end(), x.begin(), [](unsigned char c) { return std::tolower(c); });
    return x;
  };
  const std::string want = lower(s);
  for (Metric m : kAllMetrics) {
    if (want == metric_key(m) || want == lower(metric_display_name(m))) return m;
  }
  throw ConfigError("unknown metric '" + s + "'");
}

inline bool is_clustering_metric(Metric m) { return m == Metric::kAmi || m == Metric::kNmi; }

struct MetricSummary {
  double mean = 0;
  double std = 0;  // population standard deviation over runs
  std::vector<double> runs;

  static MetricSummary of(std::vector<double> runs) {
    MetricSummary s;
    s.runs = std::move(runs);
    if (s.runs.empty()) return s;
    double total = 0.0;
    for (double v : s.runs) total += v;
    s.mean = total / static_cast<double>(s.runs.size());
    double sq = 0.0;
    for (double v : s.runs) sq += (v - s.mean) * (v - s.mean);
    s.std = std::sqrt(sq / static_cast<double>(s.runs.size()));
    return s;
  }
};

/// 64-bit FNV-1a of the canonical JSON dump, as 16 hex digits.
inline std::string config_fingerprint(const nlohmann::json& config) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : config.dump()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  std::ostringstream out;
  out << std::hex << std::setw(16) << std::setfill('0') << h;
  return out.str();
}

struct RetrievalReport {
  std::string method;
  std::vector<std::uint64_t> seeds;
  std::vector<std::pair<Metric, MetricSummary>> metrics;  // in selection order
  std::size_t skipped_queries = 0;
  nlohmann::json config;
  std::string fingerprint;

  const MetricSummary* find(Metric m) const {
    for (const auto& [k, v] : metrics)
      if (k == m) return &v;
    return nullptr;
  }

  const MetricSummary& at(Metric m) const {
    const auto* s = find(m);
    if (!s) throw ConfigError(std::string("report has no ") + metric_display_name(m));
    return *s;
  }
};

inline nlohmann::json to_json(const RetrievalReport& r) {
  nlohmann::json metrics = nlohmann::json::object();
  for (const auto& [m, s] : r.metrics) metrics[metric_key(m)] = {{"mean", s.mean}, {"std", s.std}, {"runs", s.runs}};
  nlohmann::json order = nlohmann::json::array();
  for (const auto& [m, s] : r.metrics) order.push_back(metric_key(m));
  return {{"method", r.method},     {"seeds", r.seeds},   {"metrics", metrics},        {"metric_order", order},
          {"config", r.config},     {"fingerprint", r.fingerprint}, {"skipped_queries", r.skipped_queries}};
}

inline RetrievalReport report_from_json(const nlohmann::json& j) {
  try {
    RetrievalReport r;
    r.method = j.at("method").get<std::string>();
    r.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    r.skipped_queries = j.at("skipped_queries").get<std::size_t>();
    r.config = j.at("config");
    r.fingerprint = j.at("fingerprint").get<std::string>();
    const auto& metrics = j.at("metrics");
    for (const auto& key : j.at("metric_order")) {
      const Metric m = metric_from_string(key.get<std::string>());
      const auto& entry = metrics.at(key.get<std::string>());
      MetricSummary s;
      s.mean = entry.at("mean").get<double>();
      s.std = entry.at("std").get<double>();
      s.runs = entry.at("runs").get<std::vector<double>>();
      r.metrics.emplace_back(m, std::move(s));
    }
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed report: ") + e.what());
  }
}

/// Column heading used in the comparison table for a method name.
inline std::string method_column_name(const std::string& method) {
  static const std::vector<std::pair<std::string, std::string>> names = {
      {"random-embedding", "Random"}, {"clip-passthrough", "CLIP"}, {"indirect", "InDiReCT"},
      {"random-transform", "Random Transf."}, {"pca", "PCA"}, {"lae", "LAE"}, {"ae", "AE"}, {"oracle", "Oracle"}};
  for (const auto& [k, v] : names)
    if (k == method) return v;
  return method;
}

inline int method_column_rank(const std::string& method) {
  static const std::vector<std::string> order = {"random-embedding", "clip-passthrough", "indirect", "random-transform",
                                                 "pca",              "lae",              "ae",       "oracle"};
  const auto it = std::find(order.begin(), order.end(), method);
  return it == order.end() ? static_cast<int>(order.size()) : static_cast<int>(it - order.begin());
}

/// "57.4 ± 0.2" in percent with one decimal; a single run prints the mean only.
inline std::string format_percent(const MetricSummary& s) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(1) << 100.0 * s.mean;
  if (s.runs.size() > 1) out << " ± " << std::setprecision(1) << 100.0 * s.std;
  return out.str();
}

namespace detail {
// Display width of UTF-8 text (counts code points).
inline std::size_t display_width(const std::string& s) {
  std::size_t w = 0;
  for (unsigned char c : s)
    if ((c & 0xC0) != 0x80) ++w;
  return w;
}
}  // namespace detail

/// Metrics as rows, methods as columns (Random, CLIP, InDiReCT, Random Transf.,
/// PCA, LAE, AE, Oracle, then anything else in input order).
inline std::string render_table(std::vector<RetrievalReport> reports) {
  std::stable_sort(reports.begin(), reports.end(), [](const auto& a, const auto& b) {
    return method_column_rank(a.method) < method_column_rank(b.method);
  });
  std::vector<Metric> rows;
  for (Metric m : kAllMetrics) {
    if (std::any_of(reports.begin(), reports.end(), [m](const auto& r) { return r.find(m) != nullptr; })) {
      rows.push_back(m);
    }
  }
  std::vector<std::vector<std::string>> cells;
  std::vector<std::string> header = {"Metric"};
  for (const auto& r : reports) header.push_back(method_column_name(r.method));
  cells.push_back(header);
  for (Metric m : rows) {
    std::vector<std::string> line = {metric_display_name(m)};
    for (const auto& r : reports) {
      const auto* s = r.find(m);
      line.push_back(s ? format_percent(*s) : "---");
    }
    cells.push_back(line);
  }
  std::vector<std::size_t> width(header.size(), 0);
  for (const auto& line : cells)
    for (std::size_t c = 0; c < line.size(); ++c) width[c] = std::max(width[c], detail::display_width(line[c]));

  std::ostringstream out;
  for (std::size_t k = 0; k < cells.size(); ++k) {
    for (std::size_t c = 0; c < cells[k].size(); ++c) {
      const std::string& text = cells[k][c];
      const std::string pad(width[c] - detail::display_width(text), ' ');
      if (c == 0) {
        out << text << pad;
      } else {
        out << "  " << pad << text;
      }
    }
    out << '\n';
    if (k == 0) {
      std::size_t total = 0;
      for (std::size_t c = 0; c < width.size(); ++c) total += width[c] + (c ? 2 : 0);
      out << std::string(total, '-') << '\n';
    }
  }
  return out.str();
}

}  // namespace indirect
