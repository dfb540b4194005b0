#pragma once

// Embedding files, label files and prompt manifests.
//
// Embedding file layout (all integers little-endian):
//   bytes 0..3        magic "EMB1"
//   bytes 4..7        uint32 header length H
//   bytes 8..8+H      UTF-8 JSON {"count": m, "dim": r, "dtype": "f32", "ids": [...] | null}
//   remainder         m * r IEEE-754 float32 values, row-major
//
// Values are held as double in memory. float -> double -> float is exact, so
// a read/write round trip reproduces the file bit for bit.

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iterator>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "indirect/errors.hpp"

namespace indirect {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline constexpr std::array<char, 4> kEmbeddingMagic = {'E', 'M', 'B', '1'};

/// m row vectors of dimension r with optional unique per-row identifiers.
/// Immutable once constructed; the constructor enforces the invariants.
class EmbeddingSet {
 public:
  explicit EmbeddingSet(RowMatrix data, std::optional<std::vector<std::string>> ids = std::nullopt)
      : data_(std::move(data)), ids_(std::move(ids)) {
    if (data_.rows() == 0 || data_.cols() == 0) {
      throw DataError("embedding set must have at least one row and one column");
    }
    for (Eigen::Index i = 0; i < data_.rows(); ++i) {
      for (Eigen::Index j = 0; j < data_.cols(); ++j) {
        if (!std::isfinite(data_(i, j))) {
          throw DataError("embedding set has a non-finite value at row " + std::to_string(i) +
                          ", column " + std::to_string(j));
        }
      }
    }
    if (ids_) {
      if (static_cast<Eigen::Index>(ids_->size()) != data_.rows()) {
        throw DataError("embedding set has " + std::to_string(ids_->size()) + " ids for " +
                        std::to_string(data_.rows()) + " rows");
      }
      std::unordered_set<std::string> seen;
      for (const auto& id : *ids_) {
        if (!seen.insert(id).second) throw DataError("duplicate embedding id '" + id + "'");
      }
    }
  }

  Eigen::Index count() const { return data_.rows(); }
  Eigen::Index dim() const { return data_.cols(); }
  const RowMatrix& data() const { return data_; }
  auto row(Eigen::Index i) const { return data_.row(i); }
  const std::optional<std::vector<std::string>>& ids() const { return ids_; }

  /// The row's id, or its index when the set carries no ids.
  std::string label_of(Eigen::Index i) const {
    return ids_ ? (*ids_)[static_cast<std::size_t>(i)] : "#" + std::to_string(i);
  }

  /// Subset of rows, in the given order.
  EmbeddingSet select(const std::vector<Eigen::Index>& rows) const {
    RowMatrix out(static_cast<Eigen::Index>(rows.size()), dim());
    std::optional<std::vector<std::string>> out_ids;
    if (ids_) out_ids.emplace();
    for (std::size_t k = 0; k < rows.size(); ++k) {
      out.row(static_cast<Eigen::Index>(k)) = data_.row(rows[k]);
      if (ids_) out_ids->push_back((*ids_)[static_cast<std::size_t>(rows[k])]);
    }
    return EmbeddingSet(std::move(out), std::move(out_ids));
  }

  friend bool operator==(const EmbeddingSet& a, const EmbeddingSet& b) {
    return a.data_.rows() == b.data_.rows() && a.data_.cols() == b.data_.cols() &&
           a.data_ == b.data_ && a.ids_ == b.ids_;
  }

 private:
  RowMatrix data_;
  std::optional<std::vector<std::string>> ids_;
};

namespace detail {

inline void put_u32_le(std::string& out, std::uint32_t v) {
  for (int k = 0; k < 4; ++k) out.push_back(static_cast<char>((v >> (8 * k)) & 0xFFu));
}

inline std::uint32_t get_u32_le(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

}  // namespace detail

/// Serializes `set` into the embedding file format. Nothing is written if a
/// value does not survive conversion to a finite float32.
inline std::size_t write_embeddings(const EmbeddingSet& set, std::ostream& out) {
  const auto& data = set.data();
  std::string payload;
  payload.reserve(static_cast<std::size_t>(data.size()) * 4);
  for (Eigen::Index i = 0; i < data.rows(); ++i) {
    for (Eigen::Index j = 0; j < data.cols(); ++j) {
      const auto value = static_cast<float>(data(i, j));
      if (!std::isfinite(value)) {
        throw DataError("value at row " + std::to_string(i) + ", column " + std::to_string(j) +
                        " is not representable as a finite float32");
      }
      detail::put_u32_le(payload, std::bit_cast<std::uint32_t>(value));
    }
  }

  nlohmann::json header = {{"count", data.rows()}, {"dim", data.cols()}, {"dtype", "f32"}};
  header["ids"] = set.ids() ? nlohmann::json(*set.ids()) : nlohmann::json(nullptr);
  const std::string header_text = header.dump();

  std::string bytes(kEmbeddingMagic.begin(), kEmbeddingMagic.end());
  detail::put_u32_le(bytes, static_cast<std::uint32_t>(header_text.size()));
  bytes += header_text;
  bytes += payload;
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("failed to write embedding bytes");
  return bytes.size();
}

inline EmbeddingSet read_embeddings(std::istream& in) {
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const auto* raw = reinterpret_cast<const unsigned char*>(bytes.data());

  if (bytes.size() < 4 || !std::equal(kEmbeddingMagic.begin(), kEmbeddingMagic.end(), bytes.begin())) {
    throw FormatError(FormatErrorKind::kBadMagic, 0, "expected \"EMB1\"");
  }
  if (bytes.size() < 8) {
    throw FormatError(FormatErrorKind::kTruncated, bytes.size(), "header length field incomplete");
  }
  const std::size_t header_len = detail::get_u32_le(raw + 4);
  if (bytes.size() < 8 + header_len) {
    throw FormatError(FormatErrorKind::kTruncated, bytes.size(),
                      "header claims " + std::to_string(header_len) + " bytes");
  }

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.begin() + 8, bytes.begin() + 8 + static_cast<std::ptrdiff_t>(header_len));
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(FormatErrorKind::kBadHeader, 8, e.what());
  }
  const auto require_positive = [&](const char* key) -> std::size_t {
    if (!header.is_object() || !header.contains(key) || !header[key].is_number_unsigned() ||
        header[key].get<std::uint64_t>() == 0) {
      throw FormatError(FormatErrorKind::kBadHeader, 8, std::string("\"") + key + "\" must be a positive integer");
    }
    return header[key].get<std::size_t>();
  };
  const std::size_t count = require_positive("count");
  const std::size_t dim = require_positive("dim");
  if (!header.contains("dtype") || header["dtype"] != "f32") {
    throw FormatError(FormatErrorKind::kBadHeader, 8, "\"dtype\" must be \"f32\"");
  }
  std::optional<std::vector<std::string>> ids;
  if (header.contains("ids") && !header["ids"].is_null()) {
    try {
      ids = header["ids"].get<std::vector<std::string>>();
    } catch (const nlohmann::json::exception&) {
      throw FormatError(FormatErrorKind::kBadHeader, 8, "\"ids\" must be null or a list of strings");
    }
    if (ids->size() != count) {
      throw FormatError(FormatErrorKind::kBadHeader, 8, "\"ids\" length differs from count");
    }
  }

  const std::size_t payload_offset = 8 + header_len;
  const std::size_t payload_len = bytes.size() - payload_offset;
  if (payload_len % 4 != 0) {
    throw FormatError(FormatErrorKind::kTruncated, payload_offset + payload_len / 4 * 4,
                      "payload ends inside a float32 value");
  }
  if (count > std::numeric_limits<std::size_t>::max() / dim || payload_len / 4 != count * dim) {
    throw FormatError(FormatErrorKind::kSizeMismatch, payload_offset,
                      "header describes " + std::to_string(count) + "x" + std::to_string(dim) +
                          " values, payload holds " + std::to_string(payload_len / 4));
  }

  RowMatrix data(static_cast<Eigen::Index>(count), static_cast<Eigen::Index>(dim));
  for (std::size_t k = 0; k < count * dim; ++k) {
    const std::size_t offset = payload_offset + 4 * k;
    const auto value = std::bit_cast<float>(detail::get_u32_le(raw + offset));
    if (!std::isfinite(value)) {
      throw FormatError(FormatErrorKind::kNonFinite, offset,
                        "row " + std::to_string(k / dim) + ", column " + std::to_string(k % dim));
    }
    data(static_cast<Eigen::Index>(k / dim), static_cast<Eigen::Index>(k % dim)) = value;
  }
  try {
    return EmbeddingSet(std::move(data), std::move(ids));
  } catch (const DataError& e) {
    throw FormatError(FormatErrorKind::kBadHeader, 8, e.what());
  }
}

inline EmbeddingSet read_embeddings_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open embedding file '" + path + "'");
  return read_embeddings(in);
}

inline std::size_t write_embeddings_file(const EmbeddingSet& set, const std::string& path) {
  // Serialize to memory first so a rejected set never creates a partial file.
  std::ostringstream buffer;
  write_embeddings(set, buffer);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot create embedding file '" + path + "'");
  const std::string bytes = buffer.str();
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("failed writing '" + path + "'");
  return bytes.size();
}

/// Ground-truth (id, label) pairs. Used for evaluation and the Oracle only.
class LabelSet {
 public:
  LabelSet() = default;
  explicit LabelSet(std::vector<std::pair<std::string, std::string>> entries)
      : entries_(std::move(entries)) {
    for (std::size_t k = 0; k < entries_.size(); ++k) {
      const auto& [id, label] = entries_[k];
      if (label.empty()) throw DataError("empty label for id '" + id + "'");
      if (!index_.emplace(id, k).second) throw DataError("duplicate label id '" + id + "'");
    }
  }

  std::size_t size() const { return entries_.size(); }
  const std::vector<std::pair<std::string, std::string>>& entries() const { return entries_; }

  const std::string* find(const std::string& id) const {
    const auto it = index_.find(id);
    return it == index_.end() ? nullptr : &entries_[it->second].second;
  }

 private:
  std::vector<std::pair<std::string, std::string>> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Parses the two-column TSV label format (id<TAB>label, no header row).
inline LabelSet read_labels(std::istream& in) {
  std::vector<std::pair<std::string, std::string>> entries;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos || line.find('\t', tab + 1) != std::string::npos) {
      throw DataError("label file line " + std::to_string(line_no) + ": expected exactly two tab-separated columns");
    }
    entries.emplace_back(line.substr(0, tab), line.substr(tab + 1));
  }
  return LabelSet(std::move(entries));
}

inline LabelSet read_labels_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open label file '" + path + "'");
  return read_labels(in);
}

inline void write_labels(const LabelSet& labels, std::ostream& out) {
  for (const auto& [id, label] : labels.entries()) out << id << '\t' << label << '\n';
}

inline void write_labels_file(const LabelSet& labels, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot create label file '" + path + "'");
  write_labels(labels, out);
  if (!out) throw DataError("failed writing '" + path + "'");
}

/// Label of every row of `set`. Sets with ids join on id and the id sets must
/// match exactly; sets without ids pair with the label file by position.
inline std::vector<std::string> align_labels(const EmbeddingSet& set, const LabelSet& labels) {
  if (static_cast<Eigen::Index>(labels.size()) != set.count()) {
    throw DataError("label file has " + std::to_string(labels.size()) + " entries for " +
                    std::to_string(set.count()) + " embeddings");
  }
  std::vector<std::string> out;
  out.reserve(labels.size());
  if (!set.ids()) {
    for (const auto& entry : labels.entries()) out.push_back(entry.second);
    return out;
  }
  for (const auto& id : *set.ids()) {
    const auto* label = labels.find(id);
    if (label == nullptr) throw DataError("no label for embedding id '" + id + "'");
    out.push_back(*label);
  }
  return out;
}

/// Dense class indices (0..C-1, in order of first appearance) for per-row labels.
inline std::vector<int> encode_labels(const std::vector<std::string>& labels,
                                      std::vector<std::string>* classes = nullptr) {
  std::unordered_map<std::string, int> index;
  std::vector<int> out;
  out.reserve(labels.size());
  for (const auto& label : labels) {
    const auto [it, inserted] = index.emplace(label, static_cast<int>(index.size()));
    if (inserted && classes) classes->push_back(label);
    out.push_back(it->second);
  }
  return out;
}

/// A sentence template with one bracketed placeholder, e.g. "a [color name] car".
class PromptManifest {
 public:
  PromptManifest(std::string prompt_template, std::vector<std::string> aspects)
      : template_(std::move(prompt_template)), aspects_(std::move(aspects)) {
    placeholder_ = find_placeholder(template_);
    if (aspects_.empty()) throw DataError("prompt manifest has no aspects");
    std::unordered_set<std::string> seen;
    for (const auto& a : aspects_) {
      if (!seen.insert(a).second) throw DataError("duplicate aspect '" + a + "'");
    }
  }

  const std::string& prompt_template() const { return template_; }
  const std::vector<std::string>& aspects() const { return aspects_; }

  /// Position and length of the placeholder token within the template.
  std::pair<std::size_t, std::size_t> placeholder() const { return placeholder_; }

 private:
  static std::pair<std::size_t, std::size_t> find_placeholder(std::string_view text) {
    std::optional<std::pair<std::size_t, std::size_t>> found;
    std::size_t count = 0;
    for (std::size_t open = text.find('['); open != std::string_view::npos; open = text.find('[', open + 1)) {
      const auto close = text.find_first_of("[]", open + 1);
      if (close == std::string_view::npos || text[close] != ']' || close == open + 1) continue;
      ++count;
      found = {open, close - open + 1};
    }
    if (count != 1) {
      throw DataError("prompt template must contain exactly one [placeholder], found " + std::to_string(count));
    }
    return *found;
  }

  std::string template_;
  std::vector<std::string> aspects_;
  std::pair<std::size_t, std::size_t> placeholder_;
};

inline std::vector<std::string> render_prompts(const PromptManifest& manifest) {
  const auto [pos, len] = manifest.placeholder();
  std::vector<std::string> prompts;
  prompts.reserve(manifest.aspects().size());
  for (const auto& aspect : manifest.aspects()) {
    std::string prompt = manifest.prompt_template();
    prompt.replace(pos, len, aspect);
    prompts.push_back(std::move(prompt));
  }
  return prompts;
}

inline PromptManifest parse_manifest(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("template") || !j["template"].is_string() || !j.contains("aspects") ||
      !j["aspects"].is_array()) {
    throw DataError("prompt manifest must be {\"template\": string, \"aspects\": [string, ...]}");
  }
  try {
    return PromptManifest(j["template"].get<std::string>(), j["aspects"].get<std::vector<std::string>>());
  } catch (const nlohmann::json::exception&) {
    throw DataError("prompt manifest aspects must be strings");
  }
}

inline PromptManifest read_manifest_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open prompt manifest '" + path + "'");
  try {
    return parse_manifest(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError("prompt manifest '" + path + "': " + e.what());
  }
}

}  // namespace indirect
