#pragma once

// Retrieval metrics (Prec@1, R-Prec, MAP@R, MAP, MRR) over cosine-similarity
// rankings, plus spherical k-means and NMI/AMI for the clustering metrics.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <exception>
#include <limits>
#include <map>
#include <numeric>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Core>

#include "indirect/embedding_store.hpp"
#include "indirect/errors.hpp"
#include "indirect/hypersphere.hpp"
#include "indirect/random.hpp"

namespace indirect {

// ---------------------------------------------------------------------------
// Similarity and ranking

namespace detail {

// Plain sequential loops: the rounding is fixed by the source order, so any
// other evaluator written the same way ranks identically.
inline double dot_sequential(const double* a, const double* b, Eigen::Index n) {
  double s = 0.0;
  for (Eigen::Index k = 0; k < n; ++k) s += a[k] * b[k];
  return s;
}

inline std::vector<double> row_norms(const EmbeddingSet& e) {
  std::vector<double> norms(static_cast<std::size_t>(e.count()));
  const RowMatrix& d = e.data();
  for (Eigen::Index i = 0; i < e.count(); ++i) {
    const double n = std::sqrt(dot_sequential(d.row(i).data(), d.row(i).data(), d.cols()));
    if (!(n > kNormEpsilon)) throw DegenerateError("embedding " + e.label_of(i) + " has zero norm");
    norms[static_cast<std::size_t>(i)] = n;
  }
  return norms;
}

inline void similarities_to(Eigen::Index q, const EmbeddingSet& e, const std::vector<double>& norms,
                            std::vector<double>& out) {
  const RowMatrix& d = e.data();
  out.resize(static_cast<std::size_t>(e.count()));
  const double* qa = d.row(q).data();
  const double nq = norms[static_cast<std::size_t>(q)];
  for (Eigen::Index j = 0; j < e.count(); ++j) {
    out[static_cast<std::size_t>(j)] =
        dot_sequential(qa, d.row(j).data(), d.cols()) / (nq * norms[static_cast<std::size_t>(j)]);
  }
}

/// Other rows sorted by descending similarity, ties by ascending index.
inline std::vector<Eigen::Index> order_neighbors(Eigen::Index q, const std::vector<double>& sim) {
  std::vector<Eigen::Index> order;
  order.reserve(sim.size() - 1);
  for (Eigen::Index j = 0; j < static_cast<Eigen::Index>(sim.size()); ++j)
    if (j != q) order.push_back(j);
  std::sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
    const double sa = sim[static_cast<std::size_t>(a)], sb = sim[static_cast<std::size_t>(b)];
    return sa != sb ? sa > sb : a < b;
  });
  return order;
}

/// Runs body(i) for i in [0, n) on up to `threads` workers (0 = hardware).
template <typename Body>
void parallel_for(std::size_t n, unsigned threads, Body&& body) {
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, std::max<std::size_t>(n, 1)));
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(threads);
  for (unsigned t = 0; t < threads; ++t) {
    pool.emplace_back([&, t] {
      try {
        for (std::size_t i = t; i < n; i += threads) body(i);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace detail

struct RankedRetrieval {
  Eigen::Index query;
  std::string query_id;
  std::vector<Eigen::Index> neighbors;  // query excluded
  std::vector<char> relevant;           // empty when ranked without labels
};

inline RankedRetrieval rank_neighbors(Eigen::Index query, const EmbeddingSet& e,
                                      const std::vector<int>* classes = nullptr) {
  if (e.count() < 2) throw ConfigError("ranking needs at least two embeddings");
  if (query < 0 || query >= e.count()) throw ConfigError("query index out of range");
  const auto norms = detail::row_norms(e);
  std::vector<double> sim;
  detail::similarities_to(query, e, norms, sim);
  RankedRetrieval out{query, e.label_of(query), detail::order_neighbors(query, sim), {}};
  if (classes) {
    const int own = (*classes)[static_cast<std::size_t>(query)];
    for (auto j : out.neighbors) out.relevant.push_back((*classes)[static_cast<std::size_t>(j)] == own);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Retrieval metrics

struct QueryScores {
  double precision_at_1 = 0;
  double r_precision = 0;
  double map_at_r = 0;
  double average_precision = 0;
  double reciprocal_rank = 0;
};

/// All five ranking metrics for one query in a single pass over its ranking.
/// `r` is the number of relevant items (class size - 1), at least 1.
inline QueryScores score_ranking(const std::vector<char>& relevant, long r) {
  QueryScores s;
  long hits = 0;
  double ap_at_r = 0.0, ap = 0.0;
  for (std::size_t k = 0; k < relevant.size() && hits < r; ++k) {
    if (!relevant[k]) continue;
    ++hits;
    const double rank = static_cast<double>(k + 1);
    const double precision = static_cast<double>(hits) / rank;
    if (hits == 1) s.reciprocal_rank = 1.0 / rank;
    if (static_cast<long>(k) < r) {
      ap_at_r += precision;
      s.r_precision += 1.0;
    }
    ap += precision;
  }
  s.precision_at_1 = !relevant.empty() && relevant[0] ? 1.0 : 0.0;
  s.r_precision /= static_cast<double>(r);
  s.map_at_r = ap_at_r / static_cast<double>(r);
  s.average_precision = ap / static_cast<double>(r);
  return s;
}

struct RetrievalScores {
  double precision_at_1 = 0;
  double r_precision = 0;
  double map_at_r = 0;
  double map = 0;
  double mrr = 0;
  std::size_t queries = 0;  // queries that entered the means
  std::size_t skipped = 0;  // queries whose class has a single member
};

/// Ranking metrics over every row as a query. Queries are evaluated in
/// parallel and summed in index order, so results do not depend on `threads`.
inline RetrievalScores evaluate_retrieval(const EmbeddingSet& e, const std::vector<int>& classes,
                                          unsigned threads = 0) {
  if (static_cast<Eigen::Index>(classes.size()) != e.count()) throw DataError("one label per embedding required");
  if (e.count() < 2) throw DataError("retrieval needs at least two embeddings");
  const auto norms = detail::row_norms(e);
  std::map<int, long> class_size;
  for (int c : classes) ++class_size[c];

  const std::size_t m = classes.size();
  std::vector<QueryScores> per_query(m);
  std::vector<char> active(m, 0);
  detail::parallel_for(m, threads, [&](std::size_t q) {
    const long r = class_size.at(classes[q]) - 1;
    if (r < 1) return;
    std::vector<double> sim;
    detail::similarities_to(static_cast<Eigen::Index>(q), e, norms, sim);
    const auto order = detail::order_neighbors(static_cast<Eigen::Index>(q), sim);
    std::vector<char> relevant(order.size());
    for (std::size_t k = 0; k < order.size(); ++k) relevant[k] = classes[static_cast<std::size_t>(order[k])] == classes[q];
    per_query[q] = score_ranking(relevant, r);
    active[q] = 1;
  });

  RetrievalScores out;
  for (std::size_t q = 0; q < m; ++q) {
    if (!active[q]) {
      ++out.skipped;
      continue;
    }
    ++out.queries;
    out.precision_at_1 += per_query[q].precision_at_1;
    out.r_precision += per_query[q].r_precision;
    out.map_at_r += per_query[q].map_at_r;
    out.map += per_query[q].average_precision;
    out.mrr += per_query[q].reciprocal_rank;
  }
  if (out.queries == 0) throw DataError("no class has two or more members; retrieval metrics are undefined");
  const double n = static_cast<double>(out.queries);
  out.precision_at_1 /= n;
  out.r_precision /= n;
  out.map_at_r /= n;
  out.map /= n;
  out.mrr /= n;
  return out;
}

inline RetrievalScores evaluate_retrieval(const EmbeddingSet& e, const LabelSet& labels, unsigned threads = 0) {
  return evaluate_retrieval(e, encode_labels(align_labels(e, labels)), threads);
}

inline double precision_at_1(const EmbeddingSet& e, const LabelSet& labels) {
  return evaluate_retrieval(e, labels).precision_at_1;
}
inline double r_precision(const EmbeddingSet& e, const LabelSet& labels) { return evaluate_retrieval(e, labels).r_precision; }
inline double map_at_r(const EmbeddingSet& e, const LabelSet& labels) { return evaluate_retrieval(e, labels).map_at_r; }
inline double mean_average_precision(const EmbeddingSet& e, const LabelSet& labels) {
  return evaluate_retrieval(e, labels).map;
}
inline double mean_reciprocal_rank(const EmbeddingSet& e, const LabelSet& labels) {
  return evaluate_retrieval(e, labels).mrr;
}

// ---------------------------------------------------------------------------
// Spherical k-means

struct KMeansResult {
  std::vector<int> assignments;
  RowMatrix centroids;             // unit rows
  std::vector<double> objective;   // sum of (1 - cos) after each update
  long iterations = 0;
  bool converged = false;
};

inline constexpr long kKMeansMaxIterations = 300;

/// Cosine k-means with k-means++ seeding. An empty cluster takes over the
/// point farthest from its own centroid (lowest index on ties).
inline KMeansResult kmeans(const EmbeddingSet& e, int k, std::uint64_t seed, long max_iterations = kKMeansMaxIterations) {
  const Eigen::Index m = e.count();
  if (k < 1 || k > m) throw ConfigError("k must be in [1, " + std::to_string(m) + "], got " + std::to_string(k));
  const RowMatrix x = normalize_rows(e);
  SplitMix64 rng(seed, Stream::kKMeans);

  RowMatrix centroids(k, x.cols());
  std::vector<double> dist(static_cast<std::size_t>(m), std::numeric_limits<double>::infinity());
  Eigen::Index pick = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(m)));
  for (int c = 0; c < k; ++c) {
    if (c > 0) {
      double total = 0.0;
      for (double d : dist) total += d * d;
      if (total > 0.0) {
        double target = rng.uniform() * total;
        pick = -1;
        Eigen::Index last_positive = 0;
        for (Eigen::Index i = 0; i < m; ++i) {
          const double w = dist[static_cast<std::size_t>(i)] * dist[static_cast<std::size_t>(i)];
          if (w <= 0.0) continue;
          last_positive = i;
          if (target < w) {
            pick = i;
            break;
          }
          target -= w;
        }
        if (pick < 0) pick = last_positive;  // rounding ran past the end
      } else {
        pick = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(m)));
      }
    }
    centroids.row(c) = x.row(pick);
    for (Eigen::Index i = 0; i < m; ++i) {
      const double d = std::max(0.0, 1.0 - x.row(i).dot(centroids.row(c)));
      dist[static_cast<std::size_t>(i)] = std::min(dist[static_cast<std::size_t>(i)], d);
    }
  }

  KMeansResult out;
  out.assignments.assign(static_cast<std::size_t>(m), -1);
  for (long it = 0; it < max_iterations; ++it) {
    const Eigen::MatrixXd sim = x * centroids.transpose();
    bool changed = false;
    std::vector<int> counts(static_cast<std::size_t>(k), 0);
    for (Eigen::Index i = 0; i < m; ++i) {
      Eigen::Index best = 0;
      sim.row(i).maxCoeff(&best);
      if (out.assignments[static_cast<std::size_t>(i)] != static_cast<int>(best)) changed = true;
      out.assignments[static_cast<std::size_t>(i)] = static_cast<int>(best);
      ++counts[static_cast<std::size_t>(best)];
    }
    for (int c = 0; c < k; ++c) {
      if (counts[static_cast<std::size_t>(c)] > 0) continue;
      Eigen::Index far = -1;
      double worst = -1.0;
      for (Eigen::Index i = 0; i < m; ++i) {
        const int a = out.assignments[static_cast<std::size_t>(i)];
        if (counts[static_cast<std::size_t>(a)] < 2) continue;
        const double d = 1.0 - x.row(i).dot(centroids.row(a));
        if (d > worst) {
          worst = d;
          far = i;
        }
      }
      if (far < 0) throw NumericalError("k-means cannot fill an empty cluster");
      --counts[static_cast<std::size_t>(out.assignments[static_cast<std::size_t>(far)])];
      out.assignments[static_cast<std::size_t>(far)] = c;
      counts[static_cast<std::size_t>(c)] = 1;
      centroids.row(c) = x.row(far);
      changed = true;
    }

    RowMatrix sums = RowMatrix::Zero(k, x.cols());
    for (Eigen::Index i = 0; i < m; ++i) sums.row(out.assignments[static_cast<std::size_t>(i)]) += x.row(i);
    for (int c = 0; c < k; ++c) {
      const double n = sums.row(c).norm();
      if (n > kNormEpsilon) centroids.row(c) = sums.row(c) / n;  // else members cancel out; keep the old centroid
    }
    double objective = 0.0;
    for (Eigen::Index i = 0; i < m; ++i)
      objective += 1.0 - x.row(i).dot(centroids.row(out.assignments[static_cast<std::size_t>(i)]));
    out.objective.push_back(objective);
    out.iterations = it + 1;
    if (!changed) {
      out.converged = true;
      break;
    }
  }
  out.centroids = std::move(centroids);
  return out;
}

// ---------------------------------------------------------------------------
// Partition agreement

namespace detail {

struct Contingency {
  std::vector<std::vector<long>> table;
  std::vector<long> rows, cols;
  long n = 0;
};

inline Contingency contingency(const std::vector<int>& a, const std::vector<int>& b) {
  if (a.size() != b.size() || a.empty()) throw ConfigError("partitions must cover the same non-empty item set");
  const auto dense = [](const std::vector<int>& v) {
    std::map<int, int> index;
    std::vector<int> out;
    out.reserve(v.size());
    for (int x : v) out.push_back(index.emplace(x, static_cast<int>(index.size())).first->second);
    return out;
  };
  const auto ea = dense(a);
  const auto eb = dense(b);
  Contingency c;
  const int ra = *std::max_element(ea.begin(), ea.end()) + 1;
  const int rb = *std::max_element(eb.begin(), eb.end()) + 1;
  c.table.assign(static_cast<std::size_t>(ra), std::vector<long>(static_cast<std::size_t>(rb), 0));
  c.rows.assign(static_cast<std::size_t>(ra), 0);
  c.cols.assign(static_cast<std::size_t>(rb), 0);
  for (std::size_t i = 0; i < ea.size(); ++i) {
    ++c.table[static_cast<std::size_t>(ea[i])][static_cast<std::size_t>(eb[i])];
    ++c.rows[static_cast<std::size_t>(ea[i])];
    ++c.cols[static_cast<std::size_t>(eb[i])];
  }
  c.n = static_cast<long>(a.size());
  return c;
}

inline double entropy(const std::vector<long>& counts, long n) {
  double h = 0.0;
  for (long c : counts) {
    if (c == 0) continue;
    const double p = static_cast<double>(c) / static_cast<double>(n);
    h -= p * std::log(p);
  }
  return h;
}

inline double mutual_information(const Contingency& c) {
  const double n = static_cast<double>(c.n);
  double mi = 0.0;
  for (std::size_t i = 0; i < c.rows.size(); ++i) {
    for (std::size_t j = 0; j < c.cols.size(); ++j) {
      const long nij = c.table[i][j];
      if (nij == 0) continue;
      const double v = static_cast<double>(nij);
      mi += v / n * std::log(n * v / (static_cast<double>(c.rows[i]) * static_cast<double>(c.cols[j])));
    }
  }
  return std::max(0.0, mi);
}

/// Expected mutual information under the hypergeometric permutation model.
inline double expected_mutual_information(const Contingency& c) {
  const long n = c.n;
  const double nd = static_cast<double>(n);
  const double lg_n = std::lgamma(nd + 1);
  double emi = 0.0;
  for (long a : c.rows) {
    for (long b : c.cols) {
      const double ad = static_cast<double>(a), bd = static_cast<double>(b);
      const double fixed = std::lgamma(ad + 1) + std::lgamma(bd + 1) + std::lgamma(nd - ad + 1) +
                           std::lgamma(nd - bd + 1) - lg_n;
      for (long nij = std::max(1L, a + b - n); nij <= std::min(a, b); ++nij) {
        const double v = static_cast<double>(nij);
        const double log_p = fixed - std::lgamma(v + 1) - std::lgamma(ad - v + 1) - std::lgamma(bd - v + 1) -
                             std::lgamma(nd - ad - bd + v + 1);
        emi += v / nd * std::log(nd * v / (ad * bd)) * std::exp(log_p);
      }
    }
  }
  return emi;
}

}  // namespace detail

/// Mutual information normalized by the arithmetic mean of the two entropies.
inline double nmi(const std::vector<int>& assignments, const std::vector<int>& labels) {
  const auto c = detail::contingency(assignments, labels);
  if (c.rows.size() == 1 && c.cols.size() == 1) return 1.0;
  const double h = 0.5 * (detail::entropy(c.rows, c.n) + detail::entropy(c.cols, c.n));
  if (h <= 0.0) return 0.0;
  return std::min(1.0, detail::mutual_information(c) / h);
}

/// Mutual information adjusted for chance, arithmetic-mean normalization.
inline double ami(const std::vector<int>& assignments, const std::vector<int>& labels) {
  const auto c = detail::contingency(assignments, labels);
  if (c.rows.size() == c.cols.size() && (c.rows.size() == 1 || static_cast<long>(c.rows.size()) == c.n)) return 1.0;
  const double mi = detail::mutual_information(c);
  const double emi = detail::expected_mutual_information(c);
  const double h = 0.5 * (detail::entropy(c.rows, c.n) + detail::entropy(c.cols, c.n));
  double denom = h - emi;
  const double tiny = std::numeric_limits<double>::epsilon();
  denom = denom < 0 ? std::min(denom, -tiny) : std::max(denom, tiny);
  return (mi - emi) / denom;
}

struct ClusteringScores {
  double nmi = 0;
  double ami = 0;
  long kmeans_iterations = 0;
};

/// k-means with k = number of classes, scored against the class labels.
inline ClusteringScores evaluate_clustering(const EmbeddingSet& e, const std::vector<int>& classes, std::uint64_t seed) {
  if (static_cast<Eigen::Index>(classes.size()) != e.count()) throw DataError("one label per embedding required");
  const int k = *std::max_element(classes.begin(), classes.end()) + 1;
  const auto km = kmeans(e, k, seed);
  return ClusteringScores{nmi(km.assignments, classes), ami(km.assignments, classes), km.iterations};
}

}  // namespace indirect
