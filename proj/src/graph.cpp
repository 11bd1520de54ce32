#include "aadml/graph.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>

#include "aadml/error.hpp"

namespace aadml {

namespace {

double row_norm(const Tensor& m, std::size_t row) {
  double ss = 0.0;
  for (std::size_t c = 0; c < m.cols(); ++c) {
    double v = m.at(row, c);
    ss += v * v;
  }
  return std::sqrt(ss);
}

// Similarity used during construction: zero-norm rows never win a slot.
double lenient_cosine(const Tensor& a, std::size_t i, const Tensor& b, std::size_t j) {
  const double na = row_norm(a, i);
  const double nb = row_norm(b, j);
  if (na == 0.0 || nb == 0.0) return -std::numeric_limits<double>::infinity();
  double dot = 0.0;
  for (std::size_t c = 0; c < a.cols(); ++c) dot += a.at(i, c) * b.at(j, c);
  return dot / (na * nb);
}

NeighborList select_neighbors(std::size_t q, std::size_t k, const Tensor& anchors,
                              const Tensor& candidates, const LabelMatrix& labels) {
  if (k < 1) throw Error("knn_select: k must be >= 1");
  NeighborList list;
  list.anchor = q;
  // The anchor occupies slot 0; k counts it, so k-1 candidate slots remain.
  list.indices.push_back(q);
  list.scores.push_back(lenient_cosine(anchors, q, candidates, q));

  std::vector<std::pair<double, std::size_t>> scored;
  for (std::size_t p = 0; p < candidates.rows(); ++p) {
    if (p == q || !labels.share_category(q, p)) continue;
    const double sim = lenient_cosine(anchors, q, candidates, p);
    if (std::isinf(sim) && sim < 0) continue;  // degenerate rows are never selected
    scored.emplace_back(sim, p);
  }
  std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  const std::size_t want = k - 1;
  for (std::size_t i = 0; i < scored.size() && i < want; ++i) {
    list.indices.push_back(scored[i].second);
    list.scores.push_back(scored[i].first);
  }
  list.truncated = list.indices.size() < k;
  return list;
}

CorrelationGraph build_graph(const Tensor& anchors, const Tensor& candidates,
                             const LabelMatrix& labels, std::size_t k) {
  if (anchors.rank() != 2 || candidates.rank() != 2 || anchors.rows() != candidates.rows()) {
    throw ShapeError("build_correlation_graph: anchor shape " + shape_str(anchors.shape) +
                     " and candidate shape " + shape_str(candidates.shape) + " do not align");
  }
  if (anchors.rows() != labels.n) {
    throw ShapeError("build_correlation_graph: " + std::to_string(anchors.rows()) +
                     " embeddings vs " + std::to_string(labels.n) + " labels");
  }
  const std::size_t n = anchors.rows();
  if (n < 1) throw Error("build_correlation_graph: empty embedding set");

  CorrelationGraph g;
  g.n = n;
  g.k = k;
  g.neighbors.reserve(n);
  for (std::size_t q = 0; q < n; ++q) {
    g.neighbors.push_back(select_neighbors(q, k, anchors, candidates, labels));
  }
  g.adjacency.assign(n * n, 0);
  for (std::size_t q = 0; q < n; ++q) {
    for (std::size_t p : g.neighbors[q].indices) {
      g.adjacency[q * n + p] = 1;
      g.adjacency[p * n + q] = 1;  // union symmetrization
    }
  }
  return g;
}

}  // namespace

double cosine_similarity(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) {
    throw ShapeError("cosine_similarity: lengths " + std::to_string(x.size()) + " and " +
                     std::to_string(y.size()) + " differ");
  }
  double dot = 0.0, nx = 0.0, ny = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    dot += x[i] * y[i];
    nx += x[i] * x[i];
    ny += y[i] * y[i];
  }
  if (nx == 0.0 || ny == 0.0) {
    throw NumericError("cosine_similarity: zero-norm vector");
  }
  return dot / (std::sqrt(nx) * std::sqrt(ny));
}

std::vector<std::size_t> rank_neighbors(std::size_t q_index,
                                        const std::vector<std::size_t>& candidates,
                                        const Tensor& embeddings) {
  if (candidates.empty()) throw Error("rank_neighbors: no candidates");
  const std::size_t d = embeddings.cols();
  std::span<const double> query(embeddings.data.data() + q_index * d, d);
  std::vector<std::pair<double, std::size_t>> scored;
  scored.reserve(candidates.size());
  for (std::size_t p : candidates) {
    std::span<const double> row(embeddings.data.data() + p * d, d);
    scored.emplace_back(cosine_similarity(query, row), p);
  }
  std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  std::vector<std::size_t> out;
  out.reserve(scored.size());
  for (const auto& [sim, p] : scored) out.push_back(p);
  return out;
}

NeighborList knn_select(std::size_t q_index, std::size_t k, const Tensor& embeddings,
                        const LabelMatrix& labels) {
  return select_neighbors(q_index, k, embeddings, embeddings, labels);
}

CorrelationGraph build_correlation_graph(const Tensor& embeddings, const LabelMatrix& labels,
                                         std::size_t k) {
  return build_graph(embeddings, embeddings, labels, k);
}

CorrelationGraph build_correlation_graph(const Tensor& anchors, const Tensor& candidates,
                                         const LabelMatrix& labels, std::size_t k) {
  return build_graph(anchors, candidates, labels, k);
}

void dump_adjacency_csv(const CorrelationGraph& graph, std::ostream& out) {
  for (std::size_t p = 0; p < graph.n; ++p) {
    for (std::size_t q = 0; q < graph.n; ++q) {
      if (graph.edge(p, q)) out << p << "," << q << ",1\n";
    }
  }
}

}  // namespace aadml
