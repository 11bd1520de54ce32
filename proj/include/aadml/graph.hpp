#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include "aadml/data.hpp"
#include "aadml/tensor.hpp"

namespace aadml {

// Ordered same-category neighbors of one anchor: the anchor itself first,
// then up to k-1 candidates by descending cosine similarity (ties broken by
// ascending index). `truncated` records that fewer compatible candidates
// existed than k asked for.
struct NeighborList {
  std::size_t anchor = 0;
  std::vector<std::size_t> indices;
  std::vector<double> scores;
  bool truncated = false;
};

// Per-modality binary adjacency plus the per-anchor neighbor lists it was
// built from. Symmetrized as the union of directed k-NN edges.
struct CorrelationGraph {
  std::size_t n = 0;
  std::size_t k = 0;
  std::vector<std::uint8_t> adjacency;  // row-major [n, n]
  std::vector<NeighborList> neighbors;

  bool edge(std::size_t p, std::size_t q) const { return adjacency[p * n + q] != 0; }
};

// Strict cosine of two equal-length vectors. Zero-norm operands are an
// error here; graph construction handles them separately.
double cosine_similarity(std::span<const double> x, std::span<const double> y);

// Candidates sorted by descending cosine similarity to row q_index of
// `embeddings`; ties broken by ascending index. Zero-norm pairs sort last.
std::vector<std::size_t> rank_neighbors(std::size_t q_index,
                                        const std::vector<std::size_t>& candidates,
                                        const Tensor& embeddings);

NeighborList knn_select(std::size_t q_index, std::size_t k, const Tensor& embeddings,
                        const LabelMatrix& labels);

CorrelationGraph build_correlation_graph(const Tensor& embeddings, const LabelMatrix& labels,
                                         std::size_t k);

// Cross-pool variant: anchors are rows of `anchors`, neighbor candidates are
// rows of `candidates` (the paired other-modality projections). Row i of
// both matrices refers to the same underlying sample.
CorrelationGraph build_correlation_graph(const Tensor& anchors, const Tensor& candidates,
                                         const LabelMatrix& labels, std::size_t k);

// Debug dump: one "p,q,1" line per edge.
void dump_adjacency_csv(const CorrelationGraph& graph, std::ostream& out);

}  // namespace aadml
