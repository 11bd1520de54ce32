#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "aadml/data.hpp"
#include "aadml/tensor.hpp"

namespace aadml {

struct ScopePoint {
  std::size_t k = 0;
  double precision = 0.0;
};

struct RetrievalReport {
  std::string direction;  // "av" or "va"
  std::vector<double> ap;  // one per query with >= 1 relevant item
  std::size_t excluded_queries = 0;  // queries with no relevant gallery item
  double map = 0.0;
  std::vector<ScopePoint> scope_curve;  // averaged over queries
  std::size_t query_count = 0;
  std::size_t gallery_count = 0;
};

struct EvalResult {
  RetrievalReport audio_to_visual;
  RetrievalReport visual_to_audio;
  double map_average = 0.0;
};

// Gallery indices by descending cosine similarity to the query, ties broken
// by ascending index. A zero-norm query falls back to index order (with a
// warning); zero-norm gallery rows sort last.
std::vector<std::size_t> rank_gallery(std::span<const double> query, const Tensor& gallery);

// AP = (1/R) * sum over relevant ranks r of precision@r, over the full list.
// Requires at least one relevant item.
double average_precision(const std::vector<std::uint8_t>& ranked_relevance);

// precision@K = relevant among top min(K, n) / min(K, n).
std::vector<ScopePoint> precision_at_scope(const std::vector<std::uint8_t>& ranked_relevance,
                                           std::span<const std::size_t> k_grid);

inline const std::vector<std::size_t>& default_scope_grid() {
  static const std::vector<std::size_t> grid = {10, 20, 50, 100, 200, 500, 1000};
  return grid;
}

// Both retrieval directions over label-space embeddings. Relevance = the
// query and gallery item share at least one category.
EvalResult evaluate_embeddings(const Tensor& audio_embeddings, const Tensor& visual_embeddings,
                               const LabelMatrix& labels,
                               std::span<const std::size_t> k_grid = default_scope_grid());

void write_report_csv(const EvalResult& result, std::ostream& out);

}  // namespace aadml
