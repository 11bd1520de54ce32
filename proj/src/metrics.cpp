#include "aadml/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>

#include "aadml/csv.hpp"
#include "aadml/error.hpp"
#include "aadml/log.hpp"

namespace aadml {

std::vector<std::size_t> rank_gallery(std::span<const double> query, const Tensor& gallery) {
  if (gallery.rank() != 2 || gallery.cols() != query.size()) {
    throw ShapeError("rank_gallery: query length " + std::to_string(query.size()) +
                     " vs gallery shape " + shape_str(gallery.shape));
  }
  const std::size_t n = gallery.rows();
  double qnorm = 0.0;
  for (double v : query) qnorm += v * v;
  qnorm = std::sqrt(qnorm);

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  if (qnorm == 0.0) {
    warn("rank_gallery: zero-norm query, returning index order");
    return order;
  }

  std::vector<double> sims(n);
  for (std::size_t i = 0; i < n; ++i) {
    double dot = 0.0, gnorm = 0.0;
    for (std::size_t c = 0; c < gallery.cols(); ++c) {
      dot += query[c] * gallery.at(i, c);
      gnorm += gallery.at(i, c) * gallery.at(i, c);
    }
    sims[i] = gnorm == 0.0 ? -std::numeric_limits<double>::infinity()
                           : dot / (qnorm * std::sqrt(gnorm));
  }
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (sims[a] != sims[b]) return sims[a] > sims[b];
    return a < b;
  });
  return order;
}

double average_precision(const std::vector<std::uint8_t>& ranked_relevance) {
  std::size_t relevant = 0;
  double sum = 0.0;
  for (std::size_t r = 0; r < ranked_relevance.size(); ++r) {
    if (ranked_relevance[r]) {
      ++relevant;
      sum += static_cast<double>(relevant) / static_cast<double>(r + 1);
    }
  }
  if (relevant == 0) throw Error("average_precision: no relevant item in the ranked list");
  return sum / static_cast<double>(relevant);
}

std::vector<ScopePoint> precision_at_scope(const std::vector<std::uint8_t>& ranked_relevance,
                                           std::span<const std::size_t> k_grid) {
  std::vector<ScopePoint> out;
  out.reserve(k_grid.size());
  for (std::size_t k : k_grid) {
    if (k < 1) throw Error("precision_at_scope: K must be >= 1");
    const std::size_t top = std::min(k, ranked_relevance.size());
    if (top == 0) {
      out.push_back({k, 0.0});
      continue;
    }
    std::size_t hits = 0;
    for (std::size_t r = 0; r < top; ++r) hits += ranked_relevance[r] ? 1 : 0;
    out.push_back({k, static_cast<double>(hits) / static_cast<double>(top)});
  }
  return out;
}

namespace {

RetrievalReport evaluate_direction(const Tensor& queries, const Tensor& gallery,
                                   const LabelMatrix& labels, const char* direction,
                                   std::span<const std::size_t> k_grid) {
  RetrievalReport report;
  report.direction = direction;
  report.query_count = queries.rows();
  report.gallery_count = gallery.rows();
  std::vector<double> scope_sums(k_grid.size(), 0.0);

  for (std::size_t q = 0; q < queries.rows(); ++q) {
    std::span<const double> row(queries.data.data() + q * queries.cols(), queries.cols());
    const std::vector<std::size_t> order = rank_gallery(row, gallery);
    std::vector<std::uint8_t> relevance(order.size());
    std::size_t relevant = 0;
    for (std::size_t r = 0; r < order.size(); ++r) {
      relevance[r] = labels.share_category(q, order[r]) ? 1 : 0;
      relevant += relevance[r];
    }
    if (relevant == 0) {
      ++report.excluded_queries;
      continue;
    }
    report.ap.push_back(average_precision(relevance));
    const auto curve = precision_at_scope(relevance, k_grid);
    for (std::size_t i = 0; i < curve.size(); ++i) scope_sums[i] += curve[i].precision;
  }

  if (report.ap.empty()) throw Error("evaluate: no query had a relevant gallery item");
  double sum = 0.0;
  for (double ap : report.ap) sum += ap;
  report.map = sum / static_cast<double>(report.ap.size());
  for (std::size_t i = 0; i < k_grid.size(); ++i) {
    report.scope_curve.push_back(
        {k_grid[i], scope_sums[i] / static_cast<double>(report.ap.size())});
  }
  return report;
}

}  // namespace

EvalResult evaluate_embeddings(const Tensor& audio_embeddings, const Tensor& visual_embeddings,
                               const LabelMatrix& labels, std::span<const std::size_t> k_grid) {
  if (audio_embeddings.rows() == 0) throw Error("evaluate: empty test split");
  if (audio_embeddings.rows() != visual_embeddings.rows() ||
      audio_embeddings.rows() != labels.n) {
    throw ShapeError("evaluate: audio/visual/label counts disagree");
  }
  EvalResult result;
  result.audio_to_visual =
      evaluate_direction(audio_embeddings, visual_embeddings, labels, "av", k_grid);
  result.visual_to_audio =
      evaluate_direction(visual_embeddings, audio_embeddings, labels, "va", k_grid);
  result.map_average = 0.5 * (result.audio_to_visual.map + result.visual_to_audio.map);
  return result;
}

void write_report_csv(const EvalResult& result, std::ostream& out) {
  out << "direction,key,value\n";
  auto section = [&out](const RetrievalReport& r) {
    out << r.direction << ",map," << fmt_compact(r.map) << "\n";
    out << r.direction << ",queries," << r.query_count << "\n";
    out << r.direction << ",excluded," << r.excluded_queries << "\n";
    for (const ScopePoint& p : r.scope_curve) {
      out << r.direction << ",p@" << p.k << "," << fmt_compact(p.precision) << "\n";
    }
  };
  section(result.audio_to_visual);
  section(result.visual_to_audio);
  out << "avg,map," << fmt_compact(result.map_average) << "\n";
}

}  // namespace aadml
