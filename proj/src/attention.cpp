#include "aadml/attention.hpp"

#include <cmath>

#include "aadml/error.hpp"
#include "aadml/rng.hpp"

namespace aadml {

namespace {

Tensor glorot_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  Tensor t({fan_in, fan_out});
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  for (double& v : t.data) v = rng.uniform(-limit, limit);
  return t;
}

}  // namespace

AttentionParams::AttentionParams(std::size_t dim_, std::size_t heads_, std::uint64_t seed,
                                 const std::string& name_prefix)
    : dim(dim_),
      heads(heads_),
      head_dim(heads_ == 0 ? 0 : dim_ / heads_),
      output_w(name_prefix + ".wo", Tensor({0, 0})) {
  if (heads == 0 || dim == 0 || dim % heads != 0) {
    throw ConfigError("attention: head count " + std::to_string(heads_) +
                      " must divide model dimension " + std::to_string(dim_));
  }
  Rng rng(mix_seed(seed, 0xA77E));
  head_weights.reserve(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    const std::string p = name_prefix + ".h" + std::to_string(h);
    head_weights.push_back(HeadWeights{
        Parameter(p + ".wq", glorot_uniform(dim, head_dim, rng)),
        Parameter(p + ".wk", glorot_uniform(dim, head_dim, rng)),
        Parameter(p + ".wv", glorot_uniform(dim, head_dim, rng)),
    });
  }
  output_w = Parameter(name_prefix + ".wo", glorot_uniform(heads * head_dim, dim, rng));
}

std::vector<Parameter*> AttentionParams::parameters() {
  std::vector<Parameter*> out;
  for (HeadWeights& h : head_weights) {
    out.push_back(&h.query_w);
    out.push_back(&h.key_w);
    out.push_back(&h.value_w);
  }
  out.push_back(&output_w);
  return out;
}

AttentionResult scaled_attention(Tape& tape, Var query, Var keys, Var values,
                                 AttentionParams::HeadWeights& head, std::size_t head_dim) {
  const Tensor& q = tape.value(query);
  const Tensor& k = tape.value(keys);
  const Tensor& v = tape.value(values);
  if (q.rank() != 2 || q.rows() != 1) {
    throw ShapeError("scaled_attention: query of shape " + shape_str(q.shape) +
                     " is not a single row");
  }
  if (k.rank() != 2 || v.rank() != 2 || k.rows() != v.rows() || k.rows() == 0) {
    throw ShapeError("scaled_attention: keys " + shape_str(k.shape) + " and values " +
                     shape_str(v.shape) + " do not conform");
  }

  Var wq = tape.param(head.query_w);
  Var wk = tape.param(head.key_w);
  Var wv = tape.param(head.value_w);

  Var q_proj = tape.matmul(query, wq);   // [1, head_dim]
  Var k_proj = tape.matmul(keys, wk);    // [t, head_dim]
  Var v_proj = tape.matmul(values, wv);  // [t, head_dim]

  Var logits = tape.matmul(q_proj, tape.transpose(k_proj));  // [1, t]
  logits = tape.scale(logits, 1.0 / std::sqrt(static_cast<double>(head_dim)));
  Var weights = tape.softmax_rows(logits);
  Var output = tape.matmul(weights, v_proj);  // [1, head_dim]
  return {output, weights};
}

Var multi_head(Tape& tape, Var query, Var keys, Var values, AttentionParams& params) {
  std::vector<Var> head_outputs;
  head_outputs.reserve(params.heads);
  for (auto& head : params.head_weights) {
    head_outputs.push_back(scaled_attention(tape, query, keys, values, head, params.head_dim).output);
  }
  Var concat = params.heads == 1 ? head_outputs[0] : tape.concat_cols(head_outputs);
  return tape.matmul(concat, tape.param(params.output_w));  // [1, dim]
}

Var aa_proxy(Tape& tape, std::size_t anchor, Var query_matrix, Var key_matrix,
             const CorrelationGraph& graph, AttentionParams& params, AaMode mode) {
  if (anchor >= graph.neighbors.size()) {
    throw Error("aa_proxy: anchor " + std::to_string(anchor) + " has no neighbor list");
  }
  const NeighborList& list = graph.neighbors[anchor];
  if (list.indices.empty()) {
    throw Error("aa_proxy: empty neighbor list for anchor " + std::to_string(anchor));
  }

  Var query = tape.gather_rows(query_matrix, {anchor});

  if (mode == AaMode::kLiteral) {
    // Every tuple has the anchor as its single key and value, so each
    // per-tuple attention reduces to a weight-1 pick of the projected
    // anchor and the average over tuples collapses to that one output.
    Var anchor_row = tape.gather_rows(key_matrix, {anchor});
    return multi_head(tape, query, anchor_row, anchor_row, params);
  }

  // Joint reading: all neighbors (anchor first) as keys and values under a
  // single softmax.
  Var neighbors = tape.gather_rows(key_matrix, list.indices);
  return multi_head(tape, query, neighbors, neighbors, params);
}

}  // namespace aadml
