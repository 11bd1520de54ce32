#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "aadml/graph.hpp"
#include "aadml/tape.hpp"

namespace aadml {

enum class Modality { kAudio, kVisual };

inline const char* modality_name(Modality m) { return m == Modality::kAudio ? "audio" : "visual"; }

// Two readings of the anchor-aware proxy.
//
// kLiteral: every tuple carries the anchor as its only value, one softmax per
// single-key tuple, outputs averaged. The average collapses: the result is
// the anchor pushed through the value and output projections, independent of
// the query and of the neighbor set.
//
// kJoint: one attention call with the whole neighbor list as keys AND values,
// query = the anchor's cross-modal partner. The result is a query-dependent
// convex mixture of the projected neighbors.
enum class AaMode { kLiteral, kJoint };

// Per-head projections plus the output projection. head_dim = dim / heads;
// heads must divide dim exactly.
struct AttentionParams {
  std::size_t dim = 0;
  std::size_t heads = 1;
  std::size_t head_dim = 0;

  struct HeadWeights {
    Parameter query_w;  // [dim, head_dim]
    Parameter key_w;    // [dim, head_dim]
    Parameter value_w;  // [dim, head_dim]
  };
  std::vector<HeadWeights> head_weights;
  Parameter output_w;  // [heads * head_dim, dim]

  AttentionParams(std::size_t dim, std::size_t heads, std::uint64_t seed,
                  const std::string& name_prefix = "attention");

  std::vector<Parameter*> parameters();
};

struct AttentionResult {
  Var output;   // [1, head_dim]
  Var weights;  // [1, key_count]
};

// Scaled dot-product attention for one head:
// logits = (q Wq)(K Wk)^T / sqrt(head_dim), weights = softmax(logits),
// output = weights (V Wv).
AttentionResult scaled_attention(Tape& tape, Var query, Var keys, Var values,
                                 AttentionParams::HeadWeights& head, std::size_t head_dim);

// Concatenates per-head outputs and applies the output projection. [1, dim].
Var multi_head(Tape& tape, Var query, Var keys, Var values, AttentionParams& params);

// Proxy for `anchor` given on-tape projection matrices. `query_matrix` holds
// the cross-modal partner projections, `key_matrix` the modality the
// neighbor indices of `graph` refer to. Returns a [1, dim] row.
Var aa_proxy(Tape& tape, std::size_t anchor, Var query_matrix, Var key_matrix,
             const CorrelationGraph& graph, AttentionParams& params, AaMode mode);

}  // namespace aadml
