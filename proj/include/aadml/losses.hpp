#pragma once

#include <optional>
#include <string>
#include <vector>

#include "aadml/attention.hpp"
#include "aadml/data.hpp"
#include "aadml/tape.hpp"

namespace aadml {

enum class LossKind {
  kTriplet,
  kTripletDagger,
  kHardTriplet,
  kContrastive,
  kNPair,
  kAngular,
  kHinge,
  kDsl,
};

const char* loss_kind_name(LossKind kind);
std::optional<LossKind> loss_kind_from(const std::string& name);

// Which triplet terms the anchor-aware proxy replaces. kAllTerms wraps
// anchor, positive and negative; kAnchorOnly leaves positives and negatives
// as raw projections.
enum class AaScope { kAllTerms, kAnchorOnly };

struct LossConfig {
  LossKind kind = LossKind::kTriplet;
  double triplet_margin = 1.2;
  double contrastive_margin = 1.0;
  AaScope scope = AaScope::kAllTerms;
  AaMode aa_mode = AaMode::kJoint;
  bool use_aa = true;
  // Evaluates the contrastive indicator exactly as printed in its source
  // (similar pairs hit the margin term, distances squared twice). Off by
  // default; the standard convention is used instead.
  bool contrastive_as_printed = false;
  double angular_degrees = 45.0;

  void validate() const;
};

struct Ref {
  Modality mod;
  std::size_t index;
  bool operator==(const Ref&) const = default;
};

struct TripletRefs {
  Ref anchor, positive, negative;
};

// Per-batch representation matrices on the tape, already resolved by role:
// anchors use proxies when AA is on; positives/negatives use proxies only
// under kAllTerms scope.
struct BatchVars {
  Var proj_audio, proj_visual;              // raw projections [B, c]
  Var anchor_repr_audio, anchor_repr_visual;
  Var other_repr_audio, other_repr_visual;

  Var proj(Modality m) const { return m == Modality::kAudio ? proj_audio : proj_visual; }
  Var anchor_repr(Modality m) const {
    return m == Modality::kAudio ? anchor_repr_audio : anchor_repr_visual;
  }
  Var other_repr(Modality m) const {
    return m == Modality::kAudio ? other_repr_audio : other_repr_visual;
  }
};

// Value snapshots used by hard mining (distances under current parameters).
struct ReprSnapshots {
  const Tensor* anchor_audio = nullptr;
  const Tensor* anchor_visual = nullptr;
  const Tensor* other_audio = nullptr;
  const Tensor* other_visual = nullptr;

  const Tensor& anchor(Modality m) const {
    return m == Modality::kAudio ? *anchor_audio : *anchor_visual;
  }
  const Tensor& other(Modality m) const {
    return m == Modality::kAudio ? *other_audio : *other_visual;
  }
};

// Enumerates valid triplets for the three selection strategies, in a fixed
// deterministic order. kHardTriplet requires representation snapshots to
// pick, per (anchor, positive), the single closest negative. Returns an
// empty set (with a logged warning) when the batch admits no triplet.
std::vector<TripletRefs> mine_triplets(const LabelMatrix& labels, LossKind strategy,
                                       const ReprSnapshots* repr = nullptr);

// Metric losses. All reduce by mean and return a rank-0 scalar >= 0.
Var triplet_loss_value(Tape& tape, const BatchVars& vars, const std::vector<TripletRefs>& triplets,
                       double margin);
Var contrastive_loss_value(Tape& tape, const BatchVars& vars, const LabelMatrix& labels,
                           double margin, bool as_printed);
Var n_pair_loss_value(Tape& tape, const BatchVars& vars, const LabelMatrix& labels);
Var angular_loss_value(Tape& tape, const BatchVars& vars, const LabelMatrix& labels,
                       double degrees);
Var hinge_loss_value(Tape& tape, const BatchVars& vars, const LabelMatrix& labels, double margin);
Var dsl_loss_value(Tape& tape, const BatchVars& vars);

// (1/n)||f_a - Y||_F + (1/n)||f_v - Y||_F over the batch matrices.
Var label_loss_value(Tape& tape, Var projections_audio, Var projections_visual,
                     const Tensor& label_targets);

// Active metric loss for `config`, given pre-mined triplets where the kind
// needs them (pass nullptr to mine inside, using tape value snapshots).
Var metric_loss_value(Tape& tape, const BatchVars& vars, const LabelMatrix& labels,
                      const LossConfig& config, const std::vector<TripletRefs>* mined = nullptr);

// label loss + metric loss; differentiable end to end.
Var total_loss_value(Tape& tape, const BatchVars& vars, const LabelMatrix& labels,
                     const Tensor& label_targets, const LossConfig& config,
                     const std::vector<TripletRefs>* mined = nullptr);

}  // namespace aadml
