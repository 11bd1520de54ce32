#include "aadml/losses.hpp"

#include <array>
#include <cmath>

#include "aadml/error.hpp"
#include "aadml/log.hpp"

namespace aadml {

namespace {

constexpr std::array<Modality, 2> kModalities = {Modality::kAudio, Modality::kVisual};

Modality opposite(Modality m) { return m == Modality::kAudio ? Modality::kVisual : Modality::kAudio; }

double sq_distance(const Tensor& a, std::size_t i, const Tensor& b, std::size_t j) {
  double s = 0.0;
  for (std::size_t c = 0; c < a.cols(); ++c) {
    const double d = a.at(i, c) - b.at(j, c);
    s += d * d;
  }
  return s;
}

struct PairLists {
  std::vector<std::size_t> sim_a, sim_v;  // similar cross-modal pairs (audio idx, visual idx)
  std::vector<std::size_t> dis_a, dis_v;
};

// All cross-modal pairs (audio i, visual j), split by label overlap.
PairLists enumerate_pairs(const LabelMatrix& labels) {
  PairLists out;
  for (std::size_t i = 0; i < labels.n; ++i) {
    for (std::size_t j = 0; j < labels.n; ++j) {
      if (labels.share_category(i, j)) {
        out.sim_a.push_back(i);
        out.sim_v.push_back(j);
      } else {
        out.dis_a.push_back(i);
        out.dis_v.push_back(j);
      }
    }
  }
  return out;
}

}  // namespace

const char* loss_kind_name(LossKind kind) {
  switch (kind) {
    case LossKind::kTriplet: return "triplet";
    case LossKind::kTripletDagger: return "triplet_dagger";
    case LossKind::kHardTriplet: return "hard_triplet";
    case LossKind::kContrastive: return "contrastive";
    case LossKind::kNPair: return "n_pair";
    case LossKind::kAngular: return "angular";
    case LossKind::kHinge: return "hinge";
    case LossKind::kDsl: return "dsl";
  }
  return "?";
}

std::optional<LossKind> loss_kind_from(const std::string& name) {
  for (LossKind k : {LossKind::kTriplet, LossKind::kTripletDagger, LossKind::kHardTriplet,
                     LossKind::kContrastive, LossKind::kNPair, LossKind::kAngular, LossKind::kHinge,
                     LossKind::kDsl}) {
    if (name == loss_kind_name(k)) return k;
  }
  return std::nullopt;
}

void LossConfig::validate() const {
  if (triplet_margin <= 0.0) throw ConfigError("loss: triplet margin must be > 0");
  if (contrastive_margin <= 0.0) throw ConfigError("loss: contrastive margin must be > 0");
  if (angular_degrees <= 0.0 || angular_degrees >= 90.0) {
    throw ConfigError("loss: angular degrees must lie in (0, 90)");
  }
}

std::vector<TripletRefs> mine_triplets(const LabelMatrix& labels, LossKind strategy,
                                       const ReprSnapshots* repr) {
  const std::size_t n = labels.n;
  std::vector<TripletRefs> out;

  if (strategy == LossKind::kTriplet || strategy == LossKind::kHardTriplet) {
    // Anchor in the 1st modality, positive and negative in the 2nd; both
    // modality orderings are enumerated.
    const bool hard = strategy == LossKind::kHardTriplet;
    if (hard && repr == nullptr) throw Error("mine_triplets: hard mining needs representations");
    for (Modality first : kModalities) {
      const Modality second = opposite(first);
      for (std::size_t a = 0; a < n; ++a) {
        for (std::size_t p = 0; p < n; ++p) {
          if (!labels.share_category(a, p)) continue;
          if (hard) {
            // Keep only the negative closest to the anchor representation.
            std::size_t best = n;
            double best_d = 0.0;
            for (std::size_t neg = 0; neg < n; ++neg) {
              if (labels.share_category(a, neg)) continue;
              const double d = sq_distance(repr->anchor(first), a, repr->other(second), neg);
              if (best == n || d < best_d) {
                best = neg;
                best_d = d;
              }
            }
            if (best < n) out.push_back({{first, a}, {second, p}, {second, best}});
          } else {
            for (std::size_t neg = 0; neg < n; ++neg) {
              if (labels.share_category(a, neg)) continue;
              out.push_back({{first, a}, {second, p}, {second, neg}});
            }
          }
        }
      }
    }
  } else if (strategy == LossKind::kTripletDagger) {
    // All 8 ordered modality assignments. A positive identical to the
    // anchor (same modality, same index) is excluded.
    for (Modality am : kModalities) {
      for (Modality pm : kModalities) {
        for (Modality nm : kModalities) {
          for (std::size_t a = 0; a < n; ++a) {
            for (std::size_t p = 0; p < n; ++p) {
              if (!labels.share_category(a, p)) continue;
              if (pm == am && p == a) continue;
              for (std::size_t neg = 0; neg < n; ++neg) {
                if (labels.share_category(a, neg)) continue;
                out.push_back({{am, a}, {pm, p}, {nm, neg}});
              }
            }
          }
        }
      }
    }
  } else {
    throw Error(std::string("mine_triplets: '") + loss_kind_name(strategy) +
                "' is not a triplet strategy");
  }

  if (out.empty()) {
    warn(std::string("no valid triplet in batch for strategy '") + loss_kind_name(strategy) +
         "'; metric loss contributes 0");
  }
  return out;
}

Var triplet_loss_value(Tape& tape, const BatchVars& vars, const std::vector<TripletRefs>& triplets,
                       double margin) {
  if (triplets.empty()) return tape.leaf(Tensor::scalar(0.0));

  // Group by modality pattern so each group is one vectorized gather.
  Var total = tape.leaf(Tensor::scalar(0.0));
  for (Modality am : kModalities) {
    for (Modality pm : kModalities) {
      for (Modality nm : kModalities) {
        std::vector<std::size_t> ai, pi, ni;
        for (const TripletRefs& t : triplets) {
          if (t.anchor.mod == am && t.positive.mod == pm && t.negative.mod == nm) {
            ai.push_back(t.anchor.index);
            pi.push_back(t.positive.index);
            ni.push_back(t.negative.index);
          }
        }
        if (ai.empty()) continue;
        Var a = tape.gather_rows(vars.anchor_repr(am), ai);
        Var p = tape.gather_rows(vars.other_repr(pm), pi);
        Var neg = tape.gather_rows(vars.other_repr(nm), ni);
        Var gap = tape.sub(tape.row_squared_distance(a, p), tape.row_squared_distance(a, neg));
        Var hinged = tape.relu(tape.add_const(gap, margin));
        total = tape.add(total, tape.sum_all(hinged));
      }
    }
  }
  return tape.scale(total, 1.0 / static_cast<double>(triplets.size()));
}

Var contrastive_loss_value(Tape& tape, const BatchVars& vars, const LabelMatrix& labels,
                           double margin, bool as_printed) {
  const PairLists pairs = enumerate_pairs(labels);
  const std::size_t count = pairs.sim_a.size() + pairs.dis_a.size();
  if (count == 0) return tape.leaf(Tensor::scalar(0.0));

  Var total = tape.leaf(Tensor::scalar(0.0));
  if (!pairs.sim_a.empty()) {
    Var a = tape.gather_rows(vars.anchor_repr(Modality::kAudio), pairs.sim_a);
    Var b = tape.gather_rows(vars.other_repr(Modality::kVisual), pairs.sim_v);
    Var d2 = tape.row_squared_distance(a, b);
    if (as_printed) {
      // Literal transcription: similar pairs take the margin term and the
      // "distance" inside it is already squared.
      Var hinge = tape.relu(tape.scale(tape.add_const(d2, -margin), -1.0));
      total = tape.add(total, tape.scale(tape.sum_all(tape.mul(hinge, hinge)), 0.5));
    } else {
      total = tape.add(total, tape.scale(tape.sum_all(d2), 0.5));
    }
  }
  if (!pairs.dis_a.empty()) {
    Var a = tape.gather_rows(vars.anchor_repr(Modality::kAudio), pairs.dis_a);
    Var b = tape.gather_rows(vars.other_repr(Modality::kVisual), pairs.dis_v);
    Var d2 = tape.row_squared_distance(a, b);
    if (as_printed) {
      total = tape.add(total, tape.scale(tape.sum_all(tape.mul(d2, d2)), 0.5));
    } else {
      Var dist = tape.sqrt(d2);
      Var hinge = tape.relu(tape.scale(tape.add_const(dist, -margin), -1.0));
      total = tape.add(total, tape.scale(tape.sum_all(tape.mul(hinge, hinge)), 0.5));
    }
  }
  return tape.scale(total, 1.0 / static_cast<double>(count));
}

Var n_pair_loss_value(Tape& tape, const BatchVars& vars, const LabelMatrix& labels) {
  const std::size_t n = labels.n;
  Var total = tape.leaf(Tensor::scalar(0.0));
  std::size_t anchors = 0;
  bool any_negatives = false;
  for (Modality first : kModalities) {
    const Modality second = opposite(first);
    for (std::size_t i = 0; i < n; ++i) {
      ++anchors;
      std::vector<std::size_t> negs;
      for (std::size_t j = 0; j < n; ++j) {
        if (!labels.share_category(i, j)) negs.push_back(j);
      }
      if (negs.empty()) continue;  // empty logit set contributes exactly 0
      any_negatives = true;
      Var a = tape.gather_rows(vars.anchor_repr(first), {i});     // [1, c]
      Var p = tape.gather_rows(vars.other_repr(second), {i});     // [1, c]
      Var nmat = tape.gather_rows(vars.other_repr(second), negs); // [m, c]
      Var neg_dots = tape.reshape(tape.matmul(nmat, tape.transpose(a)), {negs.size()});
      Var pos_dot = tape.reshape(tape.matmul(a, tape.transpose(p)), Shape{});
      Var logits = tape.sub(neg_dots, tape.broadcast_scalar(pos_dot, {negs.size()}));
      Var term = tape.log(tape.add_const(tape.sum_all(tape.exp(logits)), 1.0));
      total = tape.add(total, term);
    }
  }
  if (!any_negatives) {
    warn("n_pair: batch has no negative candidates; loss contributes 0");
    return tape.leaf(Tensor::scalar(0.0));
  }
  return tape.scale(total, 1.0 / static_cast<double>(anchors));
}

Var angular_loss_value(Tape& tape, const BatchVars& vars, const LabelMatrix& labels,
                       double degrees) {
  const std::size_t n = labels.n;
  const double tan_sq = std::tan(degrees * M_PI / 180.0) * std::tan(degrees * M_PI / 180.0);
  Var total = tape.leaf(Tensor::scalar(0.0));
  std::size_t anchors = 0;
  bool any_negatives = false;
  for (Modality first : kModalities) {
    const Modality second = opposite(first);
    for (std::size_t i = 0; i < n; ++i) {
      ++anchors;
      std::vector<std::size_t> negs;
      for (std::size_t j = 0; j < n; ++j) {
        if (!labels.share_category(i, j)) negs.push_back(j);
      }
      if (negs.empty()) continue;
      any_negatives = true;
      Var a = tape.gather_rows(vars.anchor_repr(first), {i});
      Var p = tape.gather_rows(vars.other_repr(second), {i});
      Var nmat = tape.gather_rows(vars.other_repr(second), negs);
      // 4 tan^2(alpha) (a+p).n  -  2 (1 + tan^2(alpha)) a.p
      Var ap_sum = tape.add(a, p);
      Var an = tape.reshape(tape.matmul(nmat, tape.transpose(ap_sum)), {negs.size()});
      Var lhs = tape.scale(an, 4.0 * tan_sq);
      Var ap = tape.reshape(tape.matmul(a, tape.transpose(p)), Shape{});
      Var rhs = tape.broadcast_scalar(tape.scale(ap, 2.0 * (1.0 + tan_sq)), {negs.size()});
      Var term = tape.log(tape.add_const(tape.sum_all(tape.exp(tape.sub(lhs, rhs))), 1.0));
      total = tape.add(total, term);
    }
  }
  if (!any_negatives) {
    warn("angular: batch has no negative candidates; loss contributes 0");
    return tape.leaf(Tensor::scalar(0.0));
  }
  return tape.scale(total, 1.0 / static_cast<double>(anchors));
}

Var hinge_loss_value(Tape& tape, const BatchVars& vars, const LabelMatrix& labels, double margin) {
  // Hinge embedding over cross-modal pairs: similar pairs pay their
  // distance, dissimilar pairs pay the margin shortfall.
  const PairLists pairs = enumerate_pairs(labels);
  const std::size_t count = pairs.sim_a.size() + pairs.dis_a.size();
  if (count == 0) return tape.leaf(Tensor::scalar(0.0));

  Var total = tape.leaf(Tensor::scalar(0.0));
  if (!pairs.sim_a.empty()) {
    Var a = tape.gather_rows(vars.anchor_repr(Modality::kAudio), pairs.sim_a);
    Var b = tape.gather_rows(vars.other_repr(Modality::kVisual), pairs.sim_v);
    total = tape.add(total, tape.sum_all(tape.sqrt(tape.row_squared_distance(a, b))));
  }
  if (!pairs.dis_a.empty()) {
    Var a = tape.gather_rows(vars.anchor_repr(Modality::kAudio), pairs.dis_a);
    Var b = tape.gather_rows(vars.other_repr(Modality::kVisual), pairs.dis_v);
    Var dist = tape.sqrt(tape.row_squared_distance(a, b));
    total = tape.add(total, tape.sum_all(tape.relu(tape.scale(tape.add_const(dist, -margin), -1.0))));
  }
  return tape.scale(total, 1.0 / static_cast<double>(count));
}

Var dsl_loss_value(Tape& tape, const BatchVars& vars) {
  const std::size_t n = tape.value(vars.anchor_repr_audio).rows();
  if (n < 2) {
    warn("dsl: batch of size " + std::to_string(n) + " has no contrastive structure; loss is 0");
    return tape.leaf(Tensor::scalar(0.0));
  }
  // Cross-modal similarity matrix, diagonal = paired samples. Each
  // direction's softmax is reweighted by the other direction's softmax
  // before the diagonal cross-entropy.
  Var sims = tape.matmul(vars.anchor_repr(Modality::kAudio),
                         tape.transpose(vars.other_repr(Modality::kVisual)));
  Var col_prior = tape.transpose(tape.softmax_rows(tape.transpose(sims)));
  Var row_prior = tape.softmax_rows(sims);

  Var row_term = tape.diag(tape.softmax_rows(tape.mul(sims, col_prior)));
  Var col_term = tape.diag(tape.softmax_rows(tape.transpose(tape.mul(sims, row_prior))));
  Var loss_rows = tape.scale(tape.mean_all(tape.log(row_term)), -1.0);
  Var loss_cols = tape.scale(tape.mean_all(tape.log(col_term)), -1.0);
  return tape.scale(tape.add(loss_rows, loss_cols), 0.5);
}

Var label_loss_value(Tape& tape, Var projections_audio, Var projections_visual,
                     const Tensor& label_targets) {
  const Tensor& fa = tape.value(projections_audio);
  const Tensor& fv = tape.value(projections_visual);
  if (!fa.same_shape(label_targets) || !fv.same_shape(label_targets)) {
    throw ShapeError("label_loss: projection shapes " + shape_str(fa.shape) + "/" +
                     shape_str(fv.shape) + " do not match label shape " +
                     shape_str(label_targets.shape));
  }
  const double inv_n = 1.0 / static_cast<double>(label_targets.rows());
  Var targets = tape.leaf(label_targets);
  Var loss_a = tape.scale(tape.frobenius_norm(tape.sub(projections_audio, targets)), inv_n);
  Var loss_v = tape.scale(tape.frobenius_norm(tape.sub(projections_visual, targets)), inv_n);
  return tape.add(loss_a, loss_v);
}

Var metric_loss_value(Tape& tape, const BatchVars& vars, const LabelMatrix& labels,
                      const LossConfig& config, const std::vector<TripletRefs>* mined) {
  switch (config.kind) {
    case LossKind::kTriplet:
    case LossKind::kTripletDagger:
    case LossKind::kHardTriplet: {
      std::vector<TripletRefs> local;
      if (mined == nullptr) {
        const Tensor& aa = tape.value(vars.anchor_repr_audio);
        const Tensor& av = tape.value(vars.anchor_repr_visual);
        const Tensor& oa = tape.value(vars.other_repr_audio);
        const Tensor& ov = tape.value(vars.other_repr_visual);
        ReprSnapshots snaps{&aa, &av, &oa, &ov};
        local = mine_triplets(labels, config.kind, &snaps);
        mined = &local;
      }
      return triplet_loss_value(tape, vars, *mined, config.triplet_margin);
    }
    case LossKind::kContrastive:
      return contrastive_loss_value(tape, vars, labels, config.contrastive_margin,
                                    config.contrastive_as_printed);
    case LossKind::kNPair:
      return n_pair_loss_value(tape, vars, labels);
    case LossKind::kAngular:
      return angular_loss_value(tape, vars, labels, config.angular_degrees);
    case LossKind::kHinge:
      return hinge_loss_value(tape, vars, labels, config.contrastive_margin);
    case LossKind::kDsl:
      return dsl_loss_value(tape, vars);
  }
  throw Error("metric_loss: unknown loss kind");
}

Var total_loss_value(Tape& tape, const BatchVars& vars, const LabelMatrix& labels,
                     const Tensor& label_targets, const LossConfig& config,
                     const std::vector<TripletRefs>* mined) {
  Var label = label_loss_value(tape, vars.proj_audio, vars.proj_visual, label_targets);
  Var metric = metric_loss_value(tape, vars, labels, config, mined);
  return tape.add(label, metric);
}

}  // namespace aadml
