#include "aadml/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <ostream>
#include <set>

#include "aadml/csv.hpp"
#include "aadml/error.hpp"
#include "aadml/gradcheck.hpp"
#include "aadml/log.hpp"
#include "aadml/rng.hpp"

namespace aadml {

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("config: epochs must be >= 1");
  if (batch_size < 2) throw ConfigError("config: batch_size must be >= 2");
  if (learning_rate <= 0.0) throw ConfigError("config: learning_rate must be > 0");
  if (k < 1) throw ConfigError("config: k must be >= 1");
  if (hidden < 1) throw ConfigError("config: hidden must be >= 1");
  if (heads < 1) throw ConfigError("config: heads must be >= 1");
  if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("config: dropout must lie in [0, 1)");
  if (grad_clip_norm < 0.0) throw ConfigError("config: grad_clip_norm must be >= 0");
  if (beta1 <= 0.0 || beta1 >= 1.0 || beta2 <= 0.0 || beta2 >= 1.0) {
    throw ConfigError("config: Adam betas must lie in (0, 1)");
  }
  if (adam_epsilon <= 0.0) throw ConfigError("config: adam_epsilon must be > 0");
  loss.validate();
}

Model::Model(const TrainConfig& cfg, std::size_t audio_dim, std::size_t visual_dim,
             std::size_t categories)
    : audio_net(NetConfig{"audio", audio_dim, cfg.hidden, categories, cfg.dropout, cfg.seed}),
      visual_net(NetConfig{"visual", visual_dim, cfg.hidden, categories, cfg.dropout, cfg.seed}),
      attention(categories, cfg.heads, mix_seed(cfg.seed, 0xA001),
                cfg.attention_per_modality ? "attention.audio" : "attention") {
  if (cfg.attention_per_modality) {
    attention_visual.emplace(categories, cfg.heads, mix_seed(cfg.seed, 0xA002),
                             "attention.visual");
  }
}

AttentionParams& Model::attention_for(Modality m) {
  if (m == Modality::kVisual && attention_visual.has_value()) return *attention_visual;
  return attention;
}

std::vector<Parameter*> Model::parameters() {
  std::vector<Parameter*> out = audio_net.parameters();
  for (Parameter* p : visual_net.parameters()) out.push_back(p);
  for (Parameter* p : attention.parameters()) out.push_back(p);
  if (attention_visual.has_value()) {
    for (Parameter* p : attention_visual->parameters()) out.push_back(p);
  }
  return out;
}

void AdamState::init(std::span<Parameter* const> params) {
  first_moment.clear();
  second_moment.clear();
  for (const Parameter* p : params) {
    first_moment.emplace_back(p->value.shape);
    second_moment.emplace_back(p->value.shape);
  }
  step = 0;
}

void adam_step(std::span<Parameter* const> params, AdamState& state, double lr, double beta1,
               double beta2, double epsilon) {
  if (!state.initialized()) state.init(params);
  if (state.first_moment.size() != params.size()) {
    throw Error("adam: optimizer state does not match parameter list");
  }
  ++state.step;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Parameter& p = *params[i];
    Tensor& m = state.first_moment[i];
    Tensor& v = state.second_moment[i];
    for (std::size_t j = 0; j < p.value.data.size(); ++j) {
      const double g = p.grad.data[j];
      if (!std::isfinite(g)) {
        throw NumericError("adam: non-finite gradient in parameter '" + p.name + "'");
      }
      m.data[j] = beta1 * m.data[j] + (1.0 - beta1) * g;
      v.data[j] = beta2 * v.data[j] + (1.0 - beta2) * g * g;
      const double m_hat = m.data[j] / bc1;
      const double v_hat = v.data[j] / bc2;
      p.value.data[j] -= lr * m_hat / (std::sqrt(v_hat) + epsilon);
    }
  }
}

void sgd_step(std::span<Parameter* const> params, double lr) {
  for (Parameter* p : params) {
    for (std::size_t j = 0; j < p->value.data.size(); ++j) {
      const double g = p->grad.data[j];
      if (!std::isfinite(g)) {
        throw NumericError("sgd: non-finite gradient in parameter '" + p->name + "'");
      }
      p->value.data[j] -= lr * g;
    }
  }
}

std::uint64_t config_fingerprint(std::size_t audio_dim, std::size_t visual_dim,
                                 std::size_t categories, std::size_t hidden, std::size_t heads,
                                 bool per_modality_attention) {
  const std::string canon = "audio_dim=" + std::to_string(audio_dim) +
                            ";visual_dim=" + std::to_string(visual_dim) +
                            ";categories=" + std::to_string(categories) +
                            ";hidden=" + std::to_string(hidden) +
                            ";heads=" + std::to_string(heads) +
                            ";per_modality=" + (per_modality_attention ? "1" : "0");
  std::uint64_t h = 0xCBF29CE484222325ULL;  // FNV-1a
  for (unsigned char ch : canon) {
    h ^= ch;
    h *= 0x100000001B3ULL;
  }
  return h;
}

namespace {

Tensor rows_for(const Dataset& d, const std::vector<std::size_t>& ids, bool audio) {
  const std::size_t dim = audio ? d.audio_dim() : d.visual_dim();
  Tensor out({ids.size(), dim});
  for (std::size_t r = 0; r < ids.size(); ++r) {
    const auto& src = audio ? d.pairs[ids[r]].audio : d.pairs[ids[r]].visual;
    std::copy(src.begin(), src.end(), out.data.begin() + r * dim);
  }
  return out;
}

LabelMatrix labels_for(const Dataset& d, const std::vector<std::size_t>& ids) {
  LabelMatrix out;
  out.n = ids.size();
  out.categories = d.category_count;
  out.bits.reserve(out.n * out.categories);
  for (std::size_t id : ids) {
    out.bits.insert(out.bits.end(), d.pairs[id].label.begin(), d.pairs[id].label.end());
  }
  return out;
}

Tensor label_targets_for(const Dataset& d, const std::vector<std::size_t>& ids) {
  Tensor out({ids.size(), d.category_count});
  for (std::size_t r = 0; r < ids.size(); ++r)
    for (std::size_t c = 0; c < d.category_count; ++c)
      out.data[r * d.category_count + c] = static_cast<double>(d.pairs[ids[r]].label[c]);
  return out;
}

// Maps the global neighbor lists of the batch anchors into working-set
// local indices. Only batch anchors get a list; adjacency is not carried.
CorrelationGraph localize_graph(const CorrelationGraph& full,
                                const std::vector<std::size_t>& working,
                                const std::vector<std::size_t>& local_of_global,
                                std::size_t batch_count) {
  CorrelationGraph g;
  g.n = working.size();
  g.k = full.k;
  g.neighbors.resize(working.size());
  for (std::size_t b = 0; b < batch_count; ++b) {
    const NeighborList& src = full.neighbors[working[b]];
    NeighborList dst;
    dst.anchor = b;
    dst.truncated = src.truncated;
    dst.scores = src.scores;
    for (std::size_t global : src.indices) dst.indices.push_back(local_of_global[global]);
    g.neighbors[b] = std::move(dst);
  }
  return g;
}

struct EpochGraphs {
  CorrelationGraph audio;
  CorrelationGraph visual;
};

struct StepStats {
  double total = 0.0;
  double label = 0.0;
  double metric = 0.0;
};

class TrainLoop {
 public:
  TrainLoop(const SplitDataset& data, const TrainConfig& cfg, Model& model, AdamState& opt)
      : data_(data), cfg_(cfg), model_(model), opt_(opt), params_(model.parameters()) {}

  StepStats run_batch(const std::vector<std::size_t>& batch, std::size_t epoch,
                      std::size_t batch_index, const EpochGraphs* full_graphs) {
    const Dataset& train = data_.train;
    const std::size_t batch_count = batch.size();

    // Working set: the batch itself, extended by out-of-batch neighbors
    // when the graph spans the whole training set.
    std::vector<std::size_t> working = batch;
    if (full_graphs != nullptr) {
      std::set<std::size_t> in_batch(batch.begin(), batch.end());
      std::set<std::size_t> extra;
      for (std::size_t id : batch) {
        for (std::size_t nb : full_graphs->audio.neighbors[id].indices)
          if (!in_batch.count(nb)) extra.insert(nb);
        for (std::size_t nb : full_graphs->visual.neighbors[id].indices)
          if (!in_batch.count(nb)) extra.insert(nb);
      }
      working.insert(working.end(), extra.begin(), extra.end());
    }

    Tape tape;
    Var in_audio = tape.leaf(rows_for(train, working, true));
    Var in_visual = tape.leaf(rows_for(train, working, false));
    const std::uint64_t step_salt = mix_seed(epoch, batch_index);
    Var proj_audio = model_.audio_net.forward(tape, in_audio, true,
                                              mix_seed(mix_seed(cfg_.seed, 0xD0A), step_salt));
    Var proj_visual = model_.visual_net.forward(tape, in_visual, true,
                                                mix_seed(mix_seed(cfg_.seed, 0xD0B), step_salt));

    // Per-anchor neighbor structure, on current projections.
    CorrelationGraph graph_audio, graph_visual;
    if (full_graphs == nullptr) {
      const LabelMatrix batch_labels = labels_for(train, batch);
      const Tensor& pa = tape.value(proj_audio);
      const Tensor& pv = tape.value(proj_visual);
      if (cfg_.graph_pool == GraphPool::kIntraModal) {
        graph_audio = build_correlation_graph(pa, batch_labels, cfg_.k);
        graph_visual = build_correlation_graph(pv, batch_labels, cfg_.k);
      } else {
        graph_audio = build_correlation_graph(pa, pv, batch_labels, cfg_.k);
        graph_visual = build_correlation_graph(pv, pa, batch_labels, cfg_.k);
      }
    } else {
      std::vector<std::size_t> local_of_global(train.size(), 0);
      for (std::size_t l = 0; l < working.size(); ++l) local_of_global[working[l]] = l;
      graph_audio = localize_graph(full_graphs->audio, working, local_of_global, batch_count);
      graph_visual = localize_graph(full_graphs->visual, working, local_of_global, batch_count);
    }

    BatchVars vars;
    vars.proj_audio = proj_audio;
    vars.proj_visual = proj_visual;
    if (working.size() > batch_count) {
      std::vector<std::size_t> head(batch_count);
      for (std::size_t i = 0; i < batch_count; ++i) head[i] = i;
      vars.proj_audio = tape.gather_rows(proj_audio, head);
      vars.proj_visual = tape.gather_rows(proj_visual, head);
    }

    if (cfg_.loss.use_aa) {
      const bool intra = cfg_.graph_pool == GraphPool::kIntraModal;
      std::vector<Var> rows_a, rows_v;
      rows_a.reserve(batch_count);
      rows_v.reserve(batch_count);
      for (std::size_t b = 0; b < batch_count; ++b) {
        rows_a.push_back(aa_proxy(tape, b, proj_visual, intra ? proj_audio : proj_visual,
                                  graph_audio, model_.attention_for(Modality::kAudio),
                                  cfg_.loss.aa_mode));
        rows_v.push_back(aa_proxy(tape, b, proj_audio, intra ? proj_visual : proj_audio,
                                  graph_visual, model_.attention_for(Modality::kVisual),
                                  cfg_.loss.aa_mode));
      }
      Var proxy_audio = batch_count == 1 ? rows_a[0] : tape.concat_rows(rows_a);
      Var proxy_visual = batch_count == 1 ? rows_v[0] : tape.concat_rows(rows_v);
      vars.anchor_repr_audio = proxy_audio;
      vars.anchor_repr_visual = proxy_visual;
      if (cfg_.loss.scope == AaScope::kAllTerms) {
        vars.other_repr_audio = proxy_audio;
        vars.other_repr_visual = proxy_visual;
      } else {
        vars.other_repr_audio = vars.proj_audio;
        vars.other_repr_visual = vars.proj_visual;
      }
    } else {
      vars.anchor_repr_audio = vars.proj_audio;
      vars.anchor_repr_visual = vars.proj_visual;
      vars.other_repr_audio = vars.proj_audio;
      vars.other_repr_visual = vars.proj_visual;
    }

    const LabelMatrix batch_labels = labels_for(train, batch);
    const Tensor targets = label_targets_for(train, batch);
    Var label_term = label_loss_value(tape, vars.proj_audio, vars.proj_visual, targets);
    Var metric_term = metric_loss_value(tape, vars, batch_labels, cfg_.loss);
    Var total = tape.add(label_term, metric_term);

    StepStats stats;
    stats.total = tape.value(total).scalar_value();
    stats.label = tape.value(label_term).scalar_value();
    stats.metric = tape.value(metric_term).scalar_value();

    for (Parameter* p : params_) p->zero_grad();
    tape.backward(total);

    if (cfg_.grad_clip_norm > 0.0) {
      double ss = 0.0;
      for (Parameter* p : params_)
        for (double g : p->grad.data) ss += g * g;
      const double norm = std::sqrt(ss);
      if (norm > cfg_.grad_clip_norm) {
        const double factor = cfg_.grad_clip_norm / norm;
        for (Parameter* p : params_)
          for (double& g : p->grad.data) g *= factor;
      }
    }

    if (cfg_.optimizer == OptimizerKind::kAdam) {
      adam_step(params_, opt_, cfg_.learning_rate, cfg_.beta1, cfg_.beta2, cfg_.adam_epsilon);
    } else {
      sgd_step(params_, cfg_.learning_rate);
    }
    return stats;
  }

  EpochGraphs build_full_graphs() {
    const Dataset& train = data_.train;
    const Tensor pa = model_.audio_net.project(train.audio_matrix());
    const Tensor pv = model_.visual_net.project(train.visual_matrix());
    const LabelMatrix labels = LabelMatrix::from(train);
    EpochGraphs g;
    if (cfg_.graph_pool == GraphPool::kIntraModal) {
      g.audio = build_correlation_graph(pa, labels, cfg_.k);
      g.visual = build_correlation_graph(pv, labels, cfg_.k);
    } else {
      g.audio = build_correlation_graph(pa, pv, labels, cfg_.k);
      g.visual = build_correlation_graph(pv, pa, labels, cfg_.k);
    }
    return g;
  }

 private:
  const SplitDataset& data_;
  const TrainConfig& cfg_;
  Model& model_;
  AdamState& opt_;
  std::vector<Parameter*> params_;
};

TrainResult run_training(const SplitDataset& data, const TrainConfig& cfg, Model&& model_in,
                         AdamState&& opt_in, std::size_t start_epoch,
                         std::vector<TraceRow> trace) {
  TrainResult result{std::move(model_in), std::move(opt_in), std::move(trace), start_epoch};
  Model& model = result.model;
  AdamState& opt = result.opt_state;
  const Dataset& train = data.train;
  const bool can_eval = cfg.eval_every > 0 && data.test.size() > 0;

  TrainLoop loop(data, cfg, model, opt);

  // Last completed epoch, for the abort path.
  Model last_good = model;
  AdamState last_good_opt = opt;
  std::size_t last_good_epoch = start_epoch;

  for (std::size_t epoch = start_epoch; epoch < cfg.epochs; ++epoch) {
    const BatchPlan plan = make_batches(train.size(), cfg.batch_size, cfg.seed, epoch);
    EpochGraphs full_graphs;
    const bool full_scope = cfg.graph_scope == GraphScope::kPerEpochFull;
    if (full_scope) full_graphs = loop.build_full_graphs();

    double total = 0.0, label = 0.0, metric = 0.0;
    try {
      for (std::size_t b = 0; b < plan.batches.size(); ++b) {
        StepStats s = loop.run_batch(plan.batches[b], epoch, b, full_scope ? &full_graphs : nullptr);
        total += s.total;
        label += s.label;
        metric += s.metric;
      }
    } catch (const NumericError& e) {
      if (!cfg.checkpoint_path.empty()) {
        save_training_checkpoint(cfg.checkpoint_path + ".last_good", last_good, last_good_opt,
                                 last_good_epoch, cfg);
      }
      throw Error("training aborted in epoch " + std::to_string(epoch + 1) + ": " + e.what());
    }

    TraceRow row;
    row.epoch = epoch + 1;
    const double nb = static_cast<double>(plan.batches.size());
    row.mean_total_loss = total / nb;
    row.mean_label_loss = label / nb;
    row.mean_metric_loss = metric / nb;
    if (can_eval && (epoch + 1) % cfg.eval_every == 0) {
      EvalResult ev = evaluate_model(model, data.test);
      row.test_map_av = ev.audio_to_visual.map;
      row.test_map_va = ev.visual_to_audio.map;
    }
    result.trace.push_back(row);

    last_good = model;
    last_good_opt = opt;
    last_good_epoch = epoch + 1;
  }

  result.epochs_done = cfg.epochs;
  if (!cfg.checkpoint_path.empty()) {
    save_training_checkpoint(cfg.checkpoint_path, model, opt, result.epochs_done, cfg);
  }
  if (!cfg.trace_path.empty()) {
    std::ofstream out(cfg.trace_path, std::ios::trunc);
    if (!out) throw IoError(cfg.trace_path + ": cannot open for writing");
    write_trace_csv(result.trace, out);
  }
  return result;
}

}  // namespace

void write_trace_csv(const std::vector<TraceRow>& trace, std::ostream& out) {
  out << "epoch,mean_total_loss,mean_label_loss,mean_metric_loss,test_map_av,test_map_va\n";
  for (const TraceRow& r : trace) {
    out << r.epoch << "," << fmt_full(r.mean_total_loss) << "," << fmt_full(r.mean_label_loss)
        << "," << fmt_full(r.mean_metric_loss) << ",";
    if (r.test_map_av.has_value()) out << fmt_full(*r.test_map_av);
    out << ",";
    if (r.test_map_va.has_value()) out << fmt_full(*r.test_map_va);
    out << "\n";
  }
}

TrainResult train(const SplitDataset& data, const TrainConfig& config) {
  config.validate();
  data.train.validate();
  if (data.train.size() < 2) throw Error("train: training split needs at least 2 samples");

  Model model(config, data.train.audio_dim(), data.train.visual_dim(),
              data.train.category_count);
  AdamState opt;
  opt.init(model.parameters());
  return run_training(data, config, std::move(model), std::move(opt), 0, {});
}

TrainResult train_resume(const SplitDataset& data, const TrainConfig& config,
                         const std::string& checkpoint_path) {
  config.validate();
  LoadedCheckpoint loaded = load_training_checkpoint(checkpoint_path);
  const NetConfig& audio_cfg = loaded.model.audio_net.config();
  const NetConfig& visual_cfg = loaded.model.visual_net.config();
  if (audio_cfg.input_dim != data.train.audio_dim() ||
      visual_cfg.input_dim != data.train.visual_dim() ||
      loaded.model.categories() != data.train.category_count) {
    throw ConfigError("resume: checkpoint/config fingerprint mismatch (data dimensions differ)");
  }
  if (audio_cfg.hidden != config.hidden || loaded.model.attention.heads != config.heads ||
      loaded.model.attention_visual.has_value() != config.attention_per_modality ||
      audio_cfg.dropout != config.dropout || loaded.optimizer != config.optimizer) {
    throw ConfigError("resume: checkpoint/config fingerprint mismatch (model structure differs)");
  }
  if (loaded.epochs_done > config.epochs) {
    throw ConfigError("resume: checkpoint already has " + std::to_string(loaded.epochs_done) +
                      " epochs, config asks for " + std::to_string(config.epochs));
  }
  // Trace rows for completed epochs are not reconstructed; the resumed
  // trace covers the remaining epochs.
  return run_training(data, config, std::move(loaded.model), std::move(loaded.opt_state),
                      loaded.epochs_done, {});
}

void save_training_checkpoint(const std::string& path, Model& model, const AdamState& opt,
                              std::size_t epochs_done, const TrainConfig& config) {
  std::vector<NamedTensor> records;
  const std::uint64_t fp = config_fingerprint(
      model.audio_net.config().input_dim, model.visual_net.config().input_dim,
      model.categories(), model.audio_net.config().hidden, model.attention.heads,
      model.attention_visual.has_value());
  records.push_back({"meta.epoch", Tensor::scalar(static_cast<double>(epochs_done))});
  records.push_back({"meta.fingerprint",
                     Tensor({2}, {static_cast<double>(fp >> 32),
                                  static_cast<double>(fp & 0xFFFFFFFFULL)})});
  records.push_back({"meta.audio_dim",
                     Tensor::scalar(static_cast<double>(model.audio_net.config().input_dim))});
  records.push_back({"meta.visual_dim",
                     Tensor::scalar(static_cast<double>(model.visual_net.config().input_dim))});
  records.push_back({"meta.categories", Tensor::scalar(static_cast<double>(model.categories()))});
  records.push_back(
      {"meta.hidden", Tensor::scalar(static_cast<double>(model.audio_net.config().hidden))});
  records.push_back({"meta.heads", Tensor::scalar(static_cast<double>(model.attention.heads))});
  records.push_back({"meta.per_modality_attention",
                     Tensor::scalar(model.attention_visual.has_value() ? 1.0 : 0.0)});
  records.push_back({"meta.optimizer",
                     Tensor::scalar(config.optimizer == OptimizerKind::kAdam ? 0.0 : 1.0)});
  records.push_back({"meta.dropout", Tensor::scalar(model.audio_net.config().dropout)});

  std::vector<Parameter*> params = model.parameters();
  for (Parameter* p : params) records.push_back({p->name, p->value});
  records.push_back({"adam.step", Tensor::scalar(static_cast<double>(opt.step))});
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (i < opt.first_moment.size()) {
      records.push_back({"adam.m." + params[i]->name, opt.first_moment[i]});
      records.push_back({"adam.v." + params[i]->name, opt.second_moment[i]});
    }
  }
  write_checkpoint(path, kCheckpointVersion, records);
}

LoadedCheckpoint load_training_checkpoint(const std::string& path) {
  CheckpointFile file = read_checkpoint(path);
  auto scalar = [&](const char* name) { return file.require(name).scalar_value(); };

  const std::size_t audio_dim = static_cast<std::size_t>(scalar("meta.audio_dim"));
  const std::size_t visual_dim = static_cast<std::size_t>(scalar("meta.visual_dim"));
  const std::size_t categories = static_cast<std::size_t>(scalar("meta.categories"));
  const std::size_t hidden = static_cast<std::size_t>(scalar("meta.hidden"));
  const std::size_t heads = static_cast<std::size_t>(scalar("meta.heads"));
  const bool per_modality = scalar("meta.per_modality_attention") != 0.0;

  const Tensor& fp_tensor = file.require("meta.fingerprint");
  if (fp_tensor.numel() != 2) throw IoError(path + ": malformed fingerprint record");
  const std::uint64_t stored_fp =
      (static_cast<std::uint64_t>(fp_tensor.data[0]) << 32) |
      static_cast<std::uint64_t>(fp_tensor.data[1]);
  const std::uint64_t expect_fp =
      config_fingerprint(audio_dim, visual_dim, categories, hidden, heads, per_modality);
  if (stored_fp != expect_fp) {
    throw IoError(path + ": checkpoint/config fingerprint mismatch");
  }

  TrainConfig shape_cfg;
  shape_cfg.hidden = hidden;
  shape_cfg.heads = heads;
  shape_cfg.attention_per_modality = per_modality;
  shape_cfg.dropout = scalar("meta.dropout");
  LoadedCheckpoint out{Model(shape_cfg, audio_dim, visual_dim, categories), AdamState{},
                       static_cast<std::size_t>(scalar("meta.epoch")),
                       scalar("meta.optimizer") == 0.0 ? OptimizerKind::kAdam : OptimizerKind::kSgd,
                       shape_cfg.dropout};

  std::vector<Parameter*> params = out.model.parameters();
  for (Parameter* p : params) {
    const Tensor& stored = file.require(p->name);
    if (!stored.same_shape(p->value)) {
      throw IoError(path + ": tensor '" + p->name + "' has shape " + shape_str(stored.shape) +
                    ", expected " + shape_str(p->value.shape));
    }
    p->value = stored;
  }
  out.opt_state.init(params);
  out.opt_state.step = static_cast<std::uint64_t>(scalar("adam.step"));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Tensor* m = file.find("adam.m." + params[i]->name);
    const Tensor* v = file.find("adam.v." + params[i]->name);
    if (m != nullptr && v != nullptr) {
      out.opt_state.first_moment[i] = *m;
      out.opt_state.second_moment[i] = *v;
    }
  }
  return out;
}

EvalResult evaluate_model(Model& model, const Dataset& test) {
  if (test.size() == 0) throw Error("evaluate: empty test split");
  if (test.audio_dim() != model.audio_net.config().input_dim ||
      test.visual_dim() != model.visual_net.config().input_dim ||
      test.category_count != model.categories()) {
    throw ConfigError("evaluate: checkpoint/config fingerprint mismatch (data dimensions differ)");
  }
  const Tensor audio_emb = model.audio_net.project(test.audio_matrix());
  const Tensor visual_emb = model.visual_net.project(test.visual_matrix());
  return evaluate_embeddings(audio_emb, visual_emb, LabelMatrix::from(test));
}

std::vector<SweepRow> sweep_k(const SplitDataset& data, const TrainConfig& base,
                              std::size_t k_max) {
  if (k_max < 1) throw ConfigError("sweep_k: k range is empty");
  std::vector<SweepRow> rows;
  for (LossKind strategy : {LossKind::kTriplet, LossKind::kTripletDagger, LossKind::kHardTriplet}) {
    for (std::size_t k = 1; k <= k_max; ++k) {
      TrainConfig cfg = base;
      cfg.loss.kind = strategy;
      cfg.k = k;
      cfg.checkpoint_path.clear();
      cfg.trace_path.clear();
      cfg.eval_every = 0;
      TrainResult result = train(data, cfg);
      EvalResult ev = evaluate_model(result.model, data.test);
      rows.push_back({loss_kind_name(strategy), k, ev.audio_to_visual.map,
                      ev.visual_to_audio.map, ev.map_average});
    }
  }
  return rows;
}

void write_sweep_csv(const std::vector<SweepRow>& rows, std::ostream& out) {
  out << "strategy,k,map_av,map_va,map_avg\n";
  for (const SweepRow& r : rows) {
    out << r.strategy << "," << r.k << "," << fmt_compact(r.map_av) << ","
        << fmt_compact(r.map_va) << "," << fmt_compact(r.map_avg) << "\n";
  }
}

}  // namespace aadml
