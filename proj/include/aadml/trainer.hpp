#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "aadml/attention.hpp"
#include "aadml/checkpoint.hpp"
#include "aadml/data.hpp"
#include "aadml/losses.hpp"
#include "aadml/metrics.hpp"
#include "aadml/network.hpp"

namespace aadml {

enum class OptimizerKind { kAdam, kSgd };
enum class GraphScope { kPerBatch, kPerEpochFull };
enum class GraphPool { kIntraModal, kCrossModal };

struct TrainConfig {
  std::size_t epochs = 400;
  std::size_t batch_size = 200;
  double learning_rate = 1e-4;
  OptimizerKind optimizer = OptimizerKind::kAdam;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_epsilon = 1e-8;
  std::uint64_t seed = 0;
  std::size_t k = 3;  // neighbor count, anchor included
  std::size_t hidden = 1024;
  double dropout = 0.1;
  std::size_t heads = 1;
  bool attention_per_modality = false;
  LossConfig loss;
  GraphScope graph_scope = GraphScope::kPerBatch;
  GraphPool graph_pool = GraphPool::kIntraModal;
  double grad_clip_norm = 0.0;  // 0 disables clipping
  std::size_t eval_every = 10;  // 0 disables trace-time evaluation
  std::string checkpoint_path;  // empty: no checkpoint written
  std::string trace_path;       // empty: no trace written

  void validate() const;
};

// Both projection nets plus the attention parameters (one shared set, or one
// per modality).
struct Model {
  ProjectionNet audio_net;
  ProjectionNet visual_net;
  AttentionParams attention;
  std::optional<AttentionParams> attention_visual;

  Model(const TrainConfig& cfg, std::size_t audio_dim, std::size_t visual_dim,
        std::size_t categories);

  AttentionParams& attention_for(Modality m);
  std::vector<Parameter*> parameters();
  std::size_t categories() const { return audio_net.config().output_dim; }
};

struct AdamState {
  std::vector<Tensor> first_moment;
  std::vector<Tensor> second_moment;
  std::uint64_t step = 0;

  void init(std::span<Parameter* const> params);
  bool initialized() const { return !first_moment.empty(); }
};

// Standard bias-corrected Adam update. Aborts with a diagnostic naming the
// parameter when a gradient is non-finite.
void adam_step(std::span<Parameter* const> params, AdamState& state, double lr, double beta1,
               double beta2, double epsilon);
void sgd_step(std::span<Parameter* const> params, double lr);

struct TraceRow {
  std::size_t epoch = 0;  // 1-based
  double mean_total_loss = 0.0;
  double mean_label_loss = 0.0;
  double mean_metric_loss = 0.0;
  std::optional<double> test_map_av;
  std::optional<double> test_map_va;
};

void write_trace_csv(const std::vector<TraceRow>& trace, std::ostream& out);

struct TrainResult {
  Model model;
  AdamState opt_state;
  std::vector<TraceRow> trace;
  std::size_t epochs_done = 0;
};

TrainResult train(const SplitDataset& data, const TrainConfig& config);

// Continues a checkpointed run up to config.epochs. The result is exactly
// equal to an uninterrupted run of the same config.
TrainResult train_resume(const SplitDataset& data, const TrainConfig& config,
                         const std::string& checkpoint_path);

// Model/optimizer state as named tensors, plus structural metadata.
void save_training_checkpoint(const std::string& path, Model& model, const AdamState& opt,
                              std::size_t epochs_done, const TrainConfig& config);

std::uint64_t config_fingerprint(std::size_t audio_dim, std::size_t visual_dim,
                                 std::size_t categories, std::size_t hidden, std::size_t heads,
                                 bool per_modality_attention);

// Rebuilds a model from checkpoint metadata alone and loads every tensor.
// Verifies the stored fingerprint against the recomputed one.
struct LoadedCheckpoint {
  Model model;
  AdamState opt_state;
  std::size_t epochs_done = 0;
  OptimizerKind optimizer = OptimizerKind::kAdam;
  double dropout = 0.1;
};
LoadedCheckpoint load_training_checkpoint(const std::string& path);

EvalResult evaluate_model(Model& model, const Dataset& test);

struct SweepRow {
  std::string strategy;
  std::size_t k = 0;
  double map_av = 0.0;
  double map_va = 0.0;
  double map_avg = 0.0;
};

// One full training run per (triplet strategy, k), evaluated on the test
// split: the sample-selection ablation curve.
std::vector<SweepRow> sweep_k(const SplitDataset& data, const TrainConfig& base,
                              std::size_t k_max = 7);

void write_sweep_csv(const std::vector<SweepRow>& rows, std::ostream& out);

}  // namespace aadml
