#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "aadml/error.hpp"
#include "aadml/rng.hpp"
#include "aadml/trainer.hpp"

using namespace aadml;

namespace {

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("aadml_trainer_" + name)).string();
}

std::vector<char> slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  return std::vector<char>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

SplitDataset small_split(std::size_t classes, std::size_t per_class, std::uint64_t seed) {
  SynthConfig cfg;
  cfg.classes = classes;
  cfg.per_class = per_class;
  cfg.audio_dim = 6;
  cfg.visual_dim = 9;
  cfg.class_separation = 1.0;
  cfg.noise_sigma = 0.05;
  cfg.seed = seed;
  return stratified_split(synth_generate(cfg), 0.8, seed);
}

TrainConfig small_config() {
  TrainConfig cfg;
  cfg.epochs = 4;
  cfg.batch_size = 8;
  cfg.hidden = 12;
  cfg.k = 3;
  cfg.seed = 5;
  cfg.eval_every = 2;
  return cfg;
}

std::string trace_to_string(const std::vector<TraceRow>& trace) {
  std::ostringstream out;
  write_trace_csv(trace, out);
  return out.str();
}

}  // namespace

TEST_CASE("adam leaves parameters untouched under zero gradients") {
  Parameter p("p", Tensor::vector({1.0, -2.0, 3.0}));
  std::vector<Parameter*> params = {&p};
  AdamState state;
  state.init(params);
  const std::vector<double> before = p.value.data;
  adam_step(params, state, 1e-4, 0.9, 0.999, 1e-8);
  CHECK(p.value.data == before);
}

TEST_CASE("first adam step moves by about the learning rate") {
  // t=1, g=1: m_hat = 1, v_hat = 1, update = lr / (1 + eps).
  Parameter p("p", Tensor::scalar(0.5));
  p.grad.data[0] = 1.0;
  std::vector<Parameter*> params = {&p};
  AdamState state;
  state.init(params);
  adam_step(params, state, 1e-4, 0.9, 0.999, 1e-8);
  const double moved = 0.5 - p.value.data[0];
  CHECK(moved == doctest::Approx(1e-4).epsilon(1e-6));
}

TEST_CASE("adam rejects non-finite gradients naming the parameter") {
  Parameter p("audio.fc0.weight", Tensor::scalar(0.5));
  p.grad.data[0] = std::numeric_limits<double>::quiet_NaN();
  std::vector<Parameter*> params = {&p};
  AdamState state;
  state.init(params);
  CHECK_THROWS_WITH_AS(adam_step(params, state, 1e-4, 0.9, 0.999, 1e-8),
                       doctest::Contains("audio.fc0.weight"), NumericError);
}

TEST_CASE("config validation happens before any compute") {
  TrainConfig cfg = small_config();
  cfg.k = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = small_config();
  cfg.batch_size = 1;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = small_config();
  cfg.learning_rate = 0.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = small_config();
  cfg.epochs = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("checkpoint writer reproduces the committed golden bytes") {
  std::vector<NamedTensor> records = {
      {"w", Tensor::matrix(2, 2, {1.0, 0.5, -0.25, 2.0})},
      {"b", Tensor::vector({0.0, 1.0})},
      {"s", Tensor::scalar(3.5)},
  };
  const std::string path = temp_path("golden.ckpt");
  write_checkpoint(path, kCheckpointVersion, records);
  CHECK(slurp(path) == slurp(std::string(AADML_GOLDEN_DIR) + "/sample.ckpt"));
}

TEST_CASE("checkpoint container round-trips byte-identically") {
  Rng rng(71);
  std::vector<NamedTensor> records;
  records.push_back({"alpha", Tensor({3, 4})});
  records.push_back({"beta", Tensor({7})});
  records.push_back({"gamma", Tensor::scalar(0.0)});
  for (auto& r : records)
    for (double& v : r.value.data) v = rng.normal();

  const std::string p1 = temp_path("rt1.ckpt");
  const std::string p2 = temp_path("rt2.ckpt");
  write_checkpoint(p1, kCheckpointVersion, records);
  CheckpointFile loaded = read_checkpoint(p1);
  write_checkpoint(p2, loaded.version, loaded.tensors);
  CHECK(slurp(p1) == slurp(p2));
}

TEST_CASE("checkpoint reader rejects corruption") {
  std::vector<NamedTensor> records = {{"w", Tensor::vector({1.0, 2.0})}};
  const std::string path = temp_path("bad.ckpt");
  write_checkpoint(path, kCheckpointVersion, records);
  auto bytes = slurp(path);
  bytes[0] = 'X';
  std::ofstream(path, std::ios::binary | std::ios::trunc)
      .write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  CHECK_THROWS_WITH_AS(read_checkpoint(path), doctest::Contains("magic"), IoError);
}

TEST_CASE("single-class data reduces training to label regression") {
  SynthConfig scfg;
  scfg.classes = 1;
  scfg.per_class = 12;
  scfg.audio_dim = 5;
  scfg.visual_dim = 7;
  scfg.class_separation = 1.0;
  scfg.noise_sigma = 0.0;
  scfg.seed = 3;
  SplitDataset data = stratified_split(synth_generate(scfg), 0.8, 3);

  TrainConfig cfg;
  cfg.epochs = 100;
  cfg.batch_size = 16;
  cfg.hidden = 16;
  cfg.learning_rate = 0.01;
  cfg.k = 2;
  cfg.seed = 1;
  cfg.dropout = 0.0;
  cfg.eval_every = 0;
  TrainResult result = train(data, cfg);
  CHECK(result.trace.back().mean_metric_loss == 0.0);
  CHECK(result.trace.back().mean_label_loss < 0.05);
}

TEST_CASE("identical seed and config give byte-identical traces and checkpoints") {
  SplitDataset data = small_split(3, 10, 11);
  TrainConfig cfg = small_config();
  cfg.trace_path = temp_path("t1.csv");
  cfg.checkpoint_path = temp_path("c1.ckpt");
  train(data, cfg);

  TrainConfig cfg2 = cfg;
  cfg2.trace_path = temp_path("t2.csv");
  cfg2.checkpoint_path = temp_path("c2.ckpt");
  train(data, cfg2);

  CHECK(slurp(temp_path("t1.csv")) == slurp(temp_path("t2.csv")));
  CHECK(slurp(temp_path("c1.ckpt")) == slurp(temp_path("c2.ckpt")));

  TrainConfig cfg3 = cfg;
  cfg3.seed = 6;
  cfg3.trace_path = temp_path("t3.csv");
  cfg3.checkpoint_path.clear();
  train(data, cfg3);
  CHECK(slurp(temp_path("t1.csv")) != slurp(temp_path("t3.csv")));
}

TEST_CASE("resuming from a checkpoint matches uninterrupted training exactly") {
  SplitDataset data = small_split(3, 10, 13);

  TrainConfig full = small_config();
  full.epochs = 10;
  full.eval_every = 0;
  TrainResult uninterrupted = train(data, full);

  TrainConfig half = full;
  half.epochs = 5;
  half.checkpoint_path = temp_path("half.ckpt");
  train(data, half);

  TrainConfig rest = full;
  rest.epochs = 10;
  TrainResult resumed = train_resume(data, rest, temp_path("half.ckpt"));

  std::vector<Parameter*> a = uninterrupted.model.parameters();
  std::vector<Parameter*> b = resumed.model.parameters();
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i]->name == b[i]->name);
    CHECK(a[i]->value.data == b[i]->value.data);
  }
  CHECK(uninterrupted.opt_state.step == resumed.opt_state.step);
  for (std::size_t i = 0; i < uninterrupted.opt_state.first_moment.size(); ++i) {
    CHECK(uninterrupted.opt_state.first_moment[i].data == resumed.opt_state.first_moment[i].data);
    CHECK(uninterrupted.opt_state.second_moment[i].data ==
          resumed.opt_state.second_moment[i].data);
  }
}

TEST_CASE("training checkpoints reload into an identical model") {
  SplitDataset data = small_split(2, 8, 17);
  TrainConfig cfg = small_config();
  cfg.epochs = 2;
  cfg.checkpoint_path = temp_path("reload.ckpt");
  TrainResult result = train(data, cfg);

  LoadedCheckpoint loaded = load_training_checkpoint(temp_path("reload.ckpt"));
  CHECK(loaded.epochs_done == 2);
  std::vector<Parameter*> a = result.model.parameters();
  std::vector<Parameter*> b = loaded.model.parameters();
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i]->value.data == b[i]->value.data);

  // A second save of the loaded state is byte-identical.
  save_training_checkpoint(temp_path("resave.ckpt"), loaded.model, loaded.opt_state,
                           loaded.epochs_done, cfg);
  CHECK(slurp(temp_path("reload.ckpt")) == slurp(temp_path("resave.ckpt")));
}

TEST_CASE("fingerprint mismatches are hard errors") {
  SplitDataset data = small_split(2, 8, 19);
  TrainConfig cfg = small_config();
  cfg.epochs = 1;
  cfg.checkpoint_path = temp_path("fp.ckpt");
  TrainResult result = train(data, cfg);

  SUBCASE("evaluating against mismatched data") {
    SplitDataset other = small_split(3, 8, 19);  // different category count
    CHECK_THROWS_WITH_AS(evaluate_model(result.model, other.test),
                         doctest::Contains("fingerprint"), ConfigError);
  }
  SUBCASE("resuming with a different structure") {
    TrainConfig other = cfg;
    other.epochs = 2;
    other.hidden = cfg.hidden * 2;
    CHECK_THROWS_WITH_AS(train_resume(data, other, temp_path("fp.ckpt")),
                         doctest::Contains("fingerprint"), ConfigError);
  }
  SUBCASE("corrupted fingerprint record is rejected") {
    CheckpointFile file = read_checkpoint(temp_path("fp.ckpt"));
    for (NamedTensor& t : file.tensors) {
      if (t.name == "meta.hidden") t.value.data[0] += 1.0;  // structure lie
    }
    write_checkpoint(temp_path("fp_bad.ckpt"), file.version, file.tensors);
    CHECK_THROWS_WITH_AS(load_training_checkpoint(temp_path("fp_bad.ckpt")),
                         doctest::Contains("fingerprint"), IoError);
  }
}

TEST_CASE("trace rows carry MAP columns only on evaluation epochs") {
  SplitDataset data = small_split(2, 10, 23);
  TrainConfig cfg = small_config();
  cfg.epochs = 4;
  cfg.eval_every = 2;
  TrainResult result = train(data, cfg);
  REQUIRE(result.trace.size() == 4);
  CHECK_FALSE(result.trace[0].test_map_av.has_value());
  CHECK(result.trace[1].test_map_av.has_value());
  CHECK_FALSE(result.trace[2].test_map_av.has_value());
  CHECK(result.trace[3].test_map_av.has_value());

  const std::string csv = trace_to_string(result.trace);
  CHECK(csv.find("epoch,mean_total_loss,mean_label_loss,mean_metric_loss,test_map_av,test_map_va\n") == 0);
  // Non-eval epochs end with two empty cells.
  CHECK(csv.find("\n1,") != std::string::npos);
  std::istringstream lines(csv);
  std::string line;
  std::getline(lines, line);  // header
  std::getline(lines, line);
  CHECK(line.substr(line.size() - 2) == ",,");
}

TEST_CASE("per-epoch whole-set graphs and cross-modal pools train") {
  SplitDataset data = small_split(2, 8, 29);
  TrainConfig cfg = small_config();
  cfg.epochs = 2;
  cfg.eval_every = 0;
  cfg.graph_scope = GraphScope::kPerEpochFull;
  CHECK_NOTHROW(train(data, cfg));
  cfg.graph_scope = GraphScope::kPerBatch;
  cfg.graph_pool = GraphPool::kCrossModal;
  CHECK_NOTHROW(train(data, cfg));
  cfg.attention_per_modality = true;
  cfg.optimizer = OptimizerKind::kSgd;
  CHECK_NOTHROW(train(data, cfg));
}

TEST_CASE("sweep over k produces one row per strategy and k") {
  SplitDataset data = small_split(2, 6, 31);
  TrainConfig cfg = small_config();
  cfg.epochs = 1;
  std::vector<SweepRow> rows = sweep_k(data, cfg, 2);
  REQUIRE(rows.size() == 6);
  for (const SweepRow& r : rows) {
    CHECK(r.map_av >= 0.0);
    CHECK(r.map_av <= 1.0);
    CHECK(r.map_va >= 0.0);
    CHECK(r.map_va <= 1.0);
  }
  std::ostringstream out;
  write_sweep_csv(rows, out);
  CHECK(out.str().find("strategy,k,map_av,map_va,map_avg\n") == 0);
}

TEST_CASE("mean label loss is non-increasing over late windows on easy data") {
  // Soft smoke property: after epoch 10, a 20-epoch window may regress at
  // most 3 times.
  SynthConfig scfg;
  scfg.classes = 2;
  scfg.per_class = 10;
  scfg.audio_dim = 5;
  scfg.visual_dim = 6;
  scfg.class_separation = 1.0;
  scfg.noise_sigma = 0.0;
  scfg.seed = 37;
  SplitDataset data = stratified_split(synth_generate(scfg), 0.8, 37);
  TrainConfig cfg;
  cfg.epochs = 30;
  cfg.batch_size = 16;
  cfg.hidden = 12;
  cfg.learning_rate = 0.005;
  cfg.dropout = 0.0;
  cfg.seed = 2;
  cfg.eval_every = 0;
  TrainResult result = train(data, cfg);
  int violations = 0;
  for (std::size_t e = 10; e + 1 < result.trace.size(); ++e) {
    if (result.trace[e + 1].mean_label_loss > result.trace[e].mean_label_loss) ++violations;
  }
  CHECK(violations <= 3);
}
