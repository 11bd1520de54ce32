// Command-line surface: dataset synthesis, training, retrieval evaluation
// and the sample-selection ablation sweep. Each run echoes its resolved
// configuration into the output directory so results are reproducible from
// the echo alone.

#include <CLI11.hpp>
#include <algorithm>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <set>

#include "aadml/csv.hpp"
#include "aadml/error.hpp"
#include "aadml/log.hpp"
#include "aadml/metrics.hpp"
#include "aadml/trainer.hpp"

namespace fs = std::filesystem;
using namespace aadml;

namespace {

struct KeySpec {
  std::string key;
  std::function<void(const std::string&)> apply;
  std::function<std::string()> echo;
};

// Flat `key = value` file with '#' comments. Keys are validated against the
// schema; unknown keys are errors.
std::map<std::string, std::string> parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path + ": cannot open config file");
  std::map<std::string, std::string> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    auto trim = [](std::string s) {
      const auto a = s.find_first_not_of(" \t\r");
      if (a == std::string::npos) return std::string();
      const auto b = s.find_last_not_of(" \t\r");
      return s.substr(a, b - a + 1);
    };
    const std::string stripped = trim(line);
    if (stripped.empty()) continue;
    const auto eq = stripped.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(path + ":" + std::to_string(line_no) + ": expected 'key = value'");
    }
    const std::string key = trim(stripped.substr(0, eq));
    const std::string value = trim(stripped.substr(eq + 1));
    if (key.empty()) throw ConfigError(path + ":" + std::to_string(line_no) + ": empty key");
    if (!out.emplace(key, value).second) {
      throw ConfigError(path + ":" + std::to_string(line_no) + ": duplicate key '" + key + "'");
    }
  }
  return out;
}

std::size_t parse_size(const std::string& key, const std::string& value) {
  try {
    return std::stoul(value);
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': cannot parse '" + value + "' as an integer");
  }
}

double parse_double(const std::string& key, const std::string& value) {
  try {
    return std::stod(value);
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': cannot parse '" + value + "' as a number");
  }
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw ConfigError("config key '" + key + "': cannot parse '" + value + "' as a boolean");
}

// String forms of the enum-valued settings, resolved into TrainConfig after
// all sources (defaults, file, flags) are merged.
struct TrainSettings {
  TrainConfig cfg;
  std::string loss = "triplet";
  std::string aa_mode = "joint";
  std::string aa_scope = "all_terms";
  std::string optimizer = "adam";
  std::string graph_scope = "per_batch";
  std::string graph_pool = "intra_modal";
  bool use_aa = true;
  bool contrastive_as_printed = false;

  std::vector<KeySpec> schema() {
    auto size_key = [this](const char* key, std::size_t& field) {
      return KeySpec{key, [key, &field](const std::string& v) { field = parse_size(key, v); },
                     [&field] { return std::to_string(field); }};
    };
    auto double_key = [](const char* key, double& field) {
      return KeySpec{key, [key, &field](const std::string& v) { field = parse_double(key, v); },
                     [&field] { return fmt_full(field); }};
    };
    auto bool_key = [](const char* key, bool& field) {
      return KeySpec{key, [key, &field](const std::string& v) { field = parse_bool(key, v); },
                     [&field] { return field ? std::string("true") : std::string("false"); }};
    };
    auto string_key = [](const char* key, std::string& field) {
      return KeySpec{key, [&field](const std::string& v) { field = v; }, [&field] { return field; }};
    };
    return {
        size_key("epochs", cfg.epochs),
        size_key("batch_size", cfg.batch_size),
        double_key("learning_rate", cfg.learning_rate),
        string_key("optimizer", optimizer),
        KeySpec{"seed",
                [this](const std::string& v) { cfg.seed = std::stoull(v); },
                [this] { return std::to_string(cfg.seed); }},
        size_key("k", cfg.k),
        size_key("hidden", cfg.hidden),
        double_key("dropout", cfg.dropout),
        size_key("heads", cfg.heads),
        bool_key("attention_per_modality", cfg.attention_per_modality),
        string_key("loss", loss),
        string_key("aa_mode", aa_mode),
        string_key("aa_scope", aa_scope),
        bool_key("use_aa", use_aa),
        double_key("triplet_margin", cfg.loss.triplet_margin),
        double_key("contrastive_margin", cfg.loss.contrastive_margin),
        bool_key("contrastive_as_printed", contrastive_as_printed),
        double_key("angular_degrees", cfg.loss.angular_degrees),
        string_key("graph_scope", graph_scope),
        string_key("graph_pool", graph_pool),
        double_key("grad_clip_norm", cfg.grad_clip_norm),
        size_key("eval_every", cfg.eval_every),
    };
  }

  // Resolves the string-valued settings; throws ConfigError naming the key.
  TrainConfig resolve() {
    auto kind = loss_kind_from(loss);
    if (!kind) throw ConfigError("config key 'loss': unknown kind '" + loss + "'");
    cfg.loss.kind = *kind;
    if (aa_mode == "joint") {
      cfg.loss.aa_mode = AaMode::kJoint;
    } else if (aa_mode == "literal") {
      cfg.loss.aa_mode = AaMode::kLiteral;
    } else {
      throw ConfigError("config key 'aa_mode': expected joint|literal, got '" + aa_mode + "'");
    }
    if (aa_scope == "all_terms") {
      cfg.loss.scope = AaScope::kAllTerms;
    } else if (aa_scope == "anchor_only") {
      cfg.loss.scope = AaScope::kAnchorOnly;
    } else {
      throw ConfigError("config key 'aa_scope': expected all_terms|anchor_only, got '" + aa_scope +
                        "'");
    }
    if (optimizer == "adam") {
      cfg.optimizer = OptimizerKind::kAdam;
    } else if (optimizer == "sgd") {
      cfg.optimizer = OptimizerKind::kSgd;
    } else {
      throw ConfigError("config key 'optimizer': expected adam|sgd, got '" + optimizer + "'");
    }
    if (graph_scope == "per_batch") {
      cfg.graph_scope = GraphScope::kPerBatch;
    } else if (graph_scope == "per_epoch_full") {
      cfg.graph_scope = GraphScope::kPerEpochFull;
    } else {
      throw ConfigError("config key 'graph_scope': expected per_batch|per_epoch_full, got '" +
                        graph_scope + "'");
    }
    if (graph_pool == "intra_modal") {
      cfg.graph_pool = GraphPool::kIntraModal;
    } else if (graph_pool == "cross_modal") {
      cfg.graph_pool = GraphPool::kCrossModal;
    } else {
      throw ConfigError("config key 'graph_pool': expected intra_modal|cross_modal, got '" +
                        graph_pool + "'");
    }
    cfg.loss.use_aa = use_aa;
    cfg.loss.contrastive_as_printed = contrastive_as_printed;
    cfg.validate();
    return cfg;
  }
};

void apply_config_file(TrainSettings& settings, const std::string& path,
                       const std::set<std::string>& cli_overridden) {
  auto file_values = parse_config_file(path);
  auto schema = settings.schema();
  for (const auto& [key, value] : file_values) {
    bool known = false;
    for (const KeySpec& spec : schema) {
      if (spec.key == key) {
        known = true;
        if (!cli_overridden.count(key)) spec.apply(value);
        break;
      }
    }
    if (!known) throw ConfigError(path + ": unknown config key '" + key + "'");
  }
}

void echo_config(const std::string& out_dir, const std::string& command,
                 const std::vector<std::pair<std::string, std::string>>& extra,
                 TrainSettings* settings) {
  fs::create_directories(out_dir);
  const std::string path = out_dir + "/config.txt";
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError(path + ": cannot open for writing");
  out << "# resolved configuration\n";
  out << "command = " << command << "\n";
  for (const auto& [k, v] : extra) out << k << " = " << v << "\n";
  if (settings != nullptr) {
    for (const KeySpec& spec : settings->schema()) out << spec.key << " = " << spec.echo() << "\n";
  }
  if (!out) throw IoError(path + ": write failed");
}

// Registers one CLI flag per schema key (dashes in flags, underscores in
// config files). `overridden` collects keys passed on the command line;
// those outrank config-file values.
void register_train_flags(CLI::App* cmd, TrainSettings& settings,
                          std::set<std::string>& overridden) {
  for (KeySpec spec : settings.schema()) {
    std::string flag = "--" + spec.key;
    std::replace(flag.begin(), flag.end(), '_', '-');
    auto apply = spec.apply;
    const std::string key = spec.key;
    cmd->add_option_function<std::string>(
           flag,
           [apply, key, &overridden](const std::string& v) {
             apply(v);
             overridden.insert(key);
           })
        ->expected(1);
  }
}

int cmd_synth(const std::string& out_dir, std::size_t classes, std::size_t per_class,
              std::size_t audio_dim, std::size_t visual_dim, double separation, double noise,
              std::uint64_t seed, double train_fraction, const std::string& dtype) {
  SynthConfig cfg;
  cfg.classes = classes;
  cfg.per_class = per_class;
  cfg.audio_dim = audio_dim;
  cfg.visual_dim = visual_dim;
  cfg.class_separation = separation;
  cfg.noise_sigma = noise;
  cfg.seed = seed;
  if (classes == 1) {
    warn("generating a single-class dataset; metric losses will be inert");
  }
  AvfDtype storage;
  if (dtype == "f32") {
    storage = AvfDtype::kFloat32;
  } else if (dtype == "f64") {
    storage = AvfDtype::kFloat64;
  } else {
    throw ConfigError("--dtype: expected f32|f64, got '" + dtype + "'");
  }
  Dataset d = synth_generate(cfg);
  SplitDataset split = stratified_split(d, train_fraction, seed);
  write_dataset_dir(out_dir, d, split, storage);
  echo_config(out_dir, "synth",
              {{"classes", std::to_string(classes)},
               {"per_class", std::to_string(per_class)},
               {"audio_dim", std::to_string(audio_dim)},
               {"visual_dim", std::to_string(visual_dim)},
               {"separation", fmt_full(separation)},
               {"noise", fmt_full(noise)},
               {"seed", std::to_string(seed)},
               {"train_fraction", fmt_full(train_fraction)},
               {"dtype", dtype}},
              nullptr);
  std::cout << "wrote " << d.size() << " pairs (" << split.train.size() << " train, "
            << split.test.size() << " test) to " << out_dir << "\n";
  return 0;
}

int cmd_train(const std::string& data_dir, const std::string& out_dir, TrainSettings& settings,
              const std::string& resume_path) {
  TrainConfig cfg = settings.resolve();
  SplitDataset data = load_dataset_dir(data_dir);
  fs::create_directories(out_dir);
  cfg.checkpoint_path = out_dir + "/checkpoint.ckpt";
  cfg.trace_path = out_dir + "/trace.csv";
  echo_config(out_dir, "train", {{"data", data_dir}}, &settings);

  TrainResult result = resume_path.empty() ? train(data, cfg)
                                           : train_resume(data, cfg, resume_path);
  std::cout << "trained " << result.epochs_done << " epochs; final mean loss "
            << fmt_compact(result.trace.empty() ? 0.0 : result.trace.back().mean_total_loss)
            << "\n";
  std::cout << "checkpoint: " << cfg.checkpoint_path << "\ntrace: " << cfg.trace_path << "\n";
  return 0;
}

EvalResult evaluate_with_proxies(Model& model, const Dataset& test, std::size_t k, AaMode mode) {
  const Tensor audio_emb = model.audio_net.project(test.audio_matrix());
  const Tensor visual_emb = model.visual_net.project(test.visual_matrix());
  const LabelMatrix labels = LabelMatrix::from(test);
  const CorrelationGraph ga = build_correlation_graph(audio_emb, labels, k);
  const CorrelationGraph gv = build_correlation_graph(visual_emb, labels, k);

  Tape tape;
  Var pa = tape.leaf(audio_emb);
  Var pv = tape.leaf(visual_emb);
  Tensor proxy_a({test.size(), model.categories()});
  Tensor proxy_v({test.size(), model.categories()});
  for (std::size_t i = 0; i < test.size(); ++i) {
    Var ra = aa_proxy(tape, i, pv, pa, ga, model.attention_for(Modality::kAudio), mode);
    Var rv = aa_proxy(tape, i, pa, pv, gv, model.attention_for(Modality::kVisual), mode);
    std::copy(tape.value(ra).data.begin(), tape.value(ra).data.end(),
              proxy_a.data.begin() + i * model.categories());
    std::copy(tape.value(rv).data.begin(), tape.value(rv).data.end(),
              proxy_v.data.begin() + i * model.categories());
  }
  return evaluate_embeddings(proxy_a, proxy_v, labels);
}

int cmd_eval(const std::string& checkpoint_path, const std::string& data_dir,
             const std::string& out_dir, bool use_proxies, std::size_t k,
             const std::string& aa_mode) {
  if (!fs::exists(checkpoint_path)) {
    throw ConfigError("checkpoint not found: " + checkpoint_path);
  }
  LoadedCheckpoint loaded = load_training_checkpoint(checkpoint_path);
  SplitDataset data = load_dataset_dir(data_dir);

  EvalResult result;
  if (use_proxies) {
    AaMode mode;
    if (aa_mode == "joint") {
      mode = AaMode::kJoint;
    } else if (aa_mode == "literal") {
      mode = AaMode::kLiteral;
    } else {
      throw ConfigError("--aa-mode: expected joint|literal, got '" + aa_mode + "'");
    }
    if (data.test.audio_dim() != loaded.model.audio_net.config().input_dim ||
        data.test.category_count != loaded.model.categories()) {
      throw ConfigError("evaluate: checkpoint/config fingerprint mismatch (data dimensions differ)");
    }
    result = evaluate_with_proxies(loaded.model, data.test, k, mode);
  } else {
    result = evaluate_model(loaded.model, data.test);
  }

  fs::create_directories(out_dir);
  echo_config(out_dir, "eval",
              {{"checkpoint", checkpoint_path},
               {"data", data_dir},
               {"use_proxies", use_proxies ? "true" : "false"}},
              nullptr);
  const std::string report_path = out_dir + "/report.csv";
  std::ofstream report(report_path, std::ios::trunc);
  if (!report) throw IoError(report_path + ": cannot open for writing");
  write_report_csv(result, report);

  char line[128];
  std::snprintf(line, sizeof(line), "%-8s %-8s %-8s\n%-8.3f %-8.3f %-8.3f\n", "A->V", "V->A",
                "Avg", result.audio_to_visual.map, result.visual_to_audio.map,
                result.map_average);
  std::cout << line << "report: " << report_path << "\n";
  return 0;
}

int cmd_sweep_k(const std::string& data_dir, const std::string& out_dir, TrainSettings& settings,
                std::size_t k_max) {
  TrainConfig cfg = settings.resolve();
  if (k_max < 1) throw ConfigError("--k-max must be >= 1");
  SplitDataset data = load_dataset_dir(data_dir);
  fs::create_directories(out_dir);
  echo_config(out_dir, "sweep-k", {{"data", data_dir}, {"k_max", std::to_string(k_max)}},
              &settings);
  std::vector<SweepRow> rows = sweep_k(data, cfg, k_max);
  const std::string path = out_dir + "/sweep.csv";
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError(path + ": cannot open for writing");
  write_sweep_csv(rows, out);
  std::cout << "wrote " << rows.size() << " rows to " << path << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"anchor-aware metric learning for audio-visual retrieval"};
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand("synth", "generate a synthetic paired dataset");
  std::string synth_out;
  std::size_t classes = 3, per_class = 50, audio_dim = 128, visual_dim = 1024;
  double separation = 1.0, noise = 0.1, train_fraction = 0.8;
  std::uint64_t synth_seed = 0;
  std::string dtype = "f64";
  synth->add_option("--out", synth_out, "output directory")->required();
  synth->add_option("--classes", classes, "number of categories");
  synth->add_option("--per-class", per_class, "samples per category");
  synth->add_option("--audio-dim", audio_dim, "audio feature dimension");
  synth->add_option("--visual-dim", visual_dim, "visual feature dimension");
  synth->add_option("--separation", separation, "minimum centroid distance");
  synth->add_option("--noise", noise, "per-sample Gaussian noise sigma");
  synth->add_option("--seed", synth_seed, "generator seed");
  synth->add_option("--train-fraction", train_fraction, "stratified train share");
  synth->add_option("--dtype", dtype, "feature storage precision (f32|f64)");

  // train
  auto* train_cmd = app.add_subcommand("train", "train the two-branch model");
  std::string train_data, train_out, train_config, resume_path;
  TrainSettings train_settings;
  std::set<std::string> train_overridden;
  train_cmd->add_option("--data", train_data, "dataset directory")->required();
  train_cmd->add_option("--out", train_out, "output directory")->required();
  train_cmd->add_option("--config", train_config, "key = value config file");
  train_cmd->add_option("--resume", resume_path, "checkpoint to continue from");
  register_train_flags(train_cmd, train_settings, train_overridden);

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "evaluate retrieval on the test split");
  std::string eval_ckpt, eval_data, eval_out, eval_aa_mode = "joint";
  bool use_proxies = false;
  std::size_t eval_k = 3;
  eval_cmd->add_option("--checkpoint", eval_ckpt, "trained checkpoint")->required();
  eval_cmd->add_option("--data", eval_data, "dataset directory")->required();
  eval_cmd->add_option("--out", eval_out, "output directory")->required();
  eval_cmd->add_flag("--use-proxies", use_proxies,
                     "rank attention proxies instead of raw projections");
  eval_cmd->add_option("--k", eval_k, "neighbor count for proxy evaluation");
  eval_cmd->add_option("--aa-mode", eval_aa_mode, "proxy mode for --use-proxies (joint|literal)");

  // sweep-k
  auto* sweep_cmd = app.add_subcommand("sweep-k", "train across strategies and k values");
  std::string sweep_data, sweep_out, sweep_config;
  std::size_t k_max = 7;
  TrainSettings sweep_settings;
  std::set<std::string> sweep_overridden;
  sweep_cmd->add_option("--data", sweep_data, "dataset directory")->required();
  sweep_cmd->add_option("--out", sweep_out, "output directory")->required();
  sweep_cmd->add_option("--config", sweep_config, "key = value config file");
  sweep_cmd->add_option("--k-max", k_max, "largest neighbor count");
  register_train_flags(sweep_cmd, sweep_settings, sweep_overridden);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const ConfigError& e) {
    // Flag callbacks can reject values during parsing.
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }

  try {
    if (synth->parsed()) {
      return cmd_synth(synth_out, classes, per_class, audio_dim, visual_dim, separation, noise,
                       synth_seed, train_fraction, dtype);
    }
    if (train_cmd->parsed()) {
      if (!train_config.empty()) apply_config_file(train_settings, train_config, train_overridden);
      return cmd_train(train_data, train_out, train_settings, resume_path);
    }
    if (eval_cmd->parsed()) {
      return cmd_eval(eval_ckpt, eval_data, eval_out, use_proxies, eval_k, eval_aa_mode);
    }
    if (sweep_cmd->parsed()) {
      if (!sweep_config.empty()) apply_config_file(sweep_settings, sweep_config, sweep_overridden);
      return cmd_sweep_k(sweep_data, sweep_out, sweep_settings, k_max);
    }
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
