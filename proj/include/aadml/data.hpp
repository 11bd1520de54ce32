#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "aadml/tensor.hpp"

namespace aadml {

// One paired sample: two modality feature vectors sharing a multi-hot label.
struct AVPair {
  std::vector<double> audio;
  std::vector<double> visual;
  std::vector<std::uint8_t> label;
};

struct Dataset {
  std::vector<AVPair> pairs;
  std::size_t category_count = 0;
  std::string split_tag;    // "train", "test" or ""
  std::string provenance;   // synthetic seed or source files

  std::size_t size() const { return pairs.size(); }
  std::size_t audio_dim() const { return pairs.empty() ? 0 : pairs[0].audio.size(); }
  std::size_t visual_dim() const { return pairs.empty() ? 0 : pairs[0].visual.size(); }

  Tensor audio_matrix() const;
  Tensor visual_matrix() const;
  Tensor label_matrix() const;  // 0/1 doubles, [n, c]

  // Dimension agreement, finite features, non-empty binary labels.
  void validate() const;
};

// Binary label access shared by graph construction, mining and metrics.
struct LabelMatrix {
  std::size_t n = 0;
  std::size_t categories = 0;
  std::vector<std::uint8_t> bits;  // row-major [n, categories]

  static LabelMatrix from(const Dataset& d);
  std::uint8_t at(std::size_t i, std::size_t j) const { return bits[i * categories + j]; }
  bool share_category(std::size_t i, std::size_t j) const;
};

// --- feature / label files ---
//
// AVF (little-endian): magic "AVF1", u32 n, u32 dim, u8 dtype
// (0 = float32, 1 = float64), then n*dim values row-major.
// AVL (little-endian): magic "AVL1", u32 n, u32 c, then n*c bytes in {0,1}.
// CSV fallback: one sample per line, comma-separated decimals.

enum class AvfDtype : std::uint8_t { kFloat32 = 0, kFloat64 = 1 };

void write_avf(const std::string& path, const Tensor& rows, AvfDtype dtype);
Tensor load_avf(const std::string& path);

void write_avl(const std::string& path, const LabelMatrix& labels);
LabelMatrix load_avl(const std::string& path);

// Accepts AVF or CSV (sniffed by magic). Validates row width and finiteness.
std::vector<std::vector<double>> load_features(const std::string& path, std::size_t expected_dim);
LabelMatrix load_labels(const std::string& path);

// --- synthetic data ---

struct SynthConfig {
  std::size_t classes = 3;
  std::size_t per_class = 50;
  std::size_t audio_dim = 128;
  std::size_t visual_dim = 1024;
  double class_separation = 1.0;
  double noise_sigma = 0.1;
  std::uint64_t seed = 0;
};

// Per class: one audio and one visual centroid with pairwise centroid
// distance >= class_separation, samples = centroid + Gaussian noise,
// one-hot labels. Deterministic in the seed.
Dataset synth_generate(const SynthConfig& cfg);

struct SplitDataset {
  Dataset train;
  Dataset test;
  // Source indices into the dataset the split was taken from (when known).
  std::vector<std::size_t> train_indices;
  std::vector<std::size_t> test_indices;
};

SplitDataset stratified_split(const Dataset& d, double train_fraction, std::uint64_t seed);

// Dataset directory layout used by the CLI: audio.avf, visual.avf,
// labels.avl, split.csv (rows "index,train|test").
void write_dataset_dir(const std::string& dir, const Dataset& full, const SplitDataset& split,
                       AvfDtype dtype);
SplitDataset load_dataset_dir(const std::string& dir);

// --- batching ---

struct BatchPlan {
  std::uint64_t seed = 0;
  std::size_t batch_size = 0;
  std::vector<std::vector<std::size_t>> batches;
};

// Deterministic permutation keyed by (seed, epoch). A final short batch is
// kept if it has >= 2 indices, otherwise merged into the previous batch.
BatchPlan make_batches(std::size_t n, std::size_t batch_size, std::uint64_t seed,
                       std::size_t epoch);

}  // namespace aadml
