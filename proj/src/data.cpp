#include "aadml/data.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "aadml/error.hpp"
#include "aadml/rng.hpp"

namespace aadml {

namespace {

void write_u32(std::ostream& out, std::uint32_t v) {
  char b[4] = {static_cast<char>(v & 0xFF), static_cast<char>((v >> 8) & 0xFF),
               static_cast<char>((v >> 16) & 0xFF), static_cast<char>((v >> 24) & 0xFF)};
  out.write(b, 4);
}

std::uint32_t read_u32(std::istream& in, const std::string& path, const char* field) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) {
    throw IoError(path + ": truncated while reading " + field);
  }
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

void write_f32(std::ostream& out, float v) {
  std::uint32_t bits = std::bit_cast<std::uint32_t>(v);
  write_u32(out, bits);
}

void write_f64(std::ostream& out, double v) {
  std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
  write_u32(out, static_cast<std::uint32_t>(bits & 0xFFFFFFFFULL));
  write_u32(out, static_cast<std::uint32_t>(bits >> 32));
}

double read_value(std::istream& in, AvfDtype dtype, const std::string& path) {
  if (dtype == AvfDtype::kFloat32) {
    std::uint32_t bits = read_u32(in, path, "float32 value");
    return static_cast<double>(std::bit_cast<float>(bits));
  }
  std::uint64_t lo = read_u32(in, path, "float64 value");
  std::uint64_t hi = read_u32(in, path, "float64 value");
  return std::bit_cast<double>(lo | (hi << 32));
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(path + ": cannot open for writing");
  return out;
}

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path + ": cannot open for reading");
  return in;
}

bool sniff_magic(const std::string& path, const char* magic) {
  std::ifstream in(path, std::ios::binary);
  char got[4] = {};
  if (!in.read(got, 4)) return false;
  return std::memcmp(got, magic, 4) == 0;
}

std::vector<std::vector<double>> load_csv_features(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError(path + ": cannot open for reading");
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      try {
        std::size_t consumed = 0;
        double v = std::stod(cell, &consumed);
        while (consumed < cell.size() && std::isspace(static_cast<unsigned char>(cell[consumed])))
          ++consumed;
        if (consumed != cell.size()) throw std::invalid_argument(cell);
        row.push_back(v);
      } catch (const std::exception&) {
        throw IoError(path + ": row " + std::to_string(line_no - 1) + ": cannot parse '" + cell +
                      "' as a number");
      }
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace

Tensor Dataset::audio_matrix() const {
  Tensor out({size(), audio_dim()});
  for (std::size_t i = 0; i < size(); ++i)
    std::copy(pairs[i].audio.begin(), pairs[i].audio.end(), out.data.begin() + i * audio_dim());
  return out;
}

Tensor Dataset::visual_matrix() const {
  Tensor out({size(), visual_dim()});
  for (std::size_t i = 0; i < size(); ++i)
    std::copy(pairs[i].visual.begin(), pairs[i].visual.end(), out.data.begin() + i * visual_dim());
  return out;
}

Tensor Dataset::label_matrix() const {
  Tensor out({size(), category_count});
  for (std::size_t i = 0; i < size(); ++i)
    for (std::size_t j = 0; j < category_count; ++j)
      out.data[i * category_count + j] = static_cast<double>(pairs[i].label[j]);
  return out;
}

void Dataset::validate() const {
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const AVPair& p = pairs[i];
    if (p.audio.size() != audio_dim() || p.visual.size() != visual_dim()) {
      throw Error("dataset: sample " + std::to_string(i) + " has inconsistent feature dimensions");
    }
    if (p.label.size() != category_count) {
      throw Error("dataset: sample " + std::to_string(i) + " has label length " +
                  std::to_string(p.label.size()) + ", expected " + std::to_string(category_count));
    }
    bool any = false;
    for (std::uint8_t b : p.label) {
      if (b > 1) throw Error("dataset: sample " + std::to_string(i) + " has a non-binary label entry");
      any = any || b == 1;
    }
    if (!any) throw Error("dataset: sample " + std::to_string(i) + " has an all-zero label");
    for (double v : p.audio)
      if (!std::isfinite(v)) throw NumericError("dataset: sample " + std::to_string(i) + " has non-finite audio");
    for (double v : p.visual)
      if (!std::isfinite(v)) throw NumericError("dataset: sample " + std::to_string(i) + " has non-finite visual");
  }
}

LabelMatrix LabelMatrix::from(const Dataset& d) {
  LabelMatrix m;
  m.n = d.size();
  m.categories = d.category_count;
  m.bits.resize(m.n * m.categories);
  for (std::size_t i = 0; i < m.n; ++i)
    std::copy(d.pairs[i].label.begin(), d.pairs[i].label.end(), m.bits.begin() + i * m.categories);
  return m;
}

bool LabelMatrix::share_category(std::size_t i, std::size_t j) const {
  for (std::size_t k = 0; k < categories; ++k) {
    if (at(i, k) && at(j, k)) return true;
  }
  return false;
}

void write_avf(const std::string& path, const Tensor& rows, AvfDtype dtype) {
  if (rows.rank() != 2) throw ShapeError("write_avf: tensor of shape " + shape_str(rows.shape) + " is not a matrix");
  std::ofstream out = open_out(path);
  out.write("AVF1", 4);
  write_u32(out, static_cast<std::uint32_t>(rows.rows()));
  write_u32(out, static_cast<std::uint32_t>(rows.cols()));
  out.put(static_cast<char>(dtype));
  for (double v : rows.data) {
    if (dtype == AvfDtype::kFloat32) {
      write_f32(out, static_cast<float>(v));
    } else {
      write_f64(out, v);
    }
  }
  if (!out) throw IoError(path + ": write failed");
}

Tensor load_avf(const std::string& path) {
  std::ifstream in = open_in(path);
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, "AVF1", 4) != 0) {
    throw IoError(path + ": bad magic, expected \"AVF1\"");
  }
  const std::uint32_t n = read_u32(in, path, "row count");
  const std::uint32_t dim = read_u32(in, path, "dimension");
  int dtype_byte = in.get();
  if (dtype_byte != 0 && dtype_byte != 1) {
    throw IoError(path + ": unknown dtype byte " + std::to_string(dtype_byte));
  }
  const AvfDtype dtype = static_cast<AvfDtype>(dtype_byte);
  Tensor out({n, dim});
  for (std::uint32_t r = 0; r < n; ++r) {
    for (std::uint32_t c = 0; c < dim; ++c) {
      double v = read_value(in, dtype, path);
      if (!std::isfinite(v)) {
        throw IoError(path + ": row " + std::to_string(r) + ": non-finite value");
      }
      out.data[static_cast<std::size_t>(r) * dim + c] = v;
    }
  }
  return out;
}

void write_avl(const std::string& path, const LabelMatrix& labels) {
  std::ofstream out = open_out(path);
  out.write("AVL1", 4);
  write_u32(out, static_cast<std::uint32_t>(labels.n));
  write_u32(out, static_cast<std::uint32_t>(labels.categories));
  out.write(reinterpret_cast<const char*>(labels.bits.data()),
            static_cast<std::streamsize>(labels.bits.size()));
  if (!out) throw IoError(path + ": write failed");
}

LabelMatrix load_avl(const std::string& path) {
  std::ifstream in = open_in(path);
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, "AVL1", 4) != 0) {
    throw IoError(path + ": bad magic, expected \"AVL1\"");
  }
  LabelMatrix m;
  m.n = read_u32(in, path, "row count");
  m.categories = read_u32(in, path, "category count");
  m.bits.resize(m.n * m.categories);
  if (!in.read(reinterpret_cast<char*>(m.bits.data()), static_cast<std::streamsize>(m.bits.size()))) {
    throw IoError(path + ": truncated label payload");
  }
  for (std::size_t i = 0; i < m.bits.size(); ++i) {
    if (m.bits[i] > 1) {
      throw IoError(path + ": row " + std::to_string(i / std::max<std::size_t>(m.categories, 1)) +
                    ": label entry not in {0,1}");
    }
  }
  return m;
}

std::vector<std::vector<double>> load_features(const std::string& path, std::size_t expected_dim) {
  std::vector<std::vector<double>> rows;
  if (sniff_magic(path, "AVF1")) {
    Tensor t = load_avf(path);
    if (t.cols() != expected_dim) {
      throw IoError(path + ": dimension mismatch, file has " + std::to_string(t.cols()) +
                    ", expected " + std::to_string(expected_dim));
    }
    rows.resize(t.rows());
    for (std::size_t r = 0; r < t.rows(); ++r)
      rows[r].assign(t.data.begin() + r * t.cols(), t.data.begin() + (r + 1) * t.cols());
    return rows;
  }
  rows = load_csv_features(path);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != expected_dim) {
      throw IoError(path + ": row " + std::to_string(r) + ": dimension mismatch, got " +
                    std::to_string(rows[r].size()) + ", expected " + std::to_string(expected_dim));
    }
    for (double v : rows[r]) {
      if (!std::isfinite(v)) throw IoError(path + ": row " + std::to_string(r) + ": non-finite value");
    }
  }
  return rows;
}

LabelMatrix load_labels(const std::string& path) {
  if (sniff_magic(path, "AVL1")) return load_avl(path);
  auto rows = load_csv_features(path);
  LabelMatrix m;
  m.n = rows.size();
  m.categories = rows.empty() ? 0 : rows[0].size();
  m.bits.reserve(m.n * m.categories);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != m.categories) {
      throw IoError(path + ": row " + std::to_string(r) + ": ragged label row");
    }
    for (double v : rows[r]) {
      if (v != 0.0 && v != 1.0) {
        throw IoError(path + ": row " + std::to_string(r) + ": label entry not in {0,1}");
      }
      m.bits.push_back(static_cast<std::uint8_t>(v));
    }
  }
  return m;
}

Dataset synth_generate(const SynthConfig& cfg) {
  if (cfg.classes < 2) {
    // Degenerate but allowed; metric losses will see no negatives.
    if (cfg.classes == 0) throw Error("synth_generate: need at least one class");
  }
  if (cfg.per_class < 1) throw Error("synth_generate: per_class must be >= 1");
  if (cfg.class_separation <= 0.0) throw Error("synth_generate: class_separation must be > 0");
  if (cfg.noise_sigma < 0.0) throw Error("synth_generate: noise_sigma must be >= 0");

  Rng rng(mix_seed(cfg.seed, 0xDA7A5E7));

  // Centroids drawn on a sphere of radius class_separation; rejected until
  // every pairwise distance within a modality reaches class_separation.
  auto draw_centroids = [&](std::size_t dim) {
    std::vector<std::vector<double>> centroids;
    for (std::size_t c = 0; c < cfg.classes; ++c) {
      bool placed = false;
      for (int attempt = 0; attempt < 200 && !placed; ++attempt) {
        std::vector<double> cand(dim);
        double norm = 0.0;
        for (double& v : cand) {
          v = rng.normal();
          norm += v * v;
        }
        norm = std::sqrt(norm);
        if (norm == 0.0) continue;
        for (double& v : cand) v *= cfg.class_separation / norm;
        placed = true;
        for (const auto& prev : centroids) {
          double d2 = 0.0;
          for (std::size_t i = 0; i < dim; ++i) d2 += (cand[i] - prev[i]) * (cand[i] - prev[i]);
          if (std::sqrt(d2) < cfg.class_separation) {
            placed = false;
            break;
          }
        }
        if (placed) centroids.push_back(std::move(cand));
      }
      if (!placed) {
        throw Error("synth_generate: could not place " + std::to_string(cfg.classes) +
                    " centroids at separation " + std::to_string(cfg.class_separation) +
                    " after bounded retries");
      }
    }
    return centroids;
  };

  auto audio_centroids = draw_centroids(cfg.audio_dim);
  auto visual_centroids = draw_centroids(cfg.visual_dim);

  Dataset d;
  d.category_count = cfg.classes;
  d.provenance = "synthetic seed=" + std::to_string(cfg.seed);
  d.pairs.reserve(cfg.classes * cfg.per_class);
  for (std::size_t c = 0; c < cfg.classes; ++c) {
    for (std::size_t s = 0; s < cfg.per_class; ++s) {
      AVPair p;
      p.audio.resize(cfg.audio_dim);
      for (std::size_t i = 0; i < cfg.audio_dim; ++i)
        p.audio[i] = audio_centroids[c][i] + cfg.noise_sigma * rng.normal();
      p.visual.resize(cfg.visual_dim);
      for (std::size_t i = 0; i < cfg.visual_dim; ++i)
        p.visual[i] = visual_centroids[c][i] + cfg.noise_sigma * rng.normal();
      p.label.assign(cfg.classes, 0);
      p.label[c] = 1;
      d.pairs.push_back(std::move(p));
    }
  }
  d.validate();
  return d;
}

SplitDataset stratified_split(const Dataset& d, double train_fraction, std::uint64_t seed) {
  if (train_fraction <= 0.0 || train_fraction >= 1.0) {
    throw Error("stratified_split: train_fraction must be in (0, 1)");
  }
  // Group indices by first active category (synthetic data is one-hot).
  std::vector<std::vector<std::size_t>> by_class(d.category_count);
  for (std::size_t i = 0; i < d.size(); ++i) {
    for (std::size_t c = 0; c < d.category_count; ++c) {
      if (d.pairs[i].label[c]) {
        by_class[c].push_back(i);
        break;
      }
    }
  }
  Rng rng(mix_seed(seed, 0x5B117));
  SplitDataset out;
  out.train.category_count = out.test.category_count = d.category_count;
  out.train.split_tag = "train";
  out.test.split_tag = "test";
  out.train.provenance = out.test.provenance = d.provenance;
  for (auto& group : by_class) {
    rng.shuffle(group);
    const std::size_t n_train = static_cast<std::size_t>(
        std::llround(train_fraction * static_cast<double>(group.size())));
    std::vector<std::size_t> train_ids(group.begin(), group.begin() + n_train);
    std::vector<std::size_t> test_ids(group.begin() + n_train, group.end());
    std::sort(train_ids.begin(), train_ids.end());
    std::sort(test_ids.begin(), test_ids.end());
    for (std::size_t i : train_ids) {
      out.train.pairs.push_back(d.pairs[i]);
      out.train_indices.push_back(i);
    }
    for (std::size_t i : test_ids) {
      out.test.pairs.push_back(d.pairs[i]);
      out.test_indices.push_back(i);
    }
  }
  return out;
}

void write_dataset_dir(const std::string& dir, const Dataset& full, const SplitDataset& split,
                       AvfDtype dtype) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  write_avf(dir + "/audio.avf", full.audio_matrix(), dtype);
  write_avf(dir + "/visual.avf", full.visual_matrix(), dtype);
  write_avl(dir + "/labels.avl", LabelMatrix::from(full));

  std::ofstream manifest(dir + "/split.csv", std::ios::trunc);
  if (!manifest) throw IoError(dir + "/split.csv: cannot open for writing");
  manifest << "index,split\n";
  std::vector<const char*> tags(full.size(), nullptr);
  for (std::size_t i : split.train_indices) tags.at(i) = "train";
  for (std::size_t i : split.test_indices) tags.at(i) = "test";
  for (std::size_t i = 0; i < full.size(); ++i) {
    if (!tags[i]) throw Error("write_dataset_dir: split does not cover sample " + std::to_string(i));
    manifest << i << "," << tags[i] << "\n";
  }
  if (!manifest) throw IoError(dir + "/split.csv: write failed");
}

SplitDataset load_dataset_dir(const std::string& dir) {
  Tensor audio = load_avf(dir + "/audio.avf");
  Tensor visual = load_avf(dir + "/visual.avf");
  LabelMatrix labels = load_avl(dir + "/labels.avl");
  if (audio.rows() != visual.rows() || audio.rows() != labels.n) {
    throw IoError(dir + ": audio/visual/label row counts disagree (" + std::to_string(audio.rows()) +
                  "/" + std::to_string(visual.rows()) + "/" + std::to_string(labels.n) + ")");
  }

  std::ifstream manifest(dir + "/split.csv");
  if (!manifest) throw IoError(dir + "/split.csv: cannot open for reading");
  std::vector<std::string> tags(audio.rows());
  std::string line;
  std::getline(manifest, line);  // header
  while (std::getline(manifest, line)) {
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw IoError(dir + "/split.csv: malformed row '" + line + "'");
    const std::size_t idx = std::stoul(line.substr(0, comma));
    if (idx >= tags.size()) throw IoError(dir + "/split.csv: index " + std::to_string(idx) + " out of range");
    tags[idx] = line.substr(comma + 1);
  }

  SplitDataset out;
  out.train.category_count = out.test.category_count = labels.categories;
  out.train.split_tag = "train";
  out.test.split_tag = "test";
  out.train.provenance = out.test.provenance = dir;
  for (std::size_t i = 0; i < tags.size(); ++i) {
    AVPair p;
    p.audio.assign(audio.data.begin() + i * audio.cols(), audio.data.begin() + (i + 1) * audio.cols());
    p.visual.assign(visual.data.begin() + i * visual.cols(),
                    visual.data.begin() + (i + 1) * visual.cols());
    p.label.assign(labels.bits.begin() + i * labels.categories,
                   labels.bits.begin() + (i + 1) * labels.categories);
    if (tags[i] == "train") {
      out.train.pairs.push_back(std::move(p));
      out.train_indices.push_back(i);
    } else if (tags[i] == "test") {
      out.test.pairs.push_back(std::move(p));
      out.test_indices.push_back(i);
    } else {
      throw IoError(dir + "/split.csv: sample " + std::to_string(i) + " has unknown split '" +
                    tags[i] + "'");
    }
  }
  out.train.validate();
  out.test.validate();
  return out;
}

BatchPlan make_batches(std::size_t n, std::size_t batch_size, std::uint64_t seed,
                       std::size_t epoch) {
  if (n < 2) throw Error("make_batches: dataset of size " + std::to_string(n) + " is too small");
  if (batch_size < 2) throw Error("make_batches: batch size must be >= 2");

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(mix_seed(seed, mix_seed(0xBA7C4, epoch)));
  rng.shuffle(order);

  BatchPlan plan;
  plan.seed = seed;
  plan.batch_size = batch_size;
  for (std::size_t start = 0; start < n; start += batch_size) {
    const std::size_t end = std::min(n, start + batch_size);
    plan.batches.emplace_back(order.begin() + start, order.begin() + end);
  }
  if (plan.batches.size() > 1 && plan.batches.back().size() < 2) {
    auto tail = std::move(plan.batches.back());
    plan.batches.pop_back();
    auto& prev = plan.batches.back();
    prev.insert(prev.end(), tail.begin(), tail.end());
  }
  return plan;
}

}  // namespace aadml
