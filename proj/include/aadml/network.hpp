#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "aadml/tape.hpp"

namespace aadml {

struct NetConfig {
  std::string tag;            // "audio" or "visual"; prefixes parameter names
  std::size_t input_dim = 0;
  std::size_t hidden = 1024;
  std::size_t output_dim = 0;  // label-space dimension c
  double dropout = 0.1;
  std::uint64_t seed = 0;
};

// Three fully connected hidden layers (ReLU, dropout after each activation)
// plus a linear output layer into the label space.
class ProjectionNet {
 public:
  explicit ProjectionNet(const NetConfig& cfg);

  // [batch, input_dim] -> [batch, output_dim]. Train mode applies seeded
  // dropout after each hidden activation.
  Var forward(Tape& tape, Var input, bool train, std::uint64_t dropout_seed);

  // Tape-free eval path; pure function of (parameters, input).
  Tensor project(const Tensor& input) const;

  std::vector<Parameter*> parameters();
  const NetConfig& config() const { return cfg_; }

 private:
  struct Layer {
    Parameter weight;  // [in, out]
    Parameter bias;    // [out]
  };
  NetConfig cfg_;
  std::vector<Layer> layers_;  // 3 hidden + 1 output
};

}  // namespace aadml
