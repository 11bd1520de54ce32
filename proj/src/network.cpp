#include "aadml/network.hpp"

#include <cmath>

#include "aadml/error.hpp"
#include "aadml/rng.hpp"

namespace aadml {

namespace {

Tensor glorot_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  Tensor t({fan_in, fan_out});
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  for (double& v : t.data) v = rng.uniform(-limit, limit);
  return t;
}

}  // namespace

ProjectionNet::ProjectionNet(const NetConfig& cfg) : cfg_(cfg) {
  if (cfg.input_dim == 0 || cfg.hidden == 0 || cfg.output_dim == 0) {
    throw ConfigError("projection net '" + cfg.tag + "': zero layer width");
  }
  Rng rng(mix_seed(cfg.seed, cfg.tag == "audio" ? 0xA0D10 : 0x715AA1));
  const std::size_t widths[5] = {cfg.input_dim, cfg.hidden, cfg.hidden, cfg.hidden, cfg.output_dim};
  for (std::size_t l = 0; l < 4; ++l) {
    const std::string p = cfg.tag + ".fc" + std::to_string(l);
    Tensor weight = glorot_uniform(widths[l], widths[l + 1], rng);
    // Bias off zero keeps pre-activations clear of the ReLU kink.
    Tensor bias({widths[l + 1]});
    const double limit = 1.0 / std::sqrt(static_cast<double>(widths[l]));
    for (double& v : bias.data) v = rng.uniform(-limit, limit);
    layers_.push_back(
        Layer{Parameter(p + ".weight", std::move(weight)), Parameter(p + ".bias", std::move(bias))});
  }
}

Var ProjectionNet::forward(Tape& tape, Var input, bool train, std::uint64_t dropout_seed) {
  const Tensor& in = tape.value(input);
  if (in.rank() != 2 || in.cols() != cfg_.input_dim) {
    throw ShapeError("net '" + cfg_.tag + "': input of shape " + shape_str(in.shape) +
                     " does not match input_dim " + std::to_string(cfg_.input_dim));
  }
  Var x = input;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    x = tape.matmul(x, tape.param(layers_[l].weight));
    x = tape.add_row_vector(x, tape.param(layers_[l].bias));
    if (l + 1 < layers_.size()) {
      x = tape.relu(x);
      x = tape.dropout(x, cfg_.dropout, train, mix_seed(dropout_seed, l));
    }
  }
  return x;
}

Tensor ProjectionNet::project(const Tensor& input) const {
  if (input.rank() != 2 || input.cols() != cfg_.input_dim) {
    throw ShapeError("net '" + cfg_.tag + "': input of shape " + shape_str(input.shape) +
                     " does not match input_dim " + std::to_string(cfg_.input_dim));
  }
  Tensor x = input;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    x = matmul_vals(x, layers_[l].weight.value);
    const Tensor& bias = layers_[l].bias.value;
    for (std::size_t r = 0; r < x.rows(); ++r)
      for (std::size_t c = 0; c < x.cols(); ++c) x.at(r, c) += bias.data[c];
    if (l + 1 < layers_.size()) {
      for (double& v : x.data) v = v > 0.0 ? v : 0.0;
    }
  }
  if (!x.all_finite()) throw NumericError("net '" + cfg_.tag + "': non-finite projection");
  return x;
}

std::vector<Parameter*> ProjectionNet::parameters() {
  std::vector<Parameter*> out;
  for (Layer& l : layers_) {
    out.push_back(&l.weight);
    out.push_back(&l.bias);
  }
  return out;
}

}  // namespace aadml
