#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "aadml/tensor.hpp"

namespace aadml {

// Trainable tensor with a gradient accumulator of identical shape and a
// stable name used for optimizer state and checkpoint records.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;

  Parameter(std::string n, Tensor v) : name(std::move(n)), value(std::move(v)), grad(value.shape) {}

  void zero_grad() { std::fill(grad.data.begin(), grad.data.end(), 0.0); }
};

// Handle to a node on a Tape.
struct Var {
  std::uint32_t id = 0;
};

// Ordered record of executed differentiable operations. backward() replays
// them in exact reverse execution order and accumulates into the gradient
// of every Parameter leaf reachable from the output.
//
// Single-threaded per tape. One backward per tape unless reset() is called.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var leaf(Tensor value);
  Var param(Parameter& p);

  const Tensor& value(Var v) const;
  // Gradient of the last backward() output w.r.t. node v.
  const Tensor& grad(Var v) const;

  void backward(Var scalar_output);
  void reset();
  std::size_t size() const { return nodes_.size(); }

  // --- primitives ---
  Var matmul(Var a, Var b);
  Var transpose(Var a);
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);  // elementwise
  Var scale(Var a, double c);
  Var add_const(Var a, double c);
  Var add_row_vector(Var m, Var v);  // [r,c] + [c], broadcast over rows
  Var relu(Var a);                   // also the hinge clamp [.]_+
  Var softmax_rows(Var a);
  Var dropout(Var a, double rate, bool train, std::uint64_t seed);
  Var row_squared_distance(Var a, Var b);  // [m,d],[m,d] -> [m]
  Var frobenius_norm(Var a);               // -> scalar
  Var mean_rows(Var a);                    // [m,n] -> [n]
  Var concat_cols(std::span<const Var> parts);
  Var concat_rows(std::span<const Var> parts);
  Var gather_rows(Var a, std::vector<std::size_t> indices);
  Var sum_all(Var a);
  Var mean_all(Var a);
  Var dot(Var a, Var b);  // rank-1 . rank-1 -> scalar
  Var exp(Var a);
  Var log(Var a);
  Var sqrt(Var a);
  Var diag(Var a);                        // [n,n] -> [n]
  Var reshape(Var a, Shape shape);        // same numel, new shape
  Var broadcast_scalar(Var s, Shape shape);

 private:
  struct Node {
    Tensor value;
    std::function<void(Tape&)> backprop;  // empty for leaves
    Parameter* bound = nullptr;
  };

  Var push(Tensor value, std::function<void(Tape&)> backprop);
  Tensor& grad_buf(Var v) { return grads_[v.id]; }
  const Tensor& val(Var v) const { return nodes_[v.id].value; }
  void check_rank2(Var v, const char* op) const;

  std::vector<Node> nodes_;
  std::vector<Tensor> grads_;
  bool backward_run_ = false;
};

}  // namespace aadml
