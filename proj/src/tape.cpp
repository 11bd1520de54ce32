#include "aadml/tape.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

#include "aadml/error.hpp"
#include "aadml/rng.hpp"

namespace aadml {

namespace {

void ensure_finite(const Tensor& t, const char* op) {
  if (!t.all_finite()) {
    throw NumericError(std::string(op) + ": produced a non-finite value");
  }
}

void add_into(Tensor& acc, const Tensor& delta) {
  for (std::size_t i = 0; i < acc.data.size(); ++i) acc.data[i] += delta.data[i];
}

}  // namespace

Var Tape::push(Tensor value, std::function<void(Tape&)> backprop) {
  nodes_.push_back(Node{std::move(value), std::move(backprop), nullptr});
  return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Var Tape::leaf(Tensor value) { return push(std::move(value), {}); }

Var Tape::param(Parameter& p) {
  Var v = push(p.value, {});
  nodes_[v.id].bound = &p;
  return v;
}

const Tensor& Tape::value(Var v) const {
  if (v.id >= nodes_.size()) throw Error("tape: stale Var handle");
  return nodes_[v.id].value;
}

const Tensor& Tape::grad(Var v) const {
  if (!backward_run_) throw Error("tape: grad() before backward()");
  if (v.id >= grads_.size()) throw Error("tape: stale Var handle");
  return grads_[v.id];
}

void Tape::backward(Var out) {
  if (backward_run_) {
    throw Error("tape: backward called twice without reset()");
  }
  if (out.id >= nodes_.size()) throw Error("tape: stale Var handle");
  const Tensor& out_val = nodes_[out.id].value;
  if (out_val.numel() != 1) {
    throw ShapeError("backward: output of shape " + shape_str(out_val.shape) + " is not a scalar");
  }
  grads_.clear();
  grads_.reserve(nodes_.size());
  for (const Node& n : nodes_) grads_.emplace_back(n.value.shape);
  grads_[out.id].data[0] = 1.0;
  backward_run_ = true;

  for (std::size_t i = out.id + 1; i-- > 0;) {
    if (nodes_[i].backprop) nodes_[i].backprop(*this);
  }
  for (std::size_t i = 0; i <= out.id; ++i) {
    if (nodes_[i].bound) add_into(nodes_[i].bound->grad, grads_[i]);
  }
}

void Tape::reset() {
  nodes_.clear();
  grads_.clear();
  backward_run_ = false;
}

void Tape::check_rank2(Var v, const char* op) const {
  if (val(v).rank() != 2) {
    throw ShapeError(std::string(op) + ": tensor of shape " + shape_str(val(v).shape) +
                     " is not a matrix");
  }
}

Var Tape::matmul(Var a, Var b) {
  Tensor out = matmul_vals(val(a), val(b));
  ensure_finite(out, "matmul");
  return push(std::move(out), [a, b, self = nodes_.size()](Tape& t) {
    const Tensor& g = t.grads_[self];
    Tensor ga = matmul_vals(g, transpose_vals(t.val(b)));
    Tensor gb = matmul_vals(transpose_vals(t.val(a)), g);
    add_into(t.grad_buf(a), ga);
    add_into(t.grad_buf(b), gb);
  });
}

Var Tape::transpose(Var a) {
  Tensor out = transpose_vals(val(a));
  return push(std::move(out), [a, self = nodes_.size()](Tape& t) {
    add_into(t.grad_buf(a), transpose_vals(t.grads_[self]));
  });
}

Var Tape::add(Var a, Var b) {
  const Tensor& ta = val(a);
  const Tensor& tb = val(b);
  if (!ta.same_shape(tb)) {
    throw ShapeError("add: shapes " + shape_str(ta.shape) + " and " + shape_str(tb.shape) +
                     " differ");
  }
  Tensor out = ta;
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += tb.data[i];
  ensure_finite(out, "add");
  return push(std::move(out), [a, b, self = nodes_.size()](Tape& t) {
    add_into(t.grad_buf(a), t.grads_[self]);
    add_into(t.grad_buf(b), t.grads_[self]);
  });
}

Var Tape::sub(Var a, Var b) {
  const Tensor& ta = val(a);
  const Tensor& tb = val(b);
  if (!ta.same_shape(tb)) {
    throw ShapeError("sub: shapes " + shape_str(ta.shape) + " and " + shape_str(tb.shape) +
                     " differ");
  }
  Tensor out = ta;
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] -= tb.data[i];
  ensure_finite(out, "sub");
  return push(std::move(out), [a, b, self = nodes_.size()](Tape& t) {
    const Tensor& g = t.grads_[self];
    add_into(t.grad_buf(a), g);
    Tensor& gb = t.grad_buf(b);
    for (std::size_t i = 0; i < gb.data.size(); ++i) gb.data[i] -= g.data[i];
  });
}

Var Tape::mul(Var a, Var b) {
  const Tensor& ta = val(a);
  const Tensor& tb = val(b);
  if (!ta.same_shape(tb)) {
    throw ShapeError("mul: shapes " + shape_str(ta.shape) + " and " + shape_str(tb.shape) +
                     " differ");
  }
  Tensor out = ta;
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] *= tb.data[i];
  ensure_finite(out, "mul");
  return push(std::move(out), [a, b, self = nodes_.size()](Tape& t) {
    const Tensor& g = t.grads_[self];
    Tensor& ga = t.grad_buf(a);
    Tensor& gb = t.grad_buf(b);
    const Tensor& va = t.val(a);
    const Tensor& vb = t.val(b);
    for (std::size_t i = 0; i < g.data.size(); ++i) {
      ga.data[i] += g.data[i] * vb.data[i];
      gb.data[i] += g.data[i] * va.data[i];
    }
  });
}

Var Tape::scale(Var a, double c) {
  Tensor out = val(a);
  for (double& v : out.data) v *= c;
  ensure_finite(out, "scale");
  return push(std::move(out), [a, c, self = nodes_.size()](Tape& t) {
    const Tensor& g = t.grads_[self];
    Tensor& ga = t.grad_buf(a);
    for (std::size_t i = 0; i < ga.data.size(); ++i) ga.data[i] += c * g.data[i];
  });
}

Var Tape::add_const(Var a, double c) {
  Tensor out = val(a);
  for (double& v : out.data) v += c;
  ensure_finite(out, "add_const");
  return push(std::move(out), [a, self = nodes_.size()](Tape& t) {
    add_into(t.grad_buf(a), t.grads_[self]);
  });
}

Var Tape::add_row_vector(Var m, Var v) {
  check_rank2(m, "add_row_vector");
  const Tensor& tm = val(m);
  const Tensor& tv = val(v);
  if (tv.rank() != 1 || tv.shape[0] != tm.cols()) {
    throw ShapeError("add_row_vector: shapes " + shape_str(tm.shape) + " and " +
                     shape_str(tv.shape) + " do not broadcast");
  }
  Tensor out = tm;
  for (std::size_t r = 0; r < tm.rows(); ++r)
    for (std::size_t c = 0; c < tm.cols(); ++c) out.data[r * tm.cols() + c] += tv.data[c];
  ensure_finite(out, "add_row_vector");
  return push(std::move(out), [m, v, self = nodes_.size()](Tape& t) {
    const Tensor& g = t.grads_[self];
    add_into(t.grad_buf(m), g);
    Tensor& gv = t.grad_buf(v);
    const std::size_t cols = gv.data.size();
    for (std::size_t r = 0; r < g.data.size() / cols; ++r)
      for (std::size_t c = 0; c < cols; ++c) gv.data[c] += g.data[r * cols + c];
  });
}

Var Tape::relu(Var a) {
  Tensor out = val(a);
  for (double& v : out.data) v = v > 0.0 ? v : 0.0;
  ensure_finite(out, "relu");
  return push(std::move(out), [a, self = nodes_.size()](Tape& t) {
    const Tensor& g = t.grads_[self];
    const Tensor& va = t.val(a);
    Tensor& ga = t.grad_buf(a);
    for (std::size_t i = 0; i < g.data.size(); ++i) {
      if (va.data[i] > 0.0) ga.data[i] += g.data[i];
    }
  });
}

Var Tape::softmax_rows(Var a) {
  const Tensor& ta = val(a);
  if (ta.rank() != 1 && ta.rank() != 2) {
    throw ShapeError("softmax_rows: tensor of shape " + shape_str(ta.shape) +
                     " is neither a vector nor a matrix");
  }
  const std::size_t cols = ta.rank() == 2 ? ta.cols() : ta.shape[0];
  const std::size_t rows = ta.numel() / std::max<std::size_t>(cols, 1);
  if (cols == 0) throw ShapeError("softmax_rows: empty rows in shape " + shape_str(ta.shape));
  Tensor out = ta;
  // Max-subtraction keeps exp() in range for large logits.
  for (std::size_t r = 0; r < rows; ++r) {
    double* row = out.data.data() + r * cols;
    double mx = row[0];
    for (std::size_t c = 1; c < cols; ++c) mx = std::max(mx, row[c]);
    double sum = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      row[c] = std::exp(row[c] - mx);
      sum += row[c];
    }
    for (std::size_t c = 0; c < cols; ++c) row[c] /= sum;
  }
  ensure_finite(out, "softmax_rows");
  return push(std::move(out), [a, rows, cols, self = nodes_.size()](Tape& t) {
    const Tensor& g = t.grads_[self];
    const Tensor& y = t.nodes_[self].value;
    Tensor& ga = t.grad_buf(a);
    for (std::size_t r = 0; r < rows; ++r) {
      const double* yr = y.data.data() + r * cols;
      const double* gr = g.data.data() + r * cols;
      double dotgy = 0.0;
      for (std::size_t c = 0; c < cols; ++c) dotgy += gr[c] * yr[c];
      for (std::size_t c = 0; c < cols; ++c) ga.data[r * cols + c] += yr[c] * (gr[c] - dotgy);
    }
  });
}

Var Tape::dropout(Var a, double rate, bool train, std::uint64_t seed) {
  if (rate < 0.0 || rate >= 1.0) {
    throw Error("dropout: rate " + std::to_string(rate) + " outside [0, 1)");
  }
  // Eval mode (and rate 0) is the identity, bit for bit.
  if (!train || rate == 0.0) return a;
  const Tensor& ta = val(a);
  Rng rng(seed);
  auto mask = std::make_shared<std::vector<double>>(ta.numel());
  const double keep_scale = 1.0 / (1.0 - rate);  // inverted dropout
  Tensor out = ta;
  for (std::size_t i = 0; i < out.data.size(); ++i) {
    (*mask)[i] = rng.uniform() >= rate ? keep_scale : 0.0;
    out.data[i] *= (*mask)[i];
  }
  ensure_finite(out, "dropout");
  return push(std::move(out), [a, mask, self = nodes_.size()](Tape& t) {
    const Tensor& g = t.grads_[self];
    Tensor& ga = t.grad_buf(a);
    for (std::size_t i = 0; i < g.data.size(); ++i) ga.data[i] += g.data[i] * (*mask)[i];
  });
}

Var Tape::row_squared_distance(Var a, Var b) {
  check_rank2(a, "row_squared_distance");
  check_rank2(b, "row_squared_distance");
  const Tensor& ta = val(a);
  const Tensor& tb = val(b);
  if (!ta.same_shape(tb)) {
    throw ShapeError("row_squared_distance: shapes " + shape_str(ta.shape) + " and " +
                     shape_str(tb.shape) + " differ");
  }
  const std::size_t m = ta.rows(), d = ta.cols();
  Tensor out({m});
  for (std::size_t r = 0; r < m; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < d; ++c) {
      double diff = ta.data[r * d + c] - tb.data[r * d + c];
      s += diff * diff;
    }
    out.data[r] = s;
  }
  ensure_finite(out, "row_squared_distance");
  return push(std::move(out), [a, b, m, d, self = nodes_.size()](Tape& t) {
    const Tensor& g = t.grads_[self];
    const Tensor& va = t.val(a);
    const Tensor& vb = t.val(b);
    Tensor& ga = t.grad_buf(a);
    Tensor& gb = t.grad_buf(b);
    for (std::size_t r = 0; r < m; ++r) {
      for (std::size_t c = 0; c < d; ++c) {
        double delta = 2.0 * (va.data[r * d + c] - vb.data[r * d + c]) * g.data[r];
        ga.data[r * d + c] += delta;
        gb.data[r * d + c] -= delta;
      }
    }
  });
}

Var Tape::frobenius_norm(Var a) {
  const Tensor& ta = val(a);
  double ss = 0.0;
  for (double v : ta.data) ss += v * v;
  Tensor out = Tensor::scalar(std::sqrt(ss));
  ensure_finite(out, "frobenius_norm");
  return push(std::move(out), [a, self = nodes_.size()](Tape& t) {
    const double norm = t.nodes_[self].value.data[0];
    if (norm == 0.0) return;  // subgradient 0 at the origin
    const double g = t.grads_[self].data[0];
    const Tensor& va = t.val(a);
    Tensor& ga = t.grad_buf(a);
    for (std::size_t i = 0; i < ga.data.size(); ++i) ga.data[i] += g * va.data[i] / norm;
  });
}

Var Tape::mean_rows(Var a) {
  check_rank2(a, "mean_rows");
  const Tensor& ta = val(a);
  const std::size_t m = ta.rows(), n = ta.cols();
  if (m == 0) throw ShapeError("mean_rows: no rows in shape " + shape_str(ta.shape));
  Tensor out({n});
  for (std::size_t r = 0; r < m; ++r)
    for (std::size_t c = 0; c < n; ++c) out.data[c] += ta.data[r * n + c];
  for (double& v : out.data) v /= static_cast<double>(m);
  ensure_finite(out, "mean_rows");
  return push(std::move(out), [a, m, n, self = nodes_.size()](Tape& t) {
    const Tensor& g = t.grads_[self];
    Tensor& ga = t.grad_buf(a);
    for (std::size_t r = 0; r < m; ++r)
      for (std::size_t c = 0; c < n; ++c) ga.data[r * n + c] += g.data[c] / static_cast<double>(m);
  });
}

Var Tape::concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no operands");
  const std::size_t rows = val(parts[0]).rows();
  std::size_t total = 0;
  for (Var p : parts) {
    check_rank2(p, "concat_cols");
    if (val(p).rows() != rows) {
      throw ShapeError("concat_cols: shapes " + shape_str(val(parts[0]).shape) + " and " +
                       shape_str(val(p).shape) + " have different row counts");
    }
    total += val(p).cols();
  }
  Tensor out({rows, total});
  std::size_t off = 0;
  for (Var p : parts) {
    const Tensor& tp = val(p);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < tp.cols(); ++c) out.data[r * total + off + c] = tp.data[r * tp.cols() + c];
    off += tp.cols();
  }
  std::vector<Var> owned(parts.begin(), parts.end());
  return push(std::move(out), [owned, rows, total, self = nodes_.size()](Tape& t) {
    const Tensor& g = t.grads_[self];
    std::size_t off = 0;
    for (Var p : owned) {
      Tensor& gp = t.grad_buf(p);
      const std::size_t cols = t.val(p).cols();
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) gp.data[r * cols + c] += g.data[r * total + off + c];
      off += cols;
    }
  });
}

Var Tape::concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no operands");
  const std::size_t cols = val(parts[0]).cols();
  std::size_t total = 0;
  for (Var p : parts) {
    check_rank2(p, "concat_rows");
    if (val(p).cols() != cols) {
      throw ShapeError("concat_rows: shapes " + shape_str(val(parts[0]).shape) + " and " +
                       shape_str(val(p).shape) + " have different column counts");
    }
    total += val(p).rows();
  }
  Tensor out({total, cols});
  std::size_t off = 0;
  for (Var p : parts) {
    const Tensor& tp = val(p);
    std::copy(tp.data.begin(), tp.data.end(), out.data.begin() + off * cols);
    off += tp.rows();
  }
  std::vector<Var> owned(parts.begin(), parts.end());
  return push(std::move(out), [owned, cols, self = nodes_.size()](Tape& t) {
    const Tensor& g = t.grads_[self];
    std::size_t off = 0;
    for (Var p : owned) {
      Tensor& gp = t.grad_buf(p);
      const std::size_t rows = t.val(p).rows();
      for (std::size_t i = 0; i < rows * cols; ++i) gp.data[i] += g.data[off * cols + i];
      off += rows;
    }
  });
}

Var Tape::gather_rows(Var a, std::vector<std::size_t> indices) {
  check_rank2(a, "gather_rows");
  const Tensor& ta = val(a);
  const std::size_t cols = ta.cols();
  for (std::size_t i : indices) {
    if (i >= ta.rows()) {
      throw ShapeError("gather_rows: index " + std::to_string(i) + " out of range for shape " +
                       shape_str(ta.shape));
    }
  }
  Tensor out({indices.size(), cols});
  for (std::size_t r = 0; r < indices.size(); ++r)
    std::copy_n(ta.data.begin() + indices[r] * cols, cols, out.data.begin() + r * cols);
  return push(std::move(out),
              [a, idx = std::move(indices), cols, self = nodes_.size()](Tape& t) {
                const Tensor& g = t.grads_[self];
                Tensor& ga = t.grad_buf(a);
                for (std::size_t r = 0; r < idx.size(); ++r)
                  for (std::size_t c = 0; c < cols; ++c) ga.data[idx[r] * cols + c] += g.data[r * cols + c];
              });
}

Var Tape::sum_all(Var a) {
  const Tensor& ta = val(a);
  double s = 0.0;
  for (double v : ta.data) s += v;
  Tensor out = Tensor::scalar(s);
  ensure_finite(out, "sum_all");
  return push(std::move(out), [a, self = nodes_.size()](Tape& t) {
    const double g = t.grads_[self].data[0];
    Tensor& ga = t.grad_buf(a);
    for (double& v : ga.data) v += g;
  });
}

Var Tape::mean_all(Var a) {
  const Tensor& ta = val(a);
  if (ta.numel() == 0) throw ShapeError("mean_all: empty tensor of shape " + shape_str(ta.shape));
  double s = 0.0;
  for (double v : ta.data) s += v;
  Tensor out = Tensor::scalar(s / static_cast<double>(ta.numel()));
  ensure_finite(out, "mean_all");
  return push(std::move(out), [a, n = ta.numel(), self = nodes_.size()](Tape& t) {
    const double g = t.grads_[self].data[0] / static_cast<double>(n);
    Tensor& ga = t.grad_buf(a);
    for (double& v : ga.data) v += g;
  });
}

Var Tape::dot(Var a, Var b) {
  const Tensor& ta = val(a);
  const Tensor& tb = val(b);
  if (ta.rank() != 1 || tb.rank() != 1 || ta.shape[0] != tb.shape[0]) {
    throw ShapeError("dot: shapes " + shape_str(ta.shape) + " and " + shape_str(tb.shape) +
                     " do not conform");
  }
  double s = 0.0;
  for (std::size_t i = 0; i < ta.data.size(); ++i) s += ta.data[i] * tb.data[i];
  Tensor out = Tensor::scalar(s);
  ensure_finite(out, "dot");
  return push(std::move(out), [a, b, self = nodes_.size()](Tape& t) {
    const double g = t.grads_[self].data[0];
    const Tensor& va = t.val(a);
    const Tensor& vb = t.val(b);
    Tensor& ga = t.grad_buf(a);
    Tensor& gb = t.grad_buf(b);
    for (std::size_t i = 0; i < ga.data.size(); ++i) {
      ga.data[i] += g * vb.data[i];
      gb.data[i] += g * va.data[i];
    }
  });
}

Var Tape::exp(Var a) {
  Tensor out = val(a);
  for (double& v : out.data) v = std::exp(v);
  ensure_finite(out, "exp");
  return push(std::move(out), [a, self = nodes_.size()](Tape& t) {
    const Tensor& g = t.grads_[self];
    const Tensor& y = t.nodes_[self].value;
    Tensor& ga = t.grad_buf(a);
    for (std::size_t i = 0; i < ga.data.size(); ++i) ga.data[i] += g.data[i] * y.data[i];
  });
}

Var Tape::log(Var a) {
  Tensor out = val(a);
  for (double& v : out.data) v = std::log(v);
  ensure_finite(out, "log");
  return push(std::move(out), [a, self = nodes_.size()](Tape& t) {
    const Tensor& g = t.grads_[self];
    const Tensor& va = t.val(a);
    Tensor& ga = t.grad_buf(a);
    for (std::size_t i = 0; i < ga.data.size(); ++i) ga.data[i] += g.data[i] / va.data[i];
  });
}

Var Tape::sqrt(Var a) {
  Tensor out = val(a);
  for (double& v : out.data) v = std::sqrt(v);
  ensure_finite(out, "sqrt");
  return push(std::move(out), [a, self = nodes_.size()](Tape& t) {
    const Tensor& g = t.grads_[self];
    const Tensor& y = t.nodes_[self].value;
    Tensor& ga = t.grad_buf(a);
    for (std::size_t i = 0; i < ga.data.size(); ++i) {
      if (y.data[i] > 0.0) ga.data[i] += g.data[i] / (2.0 * y.data[i]);
    }
  });
}

Var Tape::reshape(Var a, Shape shape) {
  const Tensor& ta = val(a);
  if (shape_numel(shape) != ta.numel()) {
    throw ShapeError("reshape: shape " + shape_str(ta.shape) + " cannot become " +
                     shape_str(shape));
  }
  Tensor out(std::move(shape), ta.data);
  return push(std::move(out), [a, self = nodes_.size()](Tape& t) {
    const Tensor& g = t.grads_[self];
    Tensor& ga = t.grad_buf(a);
    for (std::size_t i = 0; i < ga.data.size(); ++i) ga.data[i] += g.data[i];
  });
}

Var Tape::broadcast_scalar(Var s, Shape shape) {
  const Tensor& ts = val(s);
  if (ts.numel() != 1) {
    throw ShapeError("broadcast_scalar: tensor of shape " + shape_str(ts.shape) +
                     " is not a scalar");
  }
  Tensor out = Tensor::full(std::move(shape), ts.data[0]);
  return push(std::move(out), [s, self = nodes_.size()](Tape& t) {
    const Tensor& g = t.grads_[self];
    double sum = 0.0;
    for (double v : g.data) sum += v;
    t.grad_buf(s).data[0] += sum;
  });
}

Var Tape::diag(Var a) {
  check_rank2(a, "diag");
  const Tensor& ta = val(a);
  if (ta.rows() != ta.cols()) {
    throw ShapeError("diag: tensor of shape " + shape_str(ta.shape) + " is not square");
  }
  const std::size_t n = ta.rows();
  Tensor out({n});
  for (std::size_t i = 0; i < n; ++i) out.data[i] = ta.data[i * n + i];
  return push(std::move(out), [a, n, self = nodes_.size()](Tape& t) {
    const Tensor& g = t.grads_[self];
    Tensor& ga = t.grad_buf(a);
    for (std::size_t i = 0; i < n; ++i) ga.data[i * n + i] += g.data[i];
  });
}

}  // namespace aadml
