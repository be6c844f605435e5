#pragma once

// Reverse-mode differentiation over dense matrices. A Tape records one
// forward computation (one instance); backward() walks it in reverse and
// accumulates gradients into the Parameters it touched.

#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "kgan/tensor.hpp"

namespace kgan::nn {

struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;
  /// Rows that optimizers must leave untouched (e.g. the PAD embedding).
  std::vector<Eigen::Index> frozen_rows;

  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

class Tape;

class Var {
 public:
  Var() = default;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}

  Tape* tape() const { return tape_; }
  int id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }
  const Matrix& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }

 private:
  Tape* tape_ = nullptr;
  int id_ = -1;
};

class Tape {
 public:
  using Backward = std::function<void(Tape&, const Matrix& out_grad)>;

  Tape() { nodes_.reserve(256); }
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value);
  /// Constant that refers to `value` without copying; it must outlive the tape.
  Var constant_ref(const Matrix& value);
  /// Leaf bound to `p` (not copied); its gradient accumulates straight into
  /// p.grad. p.value must not change while the tape is alive.
  Var parameter(Parameter& p);

  /// Adds an op node. `backward` is only invoked when some input needs a
  /// gradient and the node received one.
  Var record(Matrix value, std::initializer_list<Var> inputs, Backward backward);

  /// Seeds d(loss)/d(loss) = 1 for a 1x1 node and runs the reverse sweep.
  void backward(Var loss);

  const Matrix& value(int id) const {
    const auto& n = nodes_[static_cast<std::size_t>(id)];
    return n.ref ? *n.ref : n.value;
  }
  /// Gradient received by a node during the last backward(); empty if none.
  const Matrix& grad(Var v) const { return nodes_[static_cast<std::size_t>(v.id())].grad; }
  bool requires_grad(int id) const { return nodes_[static_cast<std::size_t>(id)].requires_grad; }

  /// Adds `g` into the gradient of node `id` (or its Parameter).
  void accumulate(int id, const Matrix& g);
  /// Adds row k of `g` into row rows[k] of node `id`'s gradient.
  void accumulate_rows(int id, std::span<const int> rows, const Matrix& g);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    Backward backward;
    Parameter* param = nullptr;
    bool requires_grad = false;
    const Matrix* ref = nullptr;
  };
  Matrix& grad_slot(int id);

  std::vector<Node> nodes_;
};

// Elementwise and linear algebra ------------------------------------------------
Var matmul(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
/// a (r x c) + row (1 x c) broadcast over rows.
Var add_row(Var a, Var row);
Var hadamard(Var a, Var b);
Var scale(Var a, double s);
/// Elementwise product with a constant mask (dropout).
Var mask(Var a, const Matrix& m);
/// diag(w) * a for a constant column of weights.
Var scale_rows(Var a, const Vector& w);
/// c * a for a constant matrix c.
Var left_multiply(const Matrix& c, Var a);
Var transpose(Var a);

Var relu(Var a);
Var tanh(Var a);
Var sigmoid(Var a);
/// Natural log, with inputs floored at 1e-300.
Var log(Var a);

/// Row-wise softmax, computed in max-shifted form.
Var softmax_rows(Var a);

// Shape ---------------------------------------------------------------------------
Var concat_cols(std::span<const Var> parts);
Var concat_cols(std::initializer_list<Var> parts);
Var concat_rows(std::span<const Var> parts);
Var concat_rows(std::initializer_list<Var> parts);
Var slice_rows(Var a, Eigen::Index start, Eigen::Index count);
Var reverse_rows(Var a);
/// Mean over rows: (r x c) -> (1 x c).
Var mean_rows(Var a);
/// Sum over rows: (r x c) -> (1 x c).
Var sum_rows(Var a);
/// Row-major flatten to (1 x r*c).
Var flatten(Var a);
/// Rows `ids` of `table`, in order.
Var gather_rows(Var table, std::vector<int> ids);

// Composite -----------------------------------------------------------------------
/// One LSTM direction over the rows of x (T x D) with gate order i, f, g, o:
/// wx (D x 4H), wh (H x 4H), b (1 x 4H). Output row t is the hidden state at
/// token t; `reverse` scans from the last token to the first.
Var lstm(Var x, Var wx, Var wh, Var b, bool reverse);

/// -log softmax(logits)[gold] for a 1 x C row.
Var cross_entropy(Var logits, int gold);

// Optimization --------------------------------------------------------------------
struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Adam {
 public:
  explicit Adam(AdamOptions options) : opt_(options) {}
  void step(std::span<Parameter> params);
  long steps() const { return t_; }

 private:
  AdamOptions opt_;
  long t_ = 0;
  std::vector<Matrix> m_;
  std::vector<Matrix> v_;
};

double global_grad_norm(std::span<const Parameter> params);
/// Rescales all gradients so their global L2 norm is at most max_norm.
void clip_grad_norm(std::span<Parameter> params, double max_norm);

}  // namespace kgan::nn
