#include "kgan/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace kgan::nn {

const Matrix& Var::value() const { return tape_->value(id_); }

Var Tape::constant(Matrix value) {
  nodes_.push_back(Node{std::move(value), {}, {}, nullptr, false, nullptr});
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::constant_ref(const Matrix& value) {
  nodes_.push_back(Node{Matrix(), {}, {}, nullptr, false, &value});
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::parameter(Parameter& p) {
  if (p.grad.rows() != p.value.rows() || p.grad.cols() != p.value.cols()) p.zero_grad();
  nodes_.push_back(Node{Matrix(), {}, {}, &p, true, &p.value});
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::record(Matrix value, std::initializer_list<Var> inputs, Backward backward) {
  bool needs = false;
  for (const auto& v : inputs) needs = needs || requires_grad(v.id());
  nodes_.push_back(
      Node{std::move(value), {}, needs ? std::move(backward) : Backward{}, nullptr, needs, nullptr});
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Matrix& Tape::grad_slot(int id) {
  auto& n = nodes_[static_cast<std::size_t>(id)];
  if (n.param) return n.param->grad;
  if (n.grad.size() == 0) n.grad.setZero(value(id).rows(), value(id).cols());
  return n.grad;
}

void Tape::accumulate(int id, const Matrix& g) {
  if (!requires_grad(id)) return;
  grad_slot(id) += g;
}

void Tape::accumulate_rows(int id, std::span<const int> rows, const Matrix& g) {
  if (!requires_grad(id)) return;
  auto& slot = grad_slot(id);
  for (std::size_t k = 0; k < rows.size(); ++k) slot.row(rows[k]) += g.row(static_cast<Eigen::Index>(k));
}

void Tape::backward(Var loss) {
  auto& root = nodes_[static_cast<std::size_t>(loss.id())];
  if (value(loss.id()).size() != 1) throw std::logic_error("backward() needs a scalar loss");
  if (!root.requires_grad) return;
  grad_slot(loss.id()) += Matrix::Ones(1, 1);
  for (int id = loss.id(); id >= 0; --id) {
    auto& n = nodes_[static_cast<std::size_t>(id)];
    if (!n.backward || n.grad.size() == 0) continue;
    n.backward(*this, n.grad);
  }
}

// ---------------------------------------------------------------------------

namespace {

Tape& tape_of(Var a) { return *a.tape(); }

}  // namespace

Var matmul(Var a, Var b) {
  Matrix out = a.value() * b.value();
  const int ia = a.id(), ib = b.id();
  return tape_of(a).record(std::move(out), {a, b}, [ia, ib](Tape& t, const Matrix& g) {
    if (t.requires_grad(ia)) t.accumulate(ia, g * t.value(ib).transpose());
    if (t.requires_grad(ib)) t.accumulate(ib, t.value(ia).transpose() * g);
  });
}

Var add(Var a, Var b) {
  Matrix out = a.value() + b.value();
  const int ia = a.id(), ib = b.id();
  return tape_of(a).record(std::move(out), {a, b}, [ia, ib](Tape& t, const Matrix& g) {
    t.accumulate(ia, g);
    t.accumulate(ib, g);
  });
}

Var sub(Var a, Var b) {
  Matrix out = a.value() - b.value();
  const int ia = a.id(), ib = b.id();
  return tape_of(a).record(std::move(out), {a, b}, [ia, ib](Tape& t, const Matrix& g) {
    t.accumulate(ia, g);
    if (t.requires_grad(ib)) t.accumulate(ib, -g);
  });
}

Var add_row(Var a, Var row) {
  if (row.rows() != 1 || row.cols() != a.cols())
    throw std::invalid_argument("add_row: shape mismatch");
  Matrix out = a.value().rowwise() + row.value().row(0);
  const int ia = a.id(), ir = row.id();
  return tape_of(a).record(std::move(out), {a, row}, [ia, ir](Tape& t, const Matrix& g) {
    t.accumulate(ia, g);
    if (t.requires_grad(ir)) t.accumulate(ir, g.colwise().sum());
  });
}

Var hadamard(Var a, Var b) {
  Matrix out = a.value().cwiseProduct(b.value());
  const int ia = a.id(), ib = b.id();
  return tape_of(a).record(std::move(out), {a, b}, [ia, ib](Tape& t, const Matrix& g) {
    if (t.requires_grad(ia)) t.accumulate(ia, g.cwiseProduct(t.value(ib)));
    if (t.requires_grad(ib)) t.accumulate(ib, g.cwiseProduct(t.value(ia)));
  });
}

Var scale(Var a, double s) {
  Matrix out = a.value() * s;
  const int ia = a.id();
  return tape_of(a).record(std::move(out), {a}, [ia, s](Tape& t, const Matrix& g) {
    t.accumulate(ia, g * s);
  });
}

Var mask(Var a, const Matrix& m) {
  Matrix out = a.value().cwiseProduct(m);
  const int ia = a.id();
  return tape_of(a).record(std::move(out), {a}, [ia, m](Tape& t, const Matrix& g) {
    t.accumulate(ia, g.cwiseProduct(m));
  });
}

Var scale_rows(Var a, const Vector& w) {
  Matrix out = w.asDiagonal() * a.value();
  const int ia = a.id();
  return tape_of(a).record(std::move(out), {a}, [ia, w](Tape& t, const Matrix& g) {
    t.accumulate(ia, w.asDiagonal() * g);
  });
}

Var left_multiply(const Matrix& c, Var a) {
  Matrix out = c * a.value();
  const int ia = a.id();
  return tape_of(a).record(std::move(out), {a}, [ia, c](Tape& t, const Matrix& g) {
    t.accumulate(ia, c.transpose() * g);
  });
}

Var transpose(Var a) {
  Matrix out = a.value().transpose();
  const int ia = a.id();
  return tape_of(a).record(std::move(out), {a}, [ia](Tape& t, const Matrix& g) {
    t.accumulate(ia, g.transpose());
  });
}

Var relu(Var a) {
  Matrix out = a.value().cwiseMax(0.0);
  const int ia = a.id();
  const int self = static_cast<int>(tape_of(a).size());
  return tape_of(a).record(std::move(out), {a}, [ia, self](Tape& t, const Matrix& g) {
    const auto& y = t.value(self);
    t.accumulate(ia, (y.array() > 0.0).cast<double>().matrix().cwiseProduct(g));
  });
}

Var tanh(Var a) {
  Matrix out = a.value().array().tanh().matrix();
  const int ia = a.id();
  const int self = static_cast<int>(tape_of(a).size());
  return tape_of(a).record(std::move(out), {a}, [ia, self](Tape& t, const Matrix& g) {
    const auto& y = t.value(self);
    t.accumulate(ia, (1.0 - y.array().square()).matrix().cwiseProduct(g));
  });
}

Var sigmoid(Var a) {
  Matrix out = (1.0 / (1.0 + (-a.value().array()).exp())).matrix();
  const int ia = a.id();
  const int self = static_cast<int>(tape_of(a).size());
  return tape_of(a).record(std::move(out), {a}, [ia, self](Tape& t, const Matrix& g) {
    const auto& y = t.value(self);
    t.accumulate(ia, (y.array() * (1.0 - y.array())).matrix().cwiseProduct(g));
  });
}

Var log(Var a) {
  Matrix x = a.value().cwiseMax(1e-300);
  Matrix out = x.array().log().matrix();
  const int ia = a.id();
  return tape_of(a).record(std::move(out), {a}, [ia, x](Tape& t, const Matrix& g) {
    t.accumulate(ia, g.cwiseQuotient(x));
  });
}

Var softmax_rows(Var a) {
  const auto& x = a.value();
  Matrix out(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const RowVector e = (x.row(i).array() - x.row(i).maxCoeff()).exp().matrix();
    out.row(i) = e / e.sum();
  }
  const int ia = a.id();
  const int self = static_cast<int>(tape_of(a).size());
  return tape_of(a).record(std::move(out), {a}, [ia, self](Tape& t, const Matrix& g) {
    const auto& y = t.value(self);
    const Vector dots = y.cwiseProduct(g).rowwise().sum();
    t.accumulate(ia, y.cwiseProduct(g - dots.replicate(1, g.cols())));
  });
}

// ---------------------------------------------------------------------------

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: no inputs");
  const auto rows = parts[0].rows();
  Eigen::Index cols = 0;
  for (const auto& p : parts) {
    if (p.rows() != rows) throw std::invalid_argument("concat_cols: row mismatch");
    cols += p.cols();
  }
  Matrix out(rows, cols);
  std::vector<int> ids;
  std::vector<Eigen::Index> widths;
  Eigen::Index off = 0;
  for (const auto& p : parts) {
    out.middleCols(off, p.cols()) = p.value();
    off += p.cols();
    ids.push_back(p.id());
    widths.push_back(p.cols());
  }
  Tape& tape = tape_of(parts[0]);
  auto bw = [ids, widths](Tape& t, const Matrix& g) {
    Eigen::Index o = 0;
    for (std::size_t k = 0; k < ids.size(); ++k) {
      if (t.requires_grad(ids[k])) t.accumulate(ids[k], g.middleCols(o, widths[k]));
      o += widths[k];
    }
  };
  // record() only needs one input that requires a gradient, if any does.
  Var any = parts[0];
  for (const auto& p : parts)
    if (tape.requires_grad(p.id())) any = p;
  return tape.record(std::move(out), {any}, std::move(bw));
}

Var concat_cols(std::initializer_list<Var> parts) {
  return concat_cols(std::span<const Var>(parts.begin(), parts.size()));
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_rows: no inputs");
  const auto cols = parts[0].cols();
  Eigen::Index rows = 0;
  for (const auto& p : parts) {
    if (p.cols() != cols) throw std::invalid_argument("concat_rows: column mismatch");
    rows += p.rows();
  }
  Matrix out(rows, cols);
  std::vector<int> ids;
  std::vector<Eigen::Index> heights;
  Eigen::Index off = 0;
  for (const auto& p : parts) {
    out.middleRows(off, p.rows()) = p.value();
    off += p.rows();
    ids.push_back(p.id());
    heights.push_back(p.rows());
  }
  Tape& tape = tape_of(parts[0]);
  Var any = parts[0];
  for (const auto& p : parts)
    if (tape.requires_grad(p.id())) any = p;
  return tape.record(std::move(out), {any}, [ids, heights](Tape& t, const Matrix& g) {
    Eigen::Index o = 0;
    for (std::size_t k = 0; k < ids.size(); ++k) {
      if (t.requires_grad(ids[k])) t.accumulate(ids[k], g.middleRows(o, heights[k]));
      o += heights[k];
    }
  });
}

Var concat_rows(std::initializer_list<Var> parts) {
  return concat_rows(std::span<const Var>(parts.begin(), parts.size()));
}

Var slice_rows(Var a, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > a.rows())
    throw std::invalid_argument("slice_rows: out of range");
  Matrix out = a.value().middleRows(start, count);
  const int ia = a.id();
  return tape_of(a).record(std::move(out), {a}, [ia, start, count](Tape& t, const Matrix& g) {
    Matrix full = Matrix::Zero(t.value(ia).rows(), t.value(ia).cols());
    full.middleRows(start, count) = g;
    t.accumulate(ia, full);
  });
}

Var reverse_rows(Var a) {
  Matrix out = a.value().colwise().reverse();
  const int ia = a.id();
  return tape_of(a).record(std::move(out), {a}, [ia](Tape& t, const Matrix& g) {
    t.accumulate(ia, g.colwise().reverse());
  });
}

Var mean_rows(Var a) {
  const auto n = static_cast<double>(a.rows());
  Matrix out = a.value().colwise().mean();
  const int ia = a.id();
  const auto rows = a.rows();
  return tape_of(a).record(std::move(out), {a}, [ia, n, rows](Tape& t, const Matrix& g) {
    t.accumulate(ia, g.replicate(rows, 1) / n);
  });
}

Var sum_rows(Var a) {
  Matrix out = a.value().colwise().sum();
  const int ia = a.id();
  const auto rows = a.rows();
  return tape_of(a).record(std::move(out), {a}, [ia, rows](Tape& t, const Matrix& g) {
    t.accumulate(ia, g.replicate(rows, 1));
  });
}

Var flatten(Var a) {
  const auto r = a.rows(), c = a.cols();
  Matrix out(1, r * c);
  for (Eigen::Index i = 0; i < r; ++i) out.block(0, i * c, 1, c) = a.value().row(i);
  const int ia = a.id();
  return tape_of(a).record(std::move(out), {a}, [ia, r, c](Tape& t, const Matrix& g) {
    Matrix back(r, c);
    for (Eigen::Index i = 0; i < r; ++i) back.row(i) = g.block(0, i * c, 1, c);
    t.accumulate(ia, back);
  });
}

Var gather_rows(Var table, std::vector<int> ids) {
  const auto& v = table.value();
  Matrix out(static_cast<Eigen::Index>(ids.size()), v.cols());
  for (std::size_t k = 0; k < ids.size(); ++k) {
    if (ids[k] < 0 || ids[k] >= v.rows()) throw std::out_of_range("gather_rows: bad row id");
    out.row(static_cast<Eigen::Index>(k)) = v.row(ids[k]);
  }
  const int it = table.id();
  return tape_of(table).record(std::move(out), {table},
                               [it, ids = std::move(ids)](Tape& t, const Matrix& g) {
                                 t.accumulate_rows(it, ids, g);
                               });
}

// ---------------------------------------------------------------------------

Var lstm(Var x, Var wx, Var wh, Var b, bool reverse) {
  const Matrix& X = x.value();
  const Matrix& Wx = wx.value();
  const Matrix& Wh = wh.value();
  const auto T = X.rows();
  const auto H = Wh.rows();
  if (Wx.rows() != X.cols() || Wx.cols() != 4 * H || Wh.cols() != 4 * H || b.value().cols() != 4 * H)
    throw std::invalid_argument("lstm: weight shapes do not match input");

  Matrix pre = (X * Wx).rowwise() + b.value().row(0);
  Matrix gates(T, 4 * H);  // activated i, f, g, o
  Matrix C(T, H), Hs(T, H);
  RowVector h = RowVector::Zero(H), c = RowVector::Zero(H);
  for (Eigen::Index s = 0; s < T; ++s) {
    const auto t = reverse ? T - 1 - s : s;
    RowVector z = pre.row(t) + h * Wh;
    auto sig = [](const auto& v) { return (1.0 / (1.0 + (-v.array()).exp())).matrix(); };
    gates.block(t, 0, 1, H) = sig(z.segment(0, H));
    gates.block(t, H, 1, H) = sig(z.segment(H, H));
    gates.block(t, 2 * H, 1, H) = z.segment(2 * H, H).array().tanh().matrix();
    gates.block(t, 3 * H, 1, H) = sig(z.segment(3 * H, H));
    c = gates.block(t, H, 1, H).cwiseProduct(c) +
        gates.block(t, 0, 1, H).cwiseProduct(gates.block(t, 2 * H, 1, H));
    h = gates.block(t, 3 * H, 1, H).cwiseProduct(c.array().tanh().matrix());
    C.row(t) = c;
    Hs.row(t) = h;
  }

  const int ix = x.id(), iwx = wx.id(), iwh = wh.id(), ib = b.id();
  Matrix out = Hs;
  return tape_of(x).record(
      std::move(out), {x, wx, wh, b},
      [=, gates = std::move(gates), C = std::move(C), Hs = std::move(Hs)](Tape& tp,
                                                                         const Matrix& dH) {
        const Matrix& Xv = tp.value(ix);
        const Matrix& Wxv = tp.value(iwx);
        const Matrix& Whv = tp.value(iwh);
        Matrix dZ(T, 4 * H);
        Matrix Hprev = Matrix::Zero(T, H);
        RowVector dh_next = RowVector::Zero(H), dc_next = RowVector::Zero(H);
        for (Eigen::Index s = T - 1; s >= 0; --s) {
          const auto t = reverse ? T - 1 - s : s;
          const bool first = s == 0;
          const auto tp_prev = reverse ? t + 1 : t - 1;
          const RowVector c_prev = first ? RowVector::Zero(H) : RowVector(C.row(tp_prev));
          if (!first) Hprev.row(t) = Hs.row(tp_prev);
          const auto i = gates.block(t, 0, 1, H).array();
          const auto f = gates.block(t, H, 1, H).array();
          const auto g = gates.block(t, 2 * H, 1, H).array();
          const auto o = gates.block(t, 3 * H, 1, H).array();
          const Eigen::ArrayXXd tc = C.row(t).array().tanh();
          const Eigen::ArrayXXd dh = (dH.row(t) + dh_next).array();
          const Eigen::ArrayXXd dc = dc_next.array() + dh * o * (1.0 - tc.square());
          dZ.block(t, 0, 1, H) = (dc * g * i * (1.0 - i)).matrix();
          dZ.block(t, H, 1, H) = (dc * c_prev.array() * f * (1.0 - f)).matrix();
          dZ.block(t, 2 * H, 1, H) = (dc * i * (1.0 - g.square())).matrix();
          dZ.block(t, 3 * H, 1, H) = (dh * tc * o * (1.0 - o)).matrix();
          dc_next = (dc * f).matrix();
          dh_next = dZ.row(t) * Whv.transpose();
        }
        if (tp.requires_grad(ix)) tp.accumulate(ix, dZ * Wxv.transpose());
        if (tp.requires_grad(iwx)) tp.accumulate(iwx, Xv.transpose() * dZ);
        if (tp.requires_grad(iwh)) tp.accumulate(iwh, Hprev.transpose() * dZ);
        if (tp.requires_grad(ib)) tp.accumulate(ib, dZ.colwise().sum());
      });
}

Var cross_entropy(Var logits, int gold) {
  const RowVector z = logits.value().row(0);
  if (gold < 0 || gold >= z.size()) throw std::out_of_range("cross_entropy: gold class");
  const double mx = z.maxCoeff();
  const RowVector e = (z.array() - mx).exp().matrix();
  const double lse = mx + std::log(e.sum());
  Matrix out(1, 1);
  out(0, 0) = lse - z(gold);
  const RowVector p = e / e.sum();
  const int il = logits.id();
  return tape_of(logits).record(std::move(out), {logits}, [il, p, gold](Tape& t, const Matrix& g) {
    Matrix d = p;
    d(0, gold) -= 1.0;
    t.accumulate(il, d * g(0, 0));
  });
}

// ---------------------------------------------------------------------------

void Adam::step(std::span<Parameter> params) {
  if (m_.empty()) {
    for (const auto& p : params) {
      m_.push_back(Matrix::Zero(p.value.rows(), p.value.cols()));
      v_.push_back(Matrix::Zero(p.value.rows(), p.value.cols()));
    }
  }
  ++t_;
  const double bc1 = 1.0 - std::pow(opt_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(opt_.beta2, static_cast<double>(t_));
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& p = params[k];
    if (p.grad.size() == 0) continue;
    for (auto r : p.frozen_rows) p.grad.row(r).setZero();
    m_[k] = opt_.beta1 * m_[k] + (1.0 - opt_.beta1) * p.grad;
    v_[k] = opt_.beta2 * v_[k] + (1.0 - opt_.beta2) * p.grad.cwiseAbs2();
    const Matrix update =
        opt_.lr * ((m_[k] / bc1).array() / ((v_[k] / bc2).array().sqrt() + opt_.eps)).matrix();
    // Frozen rows keep zero moments, so their update is exactly zero; skip
    // them anyway so the stored values stay bit-identical.
    if (p.frozen_rows.empty()) {
      p.value -= update;
    } else {
      Matrix u = update;
      for (auto r : p.frozen_rows) u.row(r).setZero();
      p.value -= u;
    }
  }
}

double global_grad_norm(std::span<const Parameter> params) {
  double sq = 0.0;
  for (const auto& p : params)
    if (p.grad.size()) sq += p.grad.squaredNorm();
  return std::sqrt(sq);
}

void clip_grad_norm(std::span<Parameter> params, double max_norm) {
  const double n = global_grad_norm(params);
  if (n <= max_norm || n == 0.0) return;
  const double s = max_norm / n;
  for (auto& p : params)
    if (p.grad.size()) p.grad *= s;
}

}  // namespace kgan::nn
