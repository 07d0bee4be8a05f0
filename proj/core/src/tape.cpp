#include "fl4s/tape.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace fl4s::ad {

const Matrix& Var::value() const {
  if (!tape_) throw std::logic_error("Var: not attached to a tape");
  return tape_->nodes_[index_].value;
}

std::optional<Matrix> Gradients::of(Var v) const {
  if (v.tape() != tape_ || v.index() >= grads_.size()) {
    throw std::invalid_argument("Gradients: variable is not from this tape");
  }
  return grads_[v.index()];
}

const Matrix& Gradients::at(Var v) const {
  if (v.tape() != tape_ || v.index() >= grads_.size() || !grads_[v.index()]) {
    throw std::invalid_argument("Gradients: no gradient recorded for variable");
  }
  return *grads_[v.index()];
}

Var Tape::parameter(Matrix value) {
  nodes_.push_back(Node{std::move(value), {}, true, true, {}});
  return Var(this, nodes_.size() - 1);
}

Var Tape::constant(Matrix value) {
  nodes_.push_back(Node{std::move(value), {}, false, false, {}});
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(Matrix value, bool tracked, Rule rule) {
  Node node;
  node.value = std::move(value);
  node.tracked = tracked;
  if (tracked) node.rule = std::move(rule);
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Matrix& Tape::grad_buffer(std::size_t i) {
  Node& n = nodes_[i];
  if (n.grad.rows() != n.value.rows() || n.grad.cols() != n.value.cols()) {
    n.grad = Matrix(n.value.rows(), n.value.cols());
  }
  return n.grad;
}

Gradients Tape::backward(Var loss) {
  if (loss.tape() != this || loss.index() >= nodes_.size()) {
    throw std::invalid_argument("backward: loss is not recorded on this tape");
  }
  const Matrix& lv = nodes_[loss.index()].value;
  if (lv.rows() != 1 || lv.cols() != 1) {
    throw std::invalid_argument("backward: loss must be a scalar, got " + shape_of(lv));
  }
  for (auto& n : nodes_) n.grad = Matrix();

  if (nodes_[loss.index()].tracked) {
    grad_buffer(loss.index())(0, 0) = 1.0;
    for (std::size_t i = loss.index() + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (!n.tracked || !n.rule || n.grad.empty()) continue;
      n.rule(*this, i);
    }
  }

  Gradients out;
  out.tape_ = this;
  out.grads_.resize(nodes_.size());
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    Node& n = nodes_[i];
    if (!n.is_parameter) continue;
    if (n.grad.empty()) n.grad = Matrix(n.value.rows(), n.value.cols());
    out.grads_[i] = std::move(n.grad);
    n.grad = Matrix();
  }
  return out;
}

namespace {

Tape& same_tape(Var a, Var b, const char* op) {
  if (!a.valid() || a.tape() != b.tape()) {
    throw std::invalid_argument(std::string(op) + ": operands belong to different tapes");
  }
  return *a.tape();
}

void require(bool ok, const char* op, const Matrix& a, const Matrix& b) {
  if (!ok) {
    throw std::invalid_argument(std::string(op) + ": dimension mismatch " +
                                shape_of(a) + " vs " + shape_of(b));
  }
}

void accumulate(Matrix& dst, const Matrix& src, double factor = 1.0) {
  auto d = dst.data();
  auto s = src.data();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] += factor * s[i];
}

}  // namespace

Var matmul(Var a, Var b) {
  Tape& t = same_tape(a, b, "matmul");
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  require(av.cols() == bv.rows(), "matmul", av, bv);
  Matrix out(av.rows(), bv.cols());
  gemm_nn_acc(av, bv, out);
  const std::size_t ia = a.index(), ib = b.index();
  const bool tracked = t.tracked(ia) || t.tracked(ib);
  return t.record(std::move(out), tracked, [ia, ib](Tape& tp, std::size_t self) {
    const Matrix& g = tp.grad(self);
    if (tp.tracked(ia)) gemm_nt_acc(g, tp.value(ib), tp.grad_buffer(ia));
    if (tp.tracked(ib)) gemm_tn_acc(tp.value(ia), g, tp.grad_buffer(ib));
  });
}

namespace {

template <typename Forward>
Var binary_same_shape(Var a, Var b, const char* op, Forward f, double sign_b) {
  Tape& t = same_tape(a, b, op);
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  require(av.rows() == bv.rows() && av.cols() == bv.cols(), op, av, bv);
  Matrix out(av.rows(), av.cols());
  auto o = out.data();
  auto x = av.data();
  auto y = bv.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = f(x[i], y[i]);
  const std::size_t ia = a.index(), ib = b.index();
  const bool tracked = t.tracked(ia) || t.tracked(ib);
  return t.record(std::move(out), tracked, [ia, ib, sign_b](Tape& tp, std::size_t self) {
    const Matrix& g = tp.grad(self);
    if (tp.tracked(ia)) accumulate(tp.grad_buffer(ia), g);
    if (tp.tracked(ib)) accumulate(tp.grad_buffer(ib), g, sign_b);
  });
}

}  // namespace

Var add(Var a, Var b) {
  return binary_same_shape(a, b, "add", [](double x, double y) { return x + y; }, 1.0);
}

Var sub(Var a, Var b) {
  return binary_same_shape(a, b, "sub", [](double x, double y) { return x - y; }, -1.0);
}

Var hadamard(Var a, Var b) {
  Tape& t = same_tape(a, b, "hadamard");
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  require(av.rows() == bv.rows() && av.cols() == bv.cols(), "hadamard", av, bv);
  Matrix out(av.rows(), av.cols());
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] = av.data()[i] * bv.data()[i];
  const std::size_t ia = a.index(), ib = b.index();
  const bool tracked = t.tracked(ia) || t.tracked(ib);
  return t.record(std::move(out), tracked, [ia, ib](Tape& tp, std::size_t self) {
    const auto g = tp.grad(self).data();
    if (tp.tracked(ia)) {
      auto ga = tp.grad_buffer(ia).data();
      const auto y = tp.value(ib).data();
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i];
    }
    if (tp.tracked(ib)) {
      auto gb = tp.grad_buffer(ib).data();
      const auto x = tp.value(ia).data();
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * x[i];
    }
  });
}

Var add_row(Var a, Var bias) {
  Tape& t = same_tape(a, bias, "add_row");
  const Matrix& av = a.value();
  const Matrix& bv = bias.value();
  require(bv.rows() == 1 && bv.cols() == av.cols(), "add_row", av, bv);
  Matrix out = av;
  for (std::size_t r = 0; r < out.rows(); ++r) {
    auto row = out.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) row[c] += bv(0, c);
  }
  const std::size_t ia = a.index(), ib = bias.index();
  const bool tracked = t.tracked(ia) || t.tracked(ib);
  return t.record(std::move(out), tracked, [ia, ib](Tape& tp, std::size_t self) {
    const Matrix& g = tp.grad(self);
    if (tp.tracked(ia)) accumulate(tp.grad_buffer(ia), g);
    if (tp.tracked(ib)) {
      Matrix& gb = tp.grad_buffer(ib);
      for (std::size_t r = 0; r < g.rows(); ++r) {
        const auto row = g.row(r);
        for (std::size_t c = 0; c < row.size(); ++c) gb(0, c) += row[c];
      }
    }
  });
}

Var scale_rows(Var a, Var w) {
  Tape& t = same_tape(a, w, "scale_rows");
  const Matrix& av = a.value();
  const Matrix& wv = w.value();
  require(wv.cols() == 1 && wv.rows() == av.rows(), "scale_rows", av, wv);
  Matrix out = av;
  for (std::size_t r = 0; r < out.rows(); ++r)
    for (double& v : out.row(r)) v *= wv(r, 0);
  const std::size_t ia = a.index(), iw = w.index();
  const bool tracked = t.tracked(ia) || t.tracked(iw);
  return t.record(std::move(out), tracked, [ia, iw](Tape& tp, std::size_t self) {
    const Matrix& g = tp.grad(self);
    if (tp.tracked(ia)) {
      Matrix& ga = tp.grad_buffer(ia);
      const Matrix& wv2 = tp.value(iw);
      for (std::size_t r = 0; r < g.rows(); ++r) {
        const double s = wv2(r, 0);
        auto dst = ga.row(r);
        const auto src = g.row(r);
        for (std::size_t c = 0; c < src.size(); ++c) dst[c] += s * src[c];
      }
    }
    if (tp.tracked(iw)) {
      Matrix& gw = tp.grad_buffer(iw);
      const Matrix& av2 = tp.value(ia);
      for (std::size_t r = 0; r < g.rows(); ++r) {
        double acc = 0.0;
        const auto src = g.row(r);
        const auto x = av2.row(r);
        for (std::size_t c = 0; c < src.size(); ++c) acc += src[c] * x[c];
        gw(r, 0) += acc;
      }
    }
  });
}

Var scale(Var a, double factor) {
  Tape& t = *a.tape();
  Matrix out = a.value();
  for (double& v : out.data()) v *= factor;
  const std::size_t ia = a.index();
  return t.record(std::move(out), t.tracked(ia), [ia, factor](Tape& tp, std::size_t self) {
    accumulate(tp.grad_buffer(ia), tp.grad(self), factor);
  });
}

Var tanh(Var a) {
  Tape& t = *a.tape();
  Matrix out = a.value();
  for (double& v : out.data()) v = std::tanh(v);
  const std::size_t ia = a.index();
  return t.record(std::move(out), t.tracked(ia), [ia](Tape& tp, std::size_t self) {
    const auto g = tp.grad(self).data();
    const auto y = tp.value(self).data();
    auto ga = tp.grad_buffer(ia).data();
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * (1.0 - y[i] * y[i]);
  });
}

Var sigmoid(Var a) {
  Tape& t = *a.tape();
  Matrix out = a.value();
  for (double& v : out.data()) {
    v = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
  }
  const std::size_t ia = a.index();
  return t.record(std::move(out), t.tracked(ia), [ia](Tape& tp, std::size_t self) {
    const auto g = tp.grad(self).data();
    const auto y = tp.value(self).data();
    auto ga = tp.grad_buffer(ia).data();
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i] * (1.0 - y[i]);
  });
}

Var sum(Var a) {
  Tape& t = *a.tape();
  double acc = 0.0;
  for (double v : a.value().data()) acc += v;
  const std::size_t ia = a.index();
  return t.record(Matrix(1, 1, acc), t.tracked(ia), [ia](Tape& tp, std::size_t self) {
    const double g = tp.grad(self)(0, 0);
    for (double& v : tp.grad_buffer(ia).data()) v += g;
  });
}

Var sum_squares(Var a) {
  Tape& t = *a.tape();
  double acc = 0.0;
  for (double v : a.value().data()) acc += v * v;
  const std::size_t ia = a.index();
  return t.record(Matrix(1, 1, acc), t.tracked(ia), [ia](Tape& tp, std::size_t self) {
    const double g = tp.grad(self)(0, 0);
    const auto x = tp.value(ia).data();
    auto ga = tp.grad_buffer(ia).data();
    for (std::size_t i = 0; i < x.size(); ++i) ga[i] += 2.0 * g * x[i];
  });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: no operands");
  Tape& t = *parts.front().tape();
  const std::size_t rows = parts.front().rows();
  std::size_t cols = 0;
  bool tracked = false;
  std::vector<std::size_t> ids;
  ids.reserve(parts.size());
  for (const Var& p : parts) {
    if (p.tape() != &t) throw std::invalid_argument("concat_cols: operands belong to different tapes");
    require(p.rows() == rows, "concat_cols", parts.front().value(), p.value());
    cols += p.cols();
    tracked = tracked || t.tracked(p.index());
    ids.push_back(p.index());
  }
  Matrix out(rows, cols);
  std::size_t offset = 0;
  for (const Var& p : parts) {
    const Matrix& v = p.value();
    for (std::size_t r = 0; r < rows; ++r)
      std::copy(v.row(r).begin(), v.row(r).end(), out.row(r).begin() + static_cast<std::ptrdiff_t>(offset));
    offset += v.cols();
  }
  return t.record(std::move(out), tracked, [ids = std::move(ids)](Tape& tp, std::size_t self) {
    const Matrix& g = tp.grad(self);
    std::size_t off = 0;
    for (std::size_t id : ids) {
      const std::size_t w = tp.value(id).cols();
      if (tp.tracked(id)) {
        Matrix& gi = tp.grad_buffer(id);
        for (std::size_t r = 0; r < g.rows(); ++r)
          for (std::size_t c = 0; c < w; ++c) gi(r, c) += g(r, off + c);
      }
      off += w;
    }
  });
}

Var slice_cols(Var a, std::size_t begin, std::size_t count) {
  Tape& t = *a.tape();
  const Matrix& av = a.value();
  if (begin + count > av.cols()) {
    throw std::invalid_argument("slice_cols: range [" + std::to_string(begin) + ", " +
                                std::to_string(begin + count) + ") outside " + shape_of(av));
  }
  Matrix out(av.rows(), count);
  for (std::size_t r = 0; r < av.rows(); ++r)
    for (std::size_t c = 0; c < count; ++c) out(r, c) = av(r, begin + c);
  const std::size_t ia = a.index();
  return t.record(std::move(out), t.tracked(ia), [ia, begin, count](Tape& tp, std::size_t self) {
    const Matrix& g = tp.grad(self);
    Matrix& ga = tp.grad_buffer(ia);
    for (std::size_t r = 0; r < g.rows(); ++r)
      for (std::size_t c = 0; c < count; ++c) ga(r, begin + c) += g(r, c);
  });
}

Var row_softmax(Var a) {
  Tape& t = *a.tape();
  const Matrix& av = a.value();
  if (av.cols() == 0) throw std::invalid_argument("row_softmax: empty rows");
  Matrix out(av.rows(), av.cols());
  for (std::size_t r = 0; r < av.rows(); ++r) {
    const auto x = av.row(r);
    auto y = out.row(r);
    const double peak = *std::max_element(x.begin(), x.end());
    double total = 0.0;
    for (std::size_t c = 0; c < x.size(); ++c) {
      y[c] = std::exp(x[c] - peak);
      total += y[c];
    }
    for (double& v : y) v /= total;
  }
  const std::size_t ia = a.index();
  return t.record(std::move(out), t.tracked(ia), [ia](Tape& tp, std::size_t self) {
    const Matrix& g = tp.grad(self);
    const Matrix& y = tp.value(self);
    Matrix& ga = tp.grad_buffer(ia);
    for (std::size_t r = 0; r < g.rows(); ++r) {
      double dot = 0.0;
      for (std::size_t c = 0; c < g.cols(); ++c) dot += g(r, c) * y(r, c);
      for (std::size_t c = 0; c < g.cols(); ++c) ga(r, c) += y(r, c) * (g(r, c) - dot);
    }
  });
}

}  // namespace fl4s::ad
