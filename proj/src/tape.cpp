/*
 * Copyright 2026 The HTR Toolkit Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *    http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "htr/tape.hpp"

#include <algorithm>
#include <cstring>

namespace htr {

const Tensor& Var::value() const { return tape->value(id); }

Var Tape::constant(Tensor v) {
  nodes_.push_back(Node{std::move(v), Tensor{}, false, nullptr});
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::input(Tensor v) {
  nodes_.push_back(Node{std::move(v), Tensor{}, true, nullptr});
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::param(const ParamPtr& p) {
  Node n;
  n.value = p->value;  // copy; the tape's graph is immutable once recorded
  n.needs_grad = true;
  ParamPtr held = p;
  n.back = [held](Tape& t, int self) {
    const Tensor* g = t.grad(self);
    if (!g) return;
    Tensor& dst = held->grad;
    for (int64_t i = 0; i < g->numel(); ++i) dst[i] += (*g)[i];
    held->grad_populated = true;
  };
  nodes_.push_back(std::move(n));
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::make_node(Tensor value, const std::vector<int>& parents, BackFn back) {
  Node n;
  n.value = std::move(value);
  for (int p : parents) {
    if (nodes_[static_cast<size_t>(p)].needs_grad) {
      n.needs_grad = true;
      break;
    }
  }
  if (n.needs_grad) n.back = std::move(back);
  nodes_.push_back(std::move(n));
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

Tensor& Tape::grad_acc(int id) {
  Node& n = nodes_[static_cast<size_t>(id)];
  if (!n.grad.defined()) n.grad = Tensor::zeros_like(n.value);
  return n.grad;
}

const Tensor* Tape::grad(int id) const {
  const Node& n = nodes_[static_cast<size_t>(id)];
  return n.grad.defined() ? &n.grad : nullptr;
}

void Tape::backward(Var output) {
  if (output.tape != this) throw StateError("backward: output from a different tape");
  if (backward_done_)
    throw StateError("backward called twice on the same recorded graph without reset");
  if (value(output).numel() != 1)
    throw ShapeError("backward requires a scalar output, got shape " +
                     shape_str(value(output).shape()));
  backward_done_ = true;
  grad_acc(output.id)[0] = 1.0;
  for (int i = output.id; i >= 0; --i) {
    Node& n = nodes_[static_cast<size_t>(i)];
    if (!n.grad.defined() || !n.back) continue;
    n.back(*this, i);
  }
}

void Tape::reset() {
  for (auto& n : nodes_) n.grad = Tensor{};
  backward_done_ = false;
}

namespace ops {

namespace {

Tape& tape_of(Var a) {
  if (!a.defined()) throw StateError("op on undefined Var");
  return *a.tape;
}

void check_same_tape(Var a, Var b) {
  if (a.tape != b.tape) throw StateError("op on Vars from different tapes");
}

// Decomposes `shape` into (outer, len, inner) around `axis` so that the
// elements of one line along the axis sit at base + l*inner.
struct AxisDims {
  int64_t outer = 1, len = 1, inner = 1;
};

AxisDims axis_dims(const Shape& shape, int axis) {
  if (axis < 0 || axis >= static_cast<int>(shape.size()))
    throw ShapeError("axis " + std::to_string(axis) + " out of range for shape " +
                     shape_str(shape));
  AxisDims d;
  for (int i = 0; i < axis; ++i) d.outer *= shape[static_cast<size_t>(i)];
  d.len = shape[static_cast<size_t>(axis)];
  for (size_t i = static_cast<size_t>(axis) + 1; i < shape.size(); ++i) d.inner *= shape[i];
  return d;
}

}  // namespace

Var add(Var a, Var b) {
  check_same_tape(a, b);
  Tape& t = tape_of(a);
  check_same_shape(a.value(), b.value(), "add");
  Tensor out = a.value();
  const Tensor& bv = b.value();
  for (int64_t i = 0; i < out.numel(); ++i) out[i] += bv[i];
  const int ia = a.id, ib = b.id;
  return t.make_node(std::move(out), {ia, ib}, [ia, ib](Tape& t, int self) {
    const Tensor& g = *t.grad(self);
    if (t.needs_grad(ia)) {
      Tensor& da = t.grad_acc(ia);
      for (int64_t i = 0; i < g.numel(); ++i) da[i] += g[i];
    }
    if (t.needs_grad(ib)) {
      Tensor& db = t.grad_acc(ib);
      for (int64_t i = 0; i < g.numel(); ++i) db[i] += g[i];
    }
  });
}

Var sub(Var a, Var b) {
  check_same_tape(a, b);
  Tape& t = tape_of(a);
  check_same_shape(a.value(), b.value(), "sub");
  Tensor out = a.value();
  const Tensor& bv = b.value();
  for (int64_t i = 0; i < out.numel(); ++i) out[i] -= bv[i];
  const int ia = a.id, ib = b.id;
  return t.make_node(std::move(out), {ia, ib}, [ia, ib](Tape& t, int self) {
    const Tensor& g = *t.grad(self);
    if (t.needs_grad(ia)) {
      Tensor& da = t.grad_acc(ia);
      for (int64_t i = 0; i < g.numel(); ++i) da[i] += g[i];
    }
    if (t.needs_grad(ib)) {
      Tensor& db = t.grad_acc(ib);
      for (int64_t i = 0; i < g.numel(); ++i) db[i] -= g[i];
    }
  });
}

Var mul(Var a, Var b) {
  check_same_tape(a, b);
  Tape& t = tape_of(a);
  check_same_shape(a.value(), b.value(), "mul");
  Tensor out = a.value();
  const Tensor& bv = b.value();
  for (int64_t i = 0; i < out.numel(); ++i) out[i] *= bv[i];
  const int ia = a.id, ib = b.id;
  return t.make_node(std::move(out), {ia, ib}, [ia, ib](Tape& t, int self) {
    const Tensor& g = *t.grad(self);
    const Tensor& av = t.value(ia);
    const Tensor& bv = t.value(ib);
    if (t.needs_grad(ia)) {
      Tensor& da = t.grad_acc(ia);
      for (int64_t i = 0; i < g.numel(); ++i) da[i] += g[i] * bv[i];
    }
    if (t.needs_grad(ib)) {
      Tensor& db = t.grad_acc(ib);
      for (int64_t i = 0; i < g.numel(); ++i) db[i] += g[i] * av[i];
    }
  });
}

Var scale(Var a, double s) {
  Tape& t = tape_of(a);
  Tensor out = a.value();
  for (int64_t i = 0; i < out.numel(); ++i) out[i] *= s;
  const int ia = a.id;
  return t.make_node(std::move(out), {ia}, [ia, s](Tape& t, int self) {
    const Tensor& g = *t.grad(self);
    if (!t.needs_grad(ia)) return;
    Tensor& da = t.grad_acc(ia);
    for (int64_t i = 0; i < g.numel(); ++i) da[i] += s * g[i];
  });
}

Var add_rowvec(Var a, Var v) {
  check_same_tape(a, v);
  Tape& t = tape_of(a);
  const Tensor& av = a.value();
  const Tensor& vv = v.value();
  if (av.rank() != 2 || vv.rank() != 1 || av.dim(1) != vv.dim(0))
    throw ShapeError("add_rowvec: shape mismatch " + shape_str(av.shape()) + " vs " +
                     shape_str(vv.shape()));
  const int64_t rows = av.dim(0), cols = av.dim(1);
  Tensor out = av;
  for (int64_t r = 0; r < rows; ++r)
    for (int64_t c = 0; c < cols; ++c) out[r * cols + c] += vv[c];
  const int ia = a.id, iv = v.id;
  return t.make_node(std::move(out), {ia, iv}, [ia, iv, rows, cols](Tape& t, int self) {
    const Tensor& g = *t.grad(self);
    if (t.needs_grad(ia)) {
      Tensor& da = t.grad_acc(ia);
      for (int64_t i = 0; i < g.numel(); ++i) da[i] += g[i];
    }
    if (t.needs_grad(iv)) {
      Tensor& dv = t.grad_acc(iv);
      for (int64_t r = 0; r < rows; ++r)
        for (int64_t c = 0; c < cols; ++c) dv[c] += g[r * cols + c];
    }
  });
}

Var matmul(Var a, Var b) {
  check_same_tape(a, b);
  Tape& t = tape_of(a);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.rank() != 2 || bv.rank() != 2 || av.dim(1) != bv.dim(0))
    throw ShapeError("matmul: incompatible shapes " + shape_str(av.shape()) + " and " +
                     shape_str(bv.shape()));
  const int64_t M = av.dim(0), K = av.dim(1), N = bv.dim(1);
  Tensor out({M, N});
  for (int64_t m = 0; m < M; ++m) {
    const double* arow = av.data() + m * K;
    double* orow = out.data() + m * N;
    for (int64_t k = 0; k < K; ++k) {
      const double w = arow[k];
      if (w == 0.0) continue;
      const double* brow = bv.data() + k * N;
      for (int64_t n = 0; n < N; ++n) orow[n] += w * brow[n];
    }
  }
  const int ia = a.id, ib = b.id;
  return t.make_node(std::move(out), {ia, ib}, [ia, ib, M, K, N](Tape& t, int self) {
    const Tensor& g = *t.grad(self);
    const Tensor& av = t.value(ia);
    const Tensor& bv = t.value(ib);
    if (t.needs_grad(ia)) {
      Tensor& da = t.grad_acc(ia);  // g (M,N) x B^T (N,K)
      for (int64_t m = 0; m < M; ++m)
        for (int64_t k = 0; k < K; ++k) {
          const double* grow = g.data() + m * N;
          const double* brow = bv.data() + k * N;
          double acc = 0.0;
          for (int64_t n = 0; n < N; ++n) acc += grow[n] * brow[n];
          da[m * K + k] += acc;
        }
    }
    if (t.needs_grad(ib)) {
      Tensor& db = t.grad_acc(ib);  // A^T (K,M) x g (M,N)
      for (int64_t m = 0; m < M; ++m) {
        const double* arow = av.data() + m * K;
        const double* grow = g.data() + m * N;
        for (int64_t k = 0; k < K; ++k) {
          const double w = arow[k];
          if (w == 0.0) continue;
          double* drow = db.data() + k * N;
          for (int64_t n = 0; n < N; ++n) drow[n] += w * grow[n];
        }
      }
    }
  });
}

namespace {

template <class Fwd, class Drv>
Var unary_elementwise(Var a, Fwd fwd, Drv drv_from_out) {
  Tape& t = tape_of(a);
  Tensor out = a.value();
  for (int64_t i = 0; i < out.numel(); ++i) out[i] = fwd(out[i]);
  const int ia = a.id;
  return t.make_node(std::move(out), {ia}, [ia, drv_from_out](Tape& t, int self) {
    if (!t.needs_grad(ia)) return;
    const Tensor& g = *t.grad(self);
    const Tensor& y = t.value(self);
    const Tensor& x = t.value(ia);
    Tensor& da = t.grad_acc(ia);
    for (int64_t i = 0; i < g.numel(); ++i) da[i] += g[i] * drv_from_out(y[i], x[i]);
  });
}

}  // namespace

Var tanh(Var a) {
  return unary_elementwise(
      a, [](double x) { return std::tanh(x); },
      [](double y, double) { return 1.0 - y * y; });
}

Var sigmoid(Var a) {
  return unary_elementwise(
      a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
      [](double y, double) { return y * (1.0 - y); });
}

Var relu(Var a) {
  return unary_elementwise(
      a, [](double x) { return x > 0.0 ? x : 0.0; },
      [](double, double x) { return x > 0.0 ? 1.0 : 0.0; });
}

Var softmax(Var a, int axis) {
  Tape& t = tape_of(a);
  const Tensor& av = a.value();
  const AxisDims d = axis_dims(av.shape(), axis);
  Tensor out = av;
  std::vector<double> line(static_cast<size_t>(d.len));
  for (int64_t o = 0; o < d.outer; ++o) {
    for (int64_t i = 0; i < d.inner; ++i) {
      const int64_t base = o * d.len * d.inner + i;
      double mx = out[base];
      for (int64_t l = 1; l < d.len; ++l) mx = std::max(mx, out[base + l * d.inner]);
      double sum = 0.0;
      for (int64_t l = 0; l < d.len; ++l) {
        const double e = std::exp(out[base + l * d.inner] - mx);
        line[static_cast<size_t>(l)] = e;
        sum += e;
      }
      for (int64_t l = 0; l < d.len; ++l)
        out[base + l * d.inner] = line[static_cast<size_t>(l)] / sum;
    }
  }
  const int ia = a.id;
  return t.make_node(std::move(out), {ia}, [ia, d](Tape& t, int self) {
    if (!t.needs_grad(ia)) return;
    const Tensor& g = *t.grad(self);
    const Tensor& y = t.value(self);
    Tensor& da = t.grad_acc(ia);
    for (int64_t o = 0; o < d.outer; ++o) {
      for (int64_t i = 0; i < d.inner; ++i) {
        const int64_t base = o * d.len * d.inner + i;
        double dot = 0.0;
        for (int64_t l = 0; l < d.len; ++l) {
          const int64_t k = base + l * d.inner;
          dot += g[k] * y[k];
        }
        for (int64_t l = 0; l < d.len; ++l) {
          const int64_t k = base + l * d.inner;
          da[k] += y[k] * (g[k] - dot);
        }
      }
    }
  });
}

Var concat(const std::vector<Var>& parts, int axis) {
  if (parts.empty()) throw ShapeError("concat of zero tensors");
  Tape& t = tape_of(parts[0]);
  for (const Var& p : parts) check_same_tape(parts[0], p);
  const Shape& first = parts[0].value().shape();
  Shape out_shape = first;
  int64_t total = 0;
  for (const Var& p : parts) {
    const Shape& s = p.value().shape();
    if (s.size() != first.size())
      throw ShapeError("concat: rank mismatch " + shape_str(first) + " vs " + shape_str(s));
    for (size_t i = 0; i < s.size(); ++i) {
      if (static_cast<int>(i) != axis && s[i] != first[i])
        throw ShapeError("concat: shape mismatch off axis " + shape_str(first) + " vs " +
                         shape_str(s));
    }
    total += s[static_cast<size_t>(axis)];
  }
  out_shape[static_cast<size_t>(axis)] = total;
  const AxisDims od = axis_dims(out_shape, axis);
  Tensor out(out_shape);
  std::vector<int> ids;
  std::vector<int64_t> lens;
  int64_t offset = 0;
  for (const Var& p : parts) {
    const Tensor& pv = p.value();
    const int64_t plen = pv.shape()[static_cast<size_t>(axis)];
    for (int64_t o = 0; o < od.outer; ++o) {
      std::memcpy(out.data() + (o * od.len + offset) * od.inner,
                  pv.data() + o * plen * od.inner,
                  static_cast<size_t>(plen * od.inner) * sizeof(double));
    }
    ids.push_back(p.id);
    lens.push_back(plen);
    offset += plen;
  }
  return t.make_node(std::move(out), ids, [ids, lens, od](Tape& t, int self) {
    const Tensor& g = *t.grad(self);
    int64_t offset = 0;
    for (size_t p = 0; p < ids.size(); ++p) {
      const int64_t plen = lens[p];
      if (t.needs_grad(ids[p])) {
        Tensor& dp = t.grad_acc(ids[p]);
        for (int64_t o = 0; o < od.outer; ++o) {
          const double* src = g.data() + (o * od.len + offset) * od.inner;
          double* dst = dp.data() + o * plen * od.inner;
          for (int64_t i = 0; i < plen * od.inner; ++i) dst[i] += src[i];
        }
      }
      offset += plen;
    }
  });
}

std::vector<Var> split(Var a, int axis, const std::vector<int64_t>& sizes) {
  Tape& t = tape_of(a);
  const Tensor& av = a.value();
  const AxisDims d = axis_dims(av.shape(), axis);
  int64_t total = 0;
  for (int64_t s : sizes) {
    if (s <= 0) throw ShapeError("split: non-positive part size");
    total += s;
  }
  if (total != d.len)
    throw ShapeError("split: sizes sum to " + std::to_string(total) + " but axis " +
                     std::to_string(axis) + " of " + shape_str(av.shape()) + " has " +
                     std::to_string(d.len));
  std::vector<Var> outs;
  int64_t offset = 0;
  for (int64_t plen : sizes) {
    Shape ps = av.shape();
    ps[static_cast<size_t>(axis)] = plen;
    Tensor part(ps);
    for (int64_t o = 0; o < d.outer; ++o) {
      std::memcpy(part.data() + o * plen * d.inner,
                  av.data() + (o * d.len + offset) * d.inner,
                  static_cast<size_t>(plen * d.inner) * sizeof(double));
    }
    const int ia = a.id;
    const int64_t off = offset;
    outs.push_back(
        t.make_node(std::move(part), {ia}, [ia, off, plen, d](Tape& t, int self) {
          if (!t.needs_grad(ia)) return;
          const Tensor& g = *t.grad(self);
          Tensor& da = t.grad_acc(ia);
          for (int64_t o = 0; o < d.outer; ++o) {
            const double* src = g.data() + o * plen * d.inner;
            double* dst = da.data() + (o * d.len + off) * d.inner;
            for (int64_t i = 0; i < plen * d.inner; ++i) dst[i] += src[i];
          }
        }));
    offset += plen;
  }
  return outs;
}

Var reshape(Var a, Shape new_shape) {
  Tape& t = tape_of(a);
  Tensor out = a.value().reshaped(std::move(new_shape));
  const int ia = a.id;
  return t.make_node(std::move(out), {ia}, [ia](Tape& t, int self) {
    if (!t.needs_grad(ia)) return;
    const Tensor& g = *t.grad(self);
    Tensor& da = t.grad_acc(ia);
    for (int64_t i = 0; i < g.numel(); ++i) da[i] += g[i];
  });
}

Var reduce_sum(Var a) {
  Tape& t = tape_of(a);
  double s = 0.0;
  for (int64_t i = 0; i < a.value().numel(); ++i) s += a.value()[i];
  const int ia = a.id;
  return t.make_node(Tensor::scalar(s), {ia}, [ia](Tape& t, int self) {
    if (!t.needs_grad(ia)) return;
    const double g = (*t.grad(self))[0];
    Tensor& da = t.grad_acc(ia);
    for (int64_t i = 0; i < da.numel(); ++i) da[i] += g;
  });
}

Var reduce_mean(Var a) {
  const double inv = 1.0 / static_cast<double>(a.value().numel());
  return scale(reduce_sum(a), inv);
}

Var sum_axis(Var a, int axis) {
  Tape& t = tape_of(a);
  const Tensor& av = a.value();
  const AxisDims d = axis_dims(av.shape(), axis);
  Shape out_shape = av.shape();
  out_shape.erase(out_shape.begin() + axis);
  if (out_shape.empty()) out_shape = {1};
  Tensor out(out_shape);
  for (int64_t o = 0; o < d.outer; ++o)
    for (int64_t l = 0; l < d.len; ++l)
      for (int64_t i = 0; i < d.inner; ++i)
        out[o * d.inner + i] += av[(o * d.len + l) * d.inner + i];
  const int ia = a.id;
  return t.make_node(std::move(out), {ia}, [ia, d](Tape& t, int self) {
    if (!t.needs_grad(ia)) return;
    const Tensor& g = *t.grad(self);
    Tensor& da = t.grad_acc(ia);
    for (int64_t o = 0; o < d.outer; ++o)
      for (int64_t l = 0; l < d.len; ++l)
        for (int64_t i = 0; i < d.inner; ++i)
          da[(o * d.len + l) * d.inner + i] += g[o * d.inner + i];
  });
}

}  // namespace ops

}  // namespace htr
