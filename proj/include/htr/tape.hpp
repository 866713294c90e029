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

#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "htr/parameter.hpp"
#include "htr/tensor.hpp"

namespace htr {

class Tape;

// Handle to a node on a tape. Cheap to copy; valid as long as the tape lives.
struct Var {
  Tape* tape = nullptr;
  int id = -1;

  bool defined() const { return tape != nullptr; }
  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
};

// Reverse-mode tape. Forward ops append nodes in evaluation order, which is
// also a topological order, so backward() is a single reverse sweep. One
// forward/backward step per tape; a second backward without reset() throws.
// A tape and its recorded graph are confined to one thread.
class Tape {
 public:
  using BackFn = std::function<void(Tape&, int self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Leaf that never needs gradients (data, fixed masks).
  Var constant(Tensor v);
  // Leaf whose gradient is tracked but not bound to a parameter.
  Var input(Tensor v);
  // Leaf bound to a parameter; backward() accumulates into p->grad. Binding
  // the same parameter more than once sums the per-use gradients.
  Var param(const ParamPtr& p);

  // Records an op node. `back` receives the node id; it should read
  // grad(self) and scatter into grad_acc(parent) for parents that need it.
  Var make_node(Tensor value, const std::vector<int>& parents, BackFn back);

  const Tensor& value(int id) const { return nodes_[static_cast<size_t>(id)].value; }
  const Tensor& value(Var v) const { return value(v.id); }
  bool needs_grad(int id) const { return nodes_[static_cast<size_t>(id)].needs_grad; }

  // Gradient buffer, allocated zero on first touch.
  Tensor& grad_acc(int id);
  // Null if the node never received a gradient.
  const Tensor* grad(int id) const;
  const Tensor* grad(Var v) const { return grad(v.id); }

  // Fills parameter gradients with d(output)/d(param). `output` must be a
  // scalar recorded on this tape.
  void backward(Var output);
  // Clears all node gradients so backward may run again.
  void reset();

  size_t num_nodes() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;  // undefined until touched
    bool needs_grad = false;
    BackFn back;
  };

  std::vector<Node> nodes_;
  bool backward_done_ = false;
};

// Elementwise / linear primitives. All validate shapes and throw ShapeError
// carrying both shapes on mismatch.
namespace ops {

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double s);
// (R,C) + (C,) broadcast over rows
Var add_rowvec(Var a, Var v);
Var matmul(Var a, Var b);
Var tanh(Var a);
Var sigmoid(Var a);
Var relu(Var a);
// normalizes along `axis`; rows sum to 1
Var softmax(Var a, int axis);
Var concat(const std::vector<Var>& parts, int axis);
std::vector<Var> split(Var a, int axis, const std::vector<int64_t>& sizes);
Var reshape(Var a, Shape new_shape);
Var reduce_sum(Var a);
Var reduce_mean(Var a);
Var sum_axis(Var a, int axis);

}  // namespace ops

}  // namespace htr
