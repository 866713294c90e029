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
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "htr/tensor.hpp"

namespace htr {

class Tape;
struct Var;

// Trainable tensor. Layer instances constructed with the same share_id hold
// the same Parameter object, so a weight update through one is visible
// through every use site and gradients from all uses accumulate here.
struct Parameter {
  std::string share_id;
  Tensor value;
  Tensor grad;  // same shape as value at all times
  // Adam state, sized lazily on the first optimizer step.
  Tensor adam_m;
  Tensor adam_v;
  bool grad_populated = false;

  Parameter(std::string id, Tensor v)
      : share_id(std::move(id)), value(std::move(v)), grad(Tensor::zeros_like(value)) {}

  int64_t numel() const { return value.numel(); }
  void zero_grad() {
    for (auto& g : grad.vec()) g = 0.0;
    grad_populated = false;
  }
};

using ParamPtr = std::shared_ptr<Parameter>;

// Registry keyed by share_id. Asking twice for the same id returns the same
// storage; initialization is seeded per id, so parameter values do not depend
// on construction order.
class ParameterStore {
 public:
  explicit ParameterStore(uint64_t seed) : seed_(seed) {}

  // init(rng, tensor) fills a freshly allocated tensor; ignored when the id
  // already exists (the existing shape must match).
  ParamPtr get_or_create(const std::string& share_id, const Shape& shape,
                         const std::function<void(Rng&, Tensor&)>& init);

  bool contains(const std::string& share_id) const { return map_.count(share_id) > 0; }
  // sorted by share_id
  std::vector<ParamPtr> all() const;

 private:
  uint64_t seed_;
  std::map<std::string, ParamPtr> map_;
};

void zero_grads(std::span<const ParamPtr> params);

// Max relative error between analytic gradients (reverse mode) and central
// finite differences, over every component of every parameter:
//   |analytic - numeric| / max(1, |analytic|, |numeric|)
// `build` must re-record the same computation on a fresh tape each call and
// return a scalar. eps must lie in [1e-7, 1e-3].
double grad_check(std::span<const ParamPtr> params,
                  const std::function<Var(Tape&)>& build, double eps);

}  // namespace htr
