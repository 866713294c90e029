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

#include "htr/parameter.hpp"

#include <cmath>

#include "htr/tape.hpp"

namespace htr {

ParamPtr ParameterStore::get_or_create(const std::string& share_id, const Shape& shape,
                                       const std::function<void(Rng&, Tensor&)>& init) {
  auto it = map_.find(share_id);
  if (it != map_.end()) {
    if (it->second->value.shape() != shape)
      throw ShapeError("parameter '" + share_id + "' requested with shape " +
                       shape_str(shape) + " but exists with shape " +
                       shape_str(it->second->value.shape()));
    return it->second;
  }
  Tensor v(shape);
  if (init) {
    // Seeded per id: values do not depend on the order layers are built in.
    Rng rng(hash_combine(seed_, hash_str(share_id)));
    init(rng, v);
  }
  auto p = std::make_shared<Parameter>(share_id, std::move(v));
  map_.emplace(share_id, p);
  return p;
}

std::vector<ParamPtr> ParameterStore::all() const {
  std::vector<ParamPtr> out;
  out.reserve(map_.size());
  for (const auto& [k, v] : map_) out.push_back(v);
  return out;
}

void zero_grads(std::span<const ParamPtr> params) {
  for (const auto& p : params) p->zero_grad();
}

double grad_check(std::span<const ParamPtr> params,
                  const std::function<Var(Tape&)>& build, double eps) {
  if (!(eps >= 1e-7 && eps <= 1e-3))
    throw ConfigError("grad_check: eps must lie in [1e-7, 1e-3]");

  auto eval = [&](const char* where, const std::string& component) {
    Tape t;
    Var out = build(t);
    if (out.value().numel() != 1)
      throw ShapeError("grad_check: build must return a scalar");
    const double f = out.value()[0];
    if (!std::isfinite(f))
      throw StateError(std::string("grad_check: non-finite value at ") + where +
                       (component.empty() ? "" : " while perturbing " + component));
    return f;
  };

  zero_grads(params);
  {
    Tape t;
    Var out = build(t);
    if (out.value().numel() != 1)
      throw ShapeError("grad_check: build must return a scalar");
    if (!std::isfinite(out.value()[0]))
      throw StateError("grad_check: non-finite value at base point");
    t.backward(out);
  }
  std::vector<Tensor> analytic;
  analytic.reserve(params.size());
  for (const auto& p : params) analytic.push_back(p->grad);

  double max_rel = 0.0;
  for (size_t pi = 0; pi < params.size(); ++pi) {
    Parameter& p = *params[pi];
    for (int64_t i = 0; i < p.numel(); ++i) {
      const std::string component = p.share_id + "[" + std::to_string(i) + "]";
      const double orig = p.value[i];
      p.value[i] = orig + eps;
      const double fp = eval("x+eps", component);
      p.value[i] = orig - eps;
      const double fm = eval("x-eps", component);
      p.value[i] = orig;
      const double numeric = (fp - fm) / (2.0 * eps);
      const double a = analytic[pi][i];
      const double rel =
          std::abs(a - numeric) / std::max({1.0, std::abs(a), std::abs(numeric)});
      max_rel = std::max(max_rel, rel);
    }
  }
  return max_rel;
}

}  // namespace htr
