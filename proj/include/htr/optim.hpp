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

#include <span>

#include "htr/parameter.hpp"

namespace htr {

struct OptimState {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  int64_t step_count = 0;
};

// Bias-corrected Adam update:
//   m <- b1*m + (1-b1)*g;  v <- b2*v + (1-b2)*g^2
//   param <- param - lr * m_hat / (sqrt(v_hat) + eps)
// Gradients are zeroed afterwards. Stepping on gradients that no backward
// pass has populated is an error.
void adam_step(std::span<const ParamPtr> params, OptimState& state);

}  // namespace htr
