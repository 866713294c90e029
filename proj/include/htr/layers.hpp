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

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "htr/tape.hpp"

namespace htr {

enum class Padding { same, valid };
enum class Mode { train, eval };
enum class NormKind { batch, layer };

struct ConvSpec {
  int in_channels = 0;
  int out_channels = 0;
  int kh = 3, kw = 3;
  int sh = 1, sw = 1;
  Padding padding = Padding::same;
  bool separable = false;
  bool bias = true;
  std::string share_id;  // empty = unshared

  // separable: kh*kw*in + in*out (+ out if bias)
  // standard:  kh*kw*in*out (+ out if bias)
  int64_t param_count() const;
};

// Raw autodiff ops. Weight layouts: standard (out,in,kh,kw); depthwise
// (c,kh,kw); bias (out,). Cross-correlation convention, no kernel flip.
Var conv2d_op(Var x, Var w, std::optional<Var> bias, int sh, int sw, Padding pad);
Var depthwise_conv2d_op(Var x, Var w, int sh, int sw, Padding pad);
// Gradient routes to the window argmax, first in row-major order on ties.
// Odd trailing rows/columns are dropped (floor division).
Var maxpool2d_op(Var x, int wh = 2, int ww = 2, int sh = 2, int sw = 2);

// Standard or depthwise-separable convolution behind one spec. A separable
// layer computes a depthwise pass (per-channel spatial kernel, no bias)
// followed by a pointwise 1x1 (bias if requested), which equals a standard
// convolution with the rank-restricted kernel W[o,c,i,j] = D[c,i,j]*P[o,c].
class Conv2d {
 public:
  Conv2d(ParameterStore& store, const std::string& name, ConvSpec spec);

  Var forward(Tape& t, Var x) const;
  const ConvSpec& spec() const { return spec_; }
  int64_t param_count() const { return spec_.param_count(); }
  std::vector<std::pair<std::string, ParamPtr>> params() const;
  const std::string& key() const { return key_; }

 private:
  ConvSpec spec_;
  std::string key_;  // share_id if shared, else layer name
  ParamPtr w_;       // standard
  ParamPtr dw_, pw_; // separable stages
  ParamPtr b_;
};

// Per-channel affine + statistics of one normalization site. Batch kind
// keeps running statistics for eval mode; layer kind ignores them.
struct NormState {
  ParamPtr gamma, beta;
  Tensor running_mean, running_var;
  double epsilon = 1e-5;
  double momentum = 0.1;  // running <- (1-momentum)*running + momentum*batch
};

NormState make_norm_state(ParameterStore& store, const std::string& name, int channels);

// Batch kind: train mode normalizes with batch statistics over (b,h,w) per
// channel and updates running stats; eval mode uses running stats only.
// Layer kind: normalizes over channels at each (b,y,x) position, identical in
// both modes. Input must be (b,c,h,w).
Var normalize(Var x, NormState& state, NormKind kind, Mode mode);

// Inverted dropout: train mode zeroes with probability `rate` and scales
// survivors by 1/(1-rate); eval mode is the identity. rate must be in [0,1).
Var dropout_op(Var x, double rate, Mode mode, Rng& rng);

struct GateSpec {
  int channels = 0;  // pre-split channel count, must be even
  // batch -> both branches batch-normalized; layer -> both layer-normalized;
  // default: batch norm on the tanh branch, layer norm on the sigmoid branch.
  std::optional<NormKind> norm_kind;
  // The gate half takes tanh and the feature half sigmoid; this toggle swaps
  // them for experiments.
  bool swap_activations = false;
};

// The gating unit: split (b,2k,h,w) on the channel axis into (gate, features)
// = (first k, last k), apply tanh to the gate and sigmoid to the features,
// normalize both, multiply element-wise -> (b,k,h,w).
class GateUnit {
 public:
  GateUnit(ParameterStore& store, const std::string& name, GateSpec spec);

  Var forward(Tape& t, Var x, Mode mode);
  const GateSpec& spec() const { return spec_; }
  int64_t param_count() const { return 2LL * spec_.channels; }
  std::vector<std::pair<std::string, ParamPtr>> params() const;
  std::vector<std::pair<std::string, Tensor*>> buffers();

 private:
  GateSpec spec_;
  std::string name_;
  NormKind kind_gate_, kind_feat_;
  NormState norm_gate_, norm_feat_;
};

// GateBlock: gate -> mid conv -> gate, channel-preserving.
//   u = gate_in(x)            (c -> c/2)
//   m = mid(u)                (c/2 -> c/2, depthwise separable, shareable;
//                              applied twice when double_mid is set)
//   v = gate_out([u ; m])     (c -> c/2)
//   out = [v ; m]             (c)
class GateBlock {
 public:
  GateBlock(ParameterStore& store, const std::string& name, int channels,
            const std::string& mid_share, bool mid_separable, bool double_mid,
            GateSpec gate_template = {});

  Var forward(Tape& t, Var x, Mode mode);
  int channels() const { return channels_; }
  const Conv2d& mid() const { return *mid_; }
  std::vector<std::pair<std::string, ParamPtr>> params() const;
  std::vector<std::pair<std::string, Tensor*>> buffers();

 private:
  int channels_;
  bool double_mid_;
  std::unique_ptr<GateUnit> gate_in_, gate_out_;
  std::unique_ptr<Conv2d> mid_;
};

class Dense {
 public:
  Dense(ParameterStore& store, const std::string& name, int in, int out, bool bias = true,
        double init_scale = 1.0);

  Var forward(Tape& t, Var x) const;  // (rows,in) -> (rows,out)
  int64_t param_count() const;
  std::vector<std::pair<std::string, ParamPtr>> params() const;

 private:
  int in_, out_;
  bool bias_;
  ParamPtr w_, b_;
};

// One LSTM cell. Gates packed [i,f,o,g] along the second axis of the weights;
// c' = f*c + i*g, h' = o*tanh(c'). Forget bias starts at 1.
class LstmCell {
 public:
  LstmCell(ParameterStore& store, const std::string& name, int in, int units);

  // x (b,in), h and c (b,units) -> (h',c')
  std::pair<Var, Var> step(Tape& t, Var x, Var h, Var c) const;
  int units() const { return units_; }
  int64_t param_count() const;
  std::vector<std::pair<std::string, ParamPtr>> params() const;

 private:
  int in_, units_;
  ParamPtr wx_, wh_, b_;
};

// Forward LSTM pass concatenated with a backward pass computed on the
// time-reversed sequence and re-reversed. (T,b,in) -> (T,b,2*units).
class Blstm {
 public:
  Blstm(ParameterStore& store, const std::string& name, int in, int units);

  Var forward(Tape& t, Var seq) const;
  int units() const { return fw_.units(); }
  int64_t param_count() const { return fw_.param_count() + bw_.param_count(); }
  std::vector<std::pair<std::string, ParamPtr>> params() const;
  const LstmCell& fw() const { return fw_; }
  const LstmCell& bw() const { return bw_; }

 private:
  LstmCell fw_, bw_;
};

}  // namespace htr
