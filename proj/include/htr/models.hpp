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

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "htr/layers.hpp"

namespace htr {

enum class Variant { baseline, cnn_dense, gcnn };
enum class Ablation { none, a1, a2, a3, a4, a5 };

std::string to_string(Variant v);
std::string to_string(Ablation a);
Variant variant_from_string(const std::string& s);
Ablation ablation_from_string(const std::string& s);

// Declarative architecture descriptor. The layer lists live in the canonical
// architecture config (configs/canonical_arch.txt, embedded at build time);
// this struct selects and scales them. Conv widths scale linearly with
// gcnn_max_channels/512 for the gcnn and blstm_units/256 for the baseline
// family, rounded to even counts.
struct ModelConfig {
  Variant variant = Variant::baseline;
  Ablation ablation = Ablation::none;
  int vocab_size = 100;  // n; the output layer always has n+1 units
  int blstm_units = 256;
  int gcnn_max_channels = 512;
  int gate_blocks = 2;
  double dropout = 0.2;
};

// Validates the pairing (ablations apply to the gcnn only) and returns the
// config with the ablation set.
ModelConfig apply_ablation(ModelConfig cfg, Ablation which);

struct SummaryRow {
  std::string name;
  std::string kind;
  std::string out_shape;  // at a reference input of T frames
  int64_t params = 0;     // parameters used by the layer (shared listed per use)
  std::string share_id;   // non-empty when the layer belongs to a share group
};

// total_params counts every unique parameter storage once: shared weights are
// deduplicated by share_id.
struct ModelSummary {
  std::vector<SummaryRow> rows;
  int64_t total_params = 0;
};

std::string summary_csv(const ModelSummary& s);

// A built network: maps a frame sequence (T,1,32,32) to per-frame class
// probabilities (T, n+1). Construction is config-driven; forward interprets
// the stage list, collecting residual taps for the gcnn fusion.
class Model {
 public:
  Var forward(Tape& t, const Tensor& frames, Mode mode);

  const ModelConfig& config() const { return cfg_; }
  int num_classes() const { return cfg_.vocab_size + 1; }

  // unique parameters (share groups deduplicated), sorted by share_id
  std::vector<ParamPtr> parameters() const;
  int64_t param_count() const;
  ModelSummary summarize() const;

  // parameters plus normalization running statistics, for checkpointing
  std::map<std::string, Tensor> named_tensors() const;
  void load_tensors(const std::map<std::string, Tensor>& tensors);

 private:
  friend Model build_model(const ModelConfig&, uint64_t, const std::string&);

  struct Stage;
  ModelConfig cfg_;
  std::vector<std::shared_ptr<Stage>> stages_;
  std::unique_ptr<Dense> output_;
  uint64_t dropout_seed_ = 0;
  std::unique_ptr<Rng> dropout_rng_;
};

// Builds a network from the canonical architecture config (or an explicit
// config text). init_seed drives the weight initialization.
Model build_model(const ModelConfig& cfg, uint64_t init_seed = 1234,
                  const std::string& arch_text = std::string());

// The embedded canonical architecture text.
const char* canonical_arch_text();

}  // namespace htr
