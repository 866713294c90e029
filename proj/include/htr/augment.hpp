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

#include "htr/dataset.hpp"

namespace htr {

// Fixed transform magnitudes so the 7x expansion is reproducible. Every
// transform preserves the transcription label and the [0,1] pixel range.
struct AugmentConfig {
  double contrast_gamma = 0.5;  // sensible range [0.5, 2.0]
  double scale_long = 1.25;
  double scale_short = 0.8;
  double dilation_width = 3;   // structuring element length, px
  double dilation_height = 3;
  uint64_t seed = 0;
};

// Lined/grid paper pattern composited under the ink.
struct GridConfig {
  enum class Orientation { horizontal, both };
  int line_spacing_px = 16;
  double line_intensity = 0.6;  // < 1 for visible lines; 1 is an invisible grid
  Orientation orientation = Orientation::horizontal;
  int phase = 0;
};

// Applies exactly one transform:
//   1 contrast (pixel^gamma)        2 sign flip (1 - pixel)
//   3 long horizontal scale         4 short horizontal scale
//   5 ink dilation along x          6 ink dilation along y
LabeledSample augment_sample(const LabeledSample& sample, int which, const AugmentConfig& cfg);

// Originals plus one copy per transform: exactly 7x the input cardinality,
// deterministic.
std::vector<LabeledSample> expand_training_set(const std::vector<LabeledSample>& samples,
                                               const AugmentConfig& cfg);

// Darkest-wins compositing: out = min(img, pattern). Ink darker than the line
// intensity stays fully visible; never brightens a pixel.
LineImage add_grid_background(const LineImage& img, const GridConfig& grid);

// Procedural stroke glyphs: one fixed random polyline per vocabulary symbol,
// derived from the symbol codepoint, pairwise distinct by construction.
struct Glyph {
  std::vector<std::pair<double, double>> points;  // polyline in the unit box
  double thickness = 2.0;                         // px at cell scale
};

struct GlyphSet {
  std::vector<Glyph> glyphs;  // aligned with vocab.symbols
  static GlyphSet build(const Vocabulary& vocab, uint64_t style_seed = 0x67747230);
};

// Renders `text` as a 32px-high line image, deterministic per (text, seed);
// per-sample jitter in x-offset and stroke thickness.
LabeledSample synth_line(const std::vector<uint32_t>& text, const Vocabulary& vocab,
                         uint64_t seed);

}  // namespace htr
