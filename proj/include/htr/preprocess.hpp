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

#include <string>
#include <vector>

#include "htr/tensor.hpp"

namespace htr {

// Grayscale text-line image with intensities in [0,1]; 0 is ink, 1 is
// background.
struct LineImage {
  int64_t height = 0;
  int64_t width = 0;
  std::vector<double> pixels;  // row-major

  double& at(int64_t y, int64_t x) { return pixels[static_cast<size_t>(y * width + x)]; }
  double at(int64_t y, int64_t x) const { return pixels[static_cast<size_t>(y * width + x)]; }
  bool in_range() const;

  static LineImage filled(int64_t h, int64_t w, double v);
};

inline constexpr int64_t kFrameSize = 32;
inline constexpr int64_t kFrameStride = 4;

// Frames cut from one normalized line image; the frame index is the CTC time
// axis. frames is (T, 1, 32, 32); T = (W-32)/4 + 1.
struct FrameSequence {
  Tensor frames;
  int64_t source_width = 0;
  int64_t length() const { return frames.defined() ? frames.dim(0) : 0; }
};

// Bilinear resampling to the given size. Plain helper, also used by the
// augmentation scalers.
LineImage resize_bilinear(const LineImage& img, int64_t out_h, int64_t out_w);

// Scales to height 32 preserving aspect ratio, then pads on the right with
// background (1.0) to the next multiple of 32 (minimum 32). Idempotent.
LineImage normalize_height(const LineImage& img);

// 32x32 windows at stride 4 over a normalized image. Frame t covers columns
// [4t, 4t+32).
FrameSequence sliding_windows(const LineImage& img);

// Binary 8-bit PGM (P5), maxval 255; values map to [0,1] by v/255.
LineImage read_pgm(const std::string& path);
void write_pgm(const std::string& path, const LineImage& img);

}  // namespace htr
