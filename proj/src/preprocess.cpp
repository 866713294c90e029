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

#include "htr/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

namespace htr {

bool LineImage::in_range() const {
  for (double v : pixels)
    if (!(v >= 0.0 && v <= 1.0)) return false;
  return true;
}

LineImage LineImage::filled(int64_t h, int64_t w, double v) {
  LineImage img;
  img.height = h;
  img.width = w;
  img.pixels.assign(static_cast<size_t>(h * w), v);
  return img;
}

LineImage resize_bilinear(const LineImage& img, int64_t out_h, int64_t out_w) {
  if (img.height < 1 || img.width < 1 || out_h < 1 || out_w < 1)
    throw ShapeError("resize_bilinear: degenerate image " + std::to_string(img.height) + "x" +
                     std::to_string(img.width) + " -> " + std::to_string(out_h) + "x" +
                     std::to_string(out_w));
  LineImage out;
  out.height = out_h;
  out.width = out_w;
  out.pixels.resize(static_cast<size_t>(out_h * out_w));
  const double sy = static_cast<double>(img.height) / static_cast<double>(out_h);
  const double sx = static_cast<double>(img.width) / static_cast<double>(out_w);
  for (int64_t y = 0; y < out_h; ++y) {
    double fy = (static_cast<double>(y) + 0.5) * sy - 0.5;
    fy = std::clamp(fy, 0.0, static_cast<double>(img.height - 1));
    const int64_t y0 = static_cast<int64_t>(fy);
    const int64_t y1 = std::min(y0 + 1, img.height - 1);
    const double wy = fy - static_cast<double>(y0);
    for (int64_t x = 0; x < out_w; ++x) {
      double fx = (static_cast<double>(x) + 0.5) * sx - 0.5;
      fx = std::clamp(fx, 0.0, static_cast<double>(img.width - 1));
      const int64_t x0 = static_cast<int64_t>(fx);
      const int64_t x1 = std::min(x0 + 1, img.width - 1);
      const double wx = fx - static_cast<double>(x0);
      const double top = img.at(y0, x0) * (1.0 - wx) + img.at(y0, x1) * wx;
      const double bot = img.at(y1, x0) * (1.0 - wx) + img.at(y1, x1) * wx;
      double v = top * (1.0 - wy) + bot * wy;
      out.at(y, x) = std::clamp(v, 0.0, 1.0);
    }
  }
  return out;
}

LineImage normalize_height(const LineImage& img) {
  if (img.height < 1 || img.width < 1)
    throw ShapeError("normalize_height: degenerate image " + std::to_string(img.height) + "x" +
                     std::to_string(img.width));
  LineImage scaled;
  if (img.height == kFrameSize) {
    scaled = img;  // exact fixed point keeps the op idempotent bit for bit
  } else {
    const double ratio = static_cast<double>(kFrameSize) / static_cast<double>(img.height);
    const int64_t new_w =
        std::max<int64_t>(1, std::llround(static_cast<double>(img.width) * ratio));
    scaled = resize_bilinear(img, kFrameSize, new_w);
  }
  const int64_t padded_w =
      std::max(kFrameSize, (scaled.width + kFrameSize - 1) / kFrameSize * kFrameSize);
  if (padded_w == scaled.width) return scaled;
  LineImage out = LineImage::filled(kFrameSize, padded_w, 1.0);
  for (int64_t y = 0; y < kFrameSize; ++y)
    for (int64_t x = 0; x < scaled.width; ++x) out.at(y, x) = scaled.at(y, x);
  return out;
}

FrameSequence sliding_windows(const LineImage& img) {
  if (img.height != kFrameSize || img.width % kFrameSize != 0)
    throw StateError("sliding_windows: image must be normalized first (height 32, width a "
                     "multiple of 32), got " +
                     std::to_string(img.height) + "x" + std::to_string(img.width));
  const int64_t T = (img.width - kFrameSize) / kFrameStride + 1;
  FrameSequence seq;
  seq.source_width = img.width;
  seq.frames = Tensor({T, 1, kFrameSize, kFrameSize});
  for (int64_t t = 0; t < T; ++t) {
    const int64_t x0 = t * kFrameStride;
    for (int64_t y = 0; y < kFrameSize; ++y)
      for (int64_t x = 0; x < kFrameSize; ++x)
        seq.frames.at(t, 0, y, x) = img.at(y, x0 + x);
  }
  return seq;
}

LineImage read_pgm(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open image: " + path);
  auto next_token = [&]() -> std::string {
    std::string tok;
    int c;
    while ((c = is.get()) != EOF) {
      if (c == '#') {  // comment to end of line
        while ((c = is.get()) != EOF && c != '\n') {
        }
        continue;
      }
      if (std::isspace(c)) {
        if (!tok.empty()) return tok;
        continue;
      }
      tok.push_back(static_cast<char>(c));
    }
    if (tok.empty()) throw IoError("truncated PGM header: " + path);
    return tok;
  };
  if (next_token() != "P5") throw IoError("not a binary PGM (P5) file: " + path);
  const int64_t w = std::stoll(next_token());
  const int64_t h = std::stoll(next_token());
  const int64_t maxval = std::stoll(next_token());
  if (w < 1 || h < 1) throw IoError("degenerate PGM dimensions in " + path);
  if (maxval != 255) throw IoError("only 8-bit PGM (maxval 255) is supported: " + path);
  std::vector<unsigned char> raw(static_cast<size_t>(w * h));
  is.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (!is) throw IoError("truncated PGM pixel data: " + path);
  LineImage img;
  img.height = h;
  img.width = w;
  img.pixels.resize(raw.size());
  for (size_t i = 0; i < raw.size(); ++i) img.pixels[i] = static_cast<double>(raw[i]) / 255.0;
  return img;
}

void write_pgm(const std::string& path, const LineImage& img) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open image for writing: " + path);
  os << "P5\n" << img.width << " " << img.height << "\n255\n";
  std::vector<unsigned char> raw(img.pixels.size());
  for (size_t i = 0; i < raw.size(); ++i) {
    const double v = std::clamp(img.pixels[i], 0.0, 1.0);
    raw[i] = static_cast<unsigned char>(std::lround(v * 255.0));
  }
  os.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (!os) throw IoError("write failed: " + path);
}

}  // namespace htr
