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

#include "htr/augment.hpp"

#include <algorithm>
#include <cmath>

namespace htr {

namespace {

void check_factors(const AugmentConfig& cfg) {
  if (!(cfg.contrast_gamma > 0.0 && cfg.scale_long > 0.0 && cfg.scale_short > 0.0 &&
        cfg.dilation_width >= 1.0 && cfg.dilation_height >= 1.0))
    throw ConfigError("augment: all factors must be strictly positive (dilations >= 1)");
}

LineImage scale_width(const LineImage& img, double factor) {
  const int64_t new_w = std::llround(static_cast<double>(img.width) * factor);
  if (new_w < 1)
    throw ShapeError("augment: scaling by " + std::to_string(factor) +
                     " would make the image narrower than one pixel");
  return resize_bilinear(img, img.height, new_w);
}

// Grayscale dilation of ink: ink is dark, so growing it is a running minimum
// over a 1xk (or kx1) window centered on each pixel.
LineImage min_filter(const LineImage& img, int64_t k, bool horizontal) {
  const int64_t r_lo = (k - 1) / 2, r_hi = k / 2;
  LineImage out = img;
  for (int64_t y = 0; y < img.height; ++y) {
    for (int64_t x = 0; x < img.width; ++x) {
      double m = img.at(y, x);
      for (int64_t d = -r_lo; d <= r_hi; ++d) {
        const int64_t yy = horizontal ? y : y + d;
        const int64_t xx = horizontal ? x + d : x;
        if (yy < 0 || yy >= img.height || xx < 0 || xx >= img.width) continue;
        m = std::min(m, img.at(yy, xx));
      }
      out.at(y, x) = m;
    }
  }
  return out;
}

}  // namespace

LabeledSample augment_sample(const LabeledSample& sample, int which, const AugmentConfig& cfg) {
  check_factors(cfg);
  LabeledSample out;
  out.label = sample.label;
  const LineImage& img = sample.image;
  switch (which) {
    case 1: {
      out.image = img;
      for (auto& p : out.image.pixels) p = std::pow(p, cfg.contrast_gamma);
      break;
    }
    case 2: {
      out.image = img;
      for (auto& p : out.image.pixels) p = 1.0 - p;
      break;
    }
    case 3:
      out.image = scale_width(img, cfg.scale_long);
      break;
    case 4:
      out.image = scale_width(img, cfg.scale_short);
      break;
    case 5:
      out.image = min_filter(img, std::llround(cfg.dilation_width), true);
      break;
    case 6:
      out.image = min_filter(img, std::llround(cfg.dilation_height), false);
      break;
    default:
      throw ConfigError("augment: transform id must be 1..6, got " + std::to_string(which));
  }
  return out;
}

std::vector<LabeledSample> expand_training_set(const std::vector<LabeledSample>& samples,
                                               const AugmentConfig& cfg) {
  if (samples.empty()) throw ConfigError("expand_training_set: empty input set");
  std::vector<LabeledSample> out;
  out.reserve(samples.size() * 7);
  for (const LabeledSample& s : samples) {
    out.push_back(s);
    for (int which = 1; which <= 6; ++which) out.push_back(augment_sample(s, which, cfg));
  }
  return out;
}

LineImage add_grid_background(const LineImage& img, const GridConfig& grid) {
  if (grid.line_spacing_px < 4)
    throw ConfigError("grid: line spacing must be at least 4px");
  if (!(grid.line_intensity >= 0.0 && grid.line_intensity <= 1.0))
    throw ConfigError("grid: line intensity must lie in [0,1]");
  const int64_t spacing = grid.line_spacing_px;
  auto on_line = [&](int64_t v) {
    int64_t r = (v - grid.phase) % spacing;
    if (r < 0) r += spacing;
    return r == 0;
  };
  LineImage out = img;
  for (int64_t y = 0; y < img.height; ++y) {
    const bool row_line = on_line(y);
    for (int64_t x = 0; x < img.width; ++x) {
      const bool line =
          row_line || (grid.orientation == GridConfig::Orientation::both && on_line(x));
      if (line) out.at(y, x) = std::min(out.at(y, x), grid.line_intensity);
    }
  }
  return out;
}

namespace {

constexpr int64_t kCellHeight = 32;
constexpr int64_t kGlyphAdvance = 16;
constexpr int64_t kMargin = 4;
constexpr double kInkLevel = 0.08;

Glyph random_glyph(uint64_t seed) {
  Rng rng(seed);
  Glyph g;
  const int n = static_cast<int>(rng.uniform_int(4, 6));
  for (int i = 0; i < n; ++i)
    g.points.emplace_back(rng.uniform(0.05, 0.95), rng.uniform(0.05, 0.95));
  g.thickness = rng.uniform(1.8, 2.6);
  return g;
}

void render_glyph(LineImage& img, const Glyph& g, int64_t x0, int64_t box_w, int64_t y0,
                  int64_t box_h, double thickness) {
  const double r = thickness * 0.5;
  for (size_t i = 0; i + 1 < g.points.size(); ++i) {
    const double ax = x0 + g.points[i].first * (box_w - 1);
    const double ay = y0 + g.points[i].second * (box_h - 1);
    const double bx = x0 + g.points[i + 1].first * (box_w - 1);
    const double by = y0 + g.points[i + 1].second * (box_h - 1);
    const int64_t lo_x = std::max<int64_t>(0, static_cast<int64_t>(std::floor(std::min(ax, bx) - r - 1)));
    const int64_t hi_x = std::min(img.width - 1, static_cast<int64_t>(std::ceil(std::max(ax, bx) + r + 1)));
    const int64_t lo_y = std::max<int64_t>(0, static_cast<int64_t>(std::floor(std::min(ay, by) - r - 1)));
    const int64_t hi_y = std::min(img.height - 1, static_cast<int64_t>(std::ceil(std::max(ay, by) + r + 1)));
    const double dx = bx - ax, dy = by - ay;
    const double len2 = dx * dx + dy * dy;
    for (int64_t y = lo_y; y <= hi_y; ++y) {
      for (int64_t x = lo_x; x <= hi_x; ++x) {
        const double px = static_cast<double>(x) - ax;
        const double py = static_cast<double>(y) - ay;
        double t = len2 > 0.0 ? std::clamp((px * dx + py * dy) / len2, 0.0, 1.0) : 0.0;
        const double ddx = px - t * dx, ddy = py - t * dy;
        const double dist = std::sqrt(ddx * ddx + ddy * ddy);
        double v;
        if (dist <= r) {
          v = kInkLevel;
        } else if (dist <= r + 1.0) {
          v = kInkLevel + (1.0 - kInkLevel) * (dist - r);  // 1px soft edge
        } else {
          continue;
        }
        img.at(y, x) = std::min(img.at(y, x), v);
      }
    }
  }
}

LineImage render_prototype(const Glyph& g) {
  LineImage img = LineImage::filled(kCellHeight, kGlyphAdvance, 1.0);
  render_glyph(img, g, 2, kGlyphAdvance - 4, 5, 22, g.thickness);
  return img;
}

}  // namespace

GlyphSet GlyphSet::build(const Vocabulary& vocab, uint64_t style_seed) {
  for (int attempt = 0; attempt < 16; ++attempt) {
    GlyphSet set;
    const uint64_t base = hash_combine(style_seed, static_cast<uint64_t>(attempt));
    for (uint32_t cp : vocab.symbols)
      set.glyphs.push_back(random_glyph(hash_combine(base, cp)));
    // every pair of prototypes must differ in at least one pixel
    std::vector<LineImage> protos;
    protos.reserve(set.glyphs.size());
    for (const Glyph& g : set.glyphs) protos.push_back(render_prototype(g));
    bool distinct = true;
    for (size_t i = 0; i < protos.size() && distinct; ++i)
      for (size_t j = i + 1; j < protos.size() && distinct; ++j)
        if (protos[i].pixels == protos[j].pixels) distinct = false;
    if (distinct) return set;
  }
  throw StateError("glyph generation failed to produce distinct prototypes");
}

LabeledSample synth_line(const std::vector<uint32_t>& text, const Vocabulary& vocab,
                         uint64_t seed) {
  const GlyphSet set = GlyphSet::build(vocab);
  std::vector<int> ids;
  ids.reserve(text.size());
  for (uint32_t cp : text) ids.push_back(vocab.index_of(cp));

  const int64_t width =
      std::max<int64_t>(2 * kMargin, 2 * kMargin + static_cast<int64_t>(text.size()) * kGlyphAdvance);
  LabeledSample out;
  out.label = text;
  out.image = LineImage::filled(kCellHeight, width, 1.0);

  Rng rng(hash_combine(seed, hash_str(utf8_encode(text))));
  for (size_t i = 0; i < ids.size(); ++i) {
    const Glyph& g = set.glyphs[static_cast<size_t>(ids[i])];
    const int64_t jitter = rng.uniform_int(0, 3);
    const double thick = g.thickness * rng.uniform(0.85, 1.25);
    const int64_t x0 = kMargin + static_cast<int64_t>(i) * kGlyphAdvance + jitter;
    render_glyph(out.image, g, x0, kGlyphAdvance - 4, 5, 22, thick);
  }
  return out;
}

}  // namespace htr
