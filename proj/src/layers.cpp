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

#include "htr/layers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>

namespace htr {

int64_t ConvSpec::param_count() const {
  const int64_t k = static_cast<int64_t>(kh) * kw;
  int64_t n = separable
                  ? k * in_channels + static_cast<int64_t>(in_channels) * out_channels
                  : k * in_channels * out_channels;
  if (bias) n += out_channels;
  return n;
}

namespace {

struct ConvDims {
  int64_t n, cin, h, w;
  int64_t cout, kh, kw, sh, sw;
  int64_t ph, pw;  // top/left zero padding
  int64_t oh, ow;
};

ConvDims conv_dims(const Shape& xs, int64_t cout, int64_t kh, int64_t kw, int sh, int sw,
                   Padding pad, const char* op) {
  if (xs.size() != 4)
    throw ShapeError(std::string(op) + ": input must be (b,c,h,w), got " + shape_str(xs));
  ConvDims d;
  d.n = xs[0];
  d.cin = xs[1];
  d.h = xs[2];
  d.w = xs[3];
  d.cout = cout;
  d.kh = kh;
  d.kw = kw;
  d.sh = sh;
  d.sw = sw;
  if (pad == Padding::same) {
    d.oh = (d.h + sh - 1) / sh;
    d.ow = (d.w + sw - 1) / sw;
    d.ph = std::max<int64_t>(0, (d.oh - 1) * sh + kh - d.h) / 2;
    d.pw = std::max<int64_t>(0, (d.ow - 1) * sw + kw - d.w) / 2;
  } else {
    if (d.h < kh || d.w < kw)
      throw ShapeError(std::string(op) + ": empty output extent, input " + shape_str(xs) +
                       " smaller than kernel (" + std::to_string(kh) + "," +
                       std::to_string(kw) + ")");
    d.oh = (d.h - kh) / sh + 1;
    d.ow = (d.w - kw) / sw + 1;
    d.ph = d.pw = 0;
  }
  return d;
}

// Output index range [lo,hi) for which in = out*stride + k - p stays inside
// [0, in_extent).
inline std::pair<int64_t, int64_t> out_range(int64_t k, int64_t p, int64_t stride,
                                             int64_t in_extent, int64_t out_extent) {
  int64_t lo = 0;
  if (p - k > 0) lo = (p - k + stride - 1) / stride;
  const int64_t top = in_extent - 1 + p - k;
  int64_t hi = top < 0 ? 0 : std::min(out_extent, top / stride + 1);
  if (hi < lo) hi = lo;
  return {lo, hi};
}

void conv2d_forward(const Tensor& x, const Tensor& w, const double* bias, const ConvDims& d,
                    Tensor& out) {
  for (int64_t b = 0; b < d.n; ++b) {
    for (int64_t oc = 0; oc < d.cout; ++oc) {
      double* oplane = out.data() + (b * d.cout + oc) * d.oh * d.ow;
      if (bias) {
        const double bv = bias[oc];
        for (int64_t i = 0; i < d.oh * d.ow; ++i) oplane[i] = bv;
      }
      for (int64_t ic = 0; ic < d.cin; ++ic) {
        const double* iplane = x.data() + (b * d.cin + ic) * d.h * d.w;
        const double* wk = w.data() + (oc * d.cin + ic) * d.kh * d.kw;
        for (int64_t ki = 0; ki < d.kh; ++ki) {
          const auto [ohlo, ohhi] = out_range(ki, d.ph, d.sh, d.h, d.oh);
          for (int64_t kj = 0; kj < d.kw; ++kj) {
            const double wv = wk[ki * d.kw + kj];
            if (wv == 0.0) continue;
            const auto [owlo, owhi] = out_range(kj, d.pw, d.sw, d.w, d.ow);
            for (int64_t oy = ohlo; oy < ohhi; ++oy) {
              const int64_t iy = oy * d.sh + ki - d.ph;
              const double* irow = iplane + iy * d.w + kj - d.pw;
              double* orow = oplane + oy * d.ow;
              if (d.sw == 1) {
                for (int64_t ox = owlo; ox < owhi; ++ox) orow[ox] += wv * irow[ox];
              } else {
                for (int64_t ox = owlo; ox < owhi; ++ox) orow[ox] += wv * irow[ox * d.sw];
              }
            }
          }
        }
      }
    }
  }
}

void conv2d_backward(const Tensor& x, const Tensor& w, const Tensor& g, const ConvDims& d,
                     Tensor* dx, Tensor* dw, Tensor* db) {
  for (int64_t b = 0; b < d.n; ++b) {
    for (int64_t oc = 0; oc < d.cout; ++oc) {
      const double* gplane = g.data() + (b * d.cout + oc) * d.oh * d.ow;
      if (db) {
        double acc = 0.0;
        for (int64_t i = 0; i < d.oh * d.ow; ++i) acc += gplane[i];
        (*db)[oc] += acc;
      }
      for (int64_t ic = 0; ic < d.cin; ++ic) {
        const double* iplane = x.data() + (b * d.cin + ic) * d.h * d.w;
        const double* wk = w.data() + (oc * d.cin + ic) * d.kh * d.kw;
        double* dwk = dw ? dw->data() + (oc * d.cin + ic) * d.kh * d.kw : nullptr;
        double* diplane = dx ? dx->data() + (b * d.cin + ic) * d.h * d.w : nullptr;
        for (int64_t ki = 0; ki < d.kh; ++ki) {
          const auto [ohlo, ohhi] = out_range(ki, d.ph, d.sh, d.h, d.oh);
          for (int64_t kj = 0; kj < d.kw; ++kj) {
            const auto [owlo, owhi] = out_range(kj, d.pw, d.sw, d.w, d.ow);
            const double wv = wk[ki * d.kw + kj];
            double wacc = 0.0;
            for (int64_t oy = ohlo; oy < ohhi; ++oy) {
              const int64_t iy = oy * d.sh + ki - d.ph;
              const double* irow = iplane + iy * d.w + kj - d.pw;
              const double* grow = gplane + oy * d.ow;
              if (dw) {
                if (d.sw == 1) {
                  for (int64_t ox = owlo; ox < owhi; ++ox) wacc += irow[ox] * grow[ox];
                } else {
                  for (int64_t ox = owlo; ox < owhi; ++ox) wacc += irow[ox * d.sw] * grow[ox];
                }
              }
              if (dx && wv != 0.0) {
                double* dirow = diplane + iy * d.w + kj - d.pw;
                if (d.sw == 1) {
                  for (int64_t ox = owlo; ox < owhi; ++ox) dirow[ox] += wv * grow[ox];
                } else {
                  for (int64_t ox = owlo; ox < owhi; ++ox) dirow[ox * d.sw] += wv * grow[ox];
                }
              }
            }
            if (dwk) dwk[ki * d.kw + kj] += wacc;
          }
        }
      }
    }
  }
}

void init_normal(Tensor& t, Rng& rng, double stddev) {
  for (auto& v : t.vec()) v = rng.normal(0.0, stddev);
}

}  // namespace

Var conv2d_op(Var x, Var w, std::optional<Var> bias, int sh, int sw, Padding pad) {
  Tape& t = *x.tape;
  const Tensor& xv = x.value();
  const Tensor& wv = w.value();
  if (wv.rank() != 4)
    throw ShapeError("conv2d: weight must be (out,in,kh,kw), got " + shape_str(wv.shape()));
  if (xv.rank() != 4)
    throw ShapeError("conv2d: input must be (b,c,h,w), got " + shape_str(xv.shape()));
  if (xv.dim(1) != wv.dim(1))
    throw ShapeError("conv2d: channel mismatch, input " + shape_str(xv.shape()) +
                     " vs weight " + shape_str(wv.shape()));
  const ConvDims d =
      conv_dims(xv.shape(), wv.dim(0), wv.dim(2), wv.dim(3), sh, sw, pad, "conv2d");
  const double* bptr = nullptr;
  if (bias) {
    const Tensor& bv = bias->value();
    if (bv.rank() != 1 || bv.dim(0) != d.cout)
      throw ShapeError("conv2d: bias shape " + shape_str(bv.shape()) + " vs out channels " +
                       std::to_string(d.cout));
    bptr = bv.data();
  }
  Tensor out({d.n, d.cout, d.oh, d.ow});
  conv2d_forward(xv, wv, bptr, d, out);
  const int ix = x.id, iw = w.id, ib = bias ? bias->id : -1;
  std::vector<int> parents = {ix, iw};
  if (ib >= 0) parents.push_back(ib);
  return t.make_node(std::move(out), parents, [ix, iw, ib, d](Tape& t, int self) {
    const Tensor& g = *t.grad(self);
    const bool nx = t.needs_grad(ix), nw = t.needs_grad(iw);
    const bool nb = ib >= 0 && t.needs_grad(ib);
    conv2d_backward(t.value(ix), t.value(iw), g, d, nx ? &t.grad_acc(ix) : nullptr,
                    nw ? &t.grad_acc(iw) : nullptr, nb ? &t.grad_acc(ib) : nullptr);
  });
}

Var depthwise_conv2d_op(Var x, Var w, int sh, int sw, Padding pad) {
  Tape& t = *x.tape;
  const Tensor& xv = x.value();
  const Tensor& wv = w.value();
  if (wv.rank() != 3)
    throw ShapeError("depthwise_conv2d: weight must be (c,kh,kw), got " +
                     shape_str(wv.shape()));
  if (xv.rank() != 4)
    throw ShapeError("depthwise_conv2d: input must be (b,c,h,w), got " +
                     shape_str(xv.shape()));
  if (xv.dim(1) != wv.dim(0))
    throw ShapeError("depthwise_conv2d: channel mismatch, input " + shape_str(xv.shape()) +
                     " vs weight " + shape_str(wv.shape()));
  ConvDims d = conv_dims(xv.shape(), xv.dim(1), wv.dim(1), wv.dim(2), sh, sw, pad,
                         "depthwise_conv2d");
  Tensor out({d.n, d.cout, d.oh, d.ow});
  // same loops as conv2d restricted to oc == ic
  for (int64_t b = 0; b < d.n; ++b) {
    for (int64_t c = 0; c < d.cin; ++c) {
      double* oplane = out.data() + (b * d.cin + c) * d.oh * d.ow;
      const double* iplane = xv.data() + (b * d.cin + c) * d.h * d.w;
      const double* wk = wv.data() + c * d.kh * d.kw;
      for (int64_t ki = 0; ki < d.kh; ++ki) {
        const auto [ohlo, ohhi] = out_range(ki, d.ph, d.sh, d.h, d.oh);
        for (int64_t kj = 0; kj < d.kw; ++kj) {
          const double wval = wk[ki * d.kw + kj];
          if (wval == 0.0) continue;
          const auto [owlo, owhi] = out_range(kj, d.pw, d.sw, d.w, d.ow);
          for (int64_t oy = ohlo; oy < ohhi; ++oy) {
            const int64_t iy = oy * d.sh + ki - d.ph;
            const double* irow = iplane + iy * d.w + kj - d.pw;
            double* orow = oplane + oy * d.ow;
            for (int64_t ox = owlo; ox < owhi; ++ox) orow[ox] += wval * irow[ox * d.sw];
          }
        }
      }
    }
  }
  const int ix = x.id, iw = w.id;
  return t.make_node(std::move(out), {ix, iw}, [ix, iw, d](Tape& t, int self) {
    const Tensor& g = *t.grad(self);
    const Tensor& xv = t.value(ix);
    const Tensor& wv = t.value(iw);
    const bool nx = t.needs_grad(ix), nw = t.needs_grad(iw);
    Tensor* dx = nx ? &t.grad_acc(ix) : nullptr;
    Tensor* dw = nw ? &t.grad_acc(iw) : nullptr;
    for (int64_t b = 0; b < d.n; ++b) {
      for (int64_t c = 0; c < d.cin; ++c) {
        const double* gplane = g.data() + (b * d.cin + c) * d.oh * d.ow;
        const double* iplane = xv.data() + (b * d.cin + c) * d.h * d.w;
        const double* wk = wv.data() + c * d.kh * d.kw;
        double* dwk = dw ? dw->data() + c * d.kh * d.kw : nullptr;
        double* diplane = dx ? dx->data() + (b * d.cin + c) * d.h * d.w : nullptr;
        for (int64_t ki = 0; ki < d.kh; ++ki) {
          const auto [ohlo, ohhi] = out_range(ki, d.ph, d.sh, d.h, d.oh);
          for (int64_t kj = 0; kj < d.kw; ++kj) {
            const auto [owlo, owhi] = out_range(kj, d.pw, d.sw, d.w, d.ow);
            const double wval = wk[ki * d.kw + kj];
            double wacc = 0.0;
            for (int64_t oy = ohlo; oy < ohhi; ++oy) {
              const int64_t iy = oy * d.sh + ki - d.ph;
              const double* irow = iplane + iy * d.w + kj - d.pw;
              const double* grow = gplane + oy * d.ow;
              double* dirow = diplane ? diplane + iy * d.w + kj - d.pw : nullptr;
              for (int64_t ox = owlo; ox < owhi; ++ox) {
                if (dwk) wacc += irow[ox * d.sw] * grow[ox];
                if (dirow) dirow[ox * d.sw] += wval * grow[ox];
              }
            }
            if (dwk) dwk[ki * d.kw + kj] += wacc;
          }
        }
      }
    }
  });
}

Var maxpool2d_op(Var x, int wh, int ww, int sh, int sw) {
  Tape& t = *x.tape;
  const Tensor& xv = x.value();
  if (xv.rank() != 4)
    throw ShapeError("maxpool2d: input must be (b,c,h,w), got " + shape_str(xv.shape()));
  const int64_t n = xv.dim(0), c = xv.dim(1), h = xv.dim(2), w = xv.dim(3);
  if (h < wh || w < ww)
    throw ShapeError("maxpool2d: input " + shape_str(xv.shape()) + " smaller than window (" +
                     std::to_string(wh) + "," + std::to_string(ww) + ")");
  const int64_t oh = (h - wh) / sh + 1;
  const int64_t ow = (w - ww) / sw + 1;
  Tensor out({n, c, oh, ow});
  auto argmax = std::make_shared<std::vector<int64_t>>(static_cast<size_t>(n * c * oh * ow));
  int64_t oi = 0;
  for (int64_t b = 0; b < n; ++b) {
    for (int64_t ch = 0; ch < c; ++ch) {
      const double* iplane = xv.data() + (b * c + ch) * h * w;
      const int64_t ibase = (b * c + ch) * h * w;
      for (int64_t oy = 0; oy < oh; ++oy) {
        for (int64_t ox = 0; ox < ow; ++ox, ++oi) {
          double best = -std::numeric_limits<double>::infinity();
          int64_t besti = -1;
          for (int64_t wy = 0; wy < wh; ++wy) {
            const int64_t iy = oy * sh + wy;
            for (int64_t wx = 0; wx < ww; ++wx) {
              const int64_t ix = ox * sw + wx;
              const double v = iplane[iy * w + ix];
              if (v > best) {  // strict: first maximum in row-major order wins
                best = v;
                besti = ibase + iy * w + ix;
              }
            }
          }
          out[oi] = best;
          (*argmax)[static_cast<size_t>(oi)] = besti;
        }
      }
    }
  }
  const int ix = x.id;
  return t.make_node(std::move(out), {ix}, [ix, argmax](Tape& t, int self) {
    if (!t.needs_grad(ix)) return;
    const Tensor& g = *t.grad(self);
    Tensor& dx = t.grad_acc(ix);
    for (int64_t i = 0; i < g.numel(); ++i) dx[(*argmax)[static_cast<size_t>(i)]] += g[i];
  });
}

NormState make_norm_state(ParameterStore& store, const std::string& name, int channels) {
  NormState st;
  st.gamma = store.get_or_create(name + ".gamma", {channels},
                                 [](Rng&, Tensor& t) { for (auto& v : t.vec()) v = 1.0; });
  st.beta = store.get_or_create(name + ".beta", {channels}, nullptr);
  st.running_mean = Tensor({channels});
  st.running_var = Tensor::full({channels}, 1.0);
  return st;
}

namespace {

Var batchnorm(Var x, NormState& st, Mode mode) {
  Tape& t = *x.tape;
  const Tensor& xv = x.value();
  if (xv.rank() != 4)
    throw ShapeError("normalize: input must be (b,c,h,w), got " + shape_str(xv.shape()));
  const int64_t n = xv.dim(0), c = xv.dim(1), hw = xv.dim(2) * xv.dim(3);
  if (c != st.gamma->value.dim(0))
    throw ShapeError("normalize: channel mismatch, input " + shape_str(xv.shape()) +
                     " vs affine " + shape_str(st.gamma->value.shape()));
  const int64_t m = n * hw;
  Var gamma = t.param(st.gamma);
  Var beta = t.param(st.beta);
  const double eps = st.epsilon;

  Tensor mu({c}), inv({c});
  if (mode == Mode::train) {
    if (m < 2) throw StateError("normalize: batch statistics need at least 2 values per channel");
    Tensor var({c});
    for (int64_t ch = 0; ch < c; ++ch) {
      double s = 0.0;
      for (int64_t b = 0; b < n; ++b) {
        const double* p = xv.data() + (b * c + ch) * hw;
        for (int64_t i = 0; i < hw; ++i) s += p[i];
      }
      const double mean = s / static_cast<double>(m);
      double v = 0.0;
      for (int64_t b = 0; b < n; ++b) {
        const double* p = xv.data() + (b * c + ch) * hw;
        for (int64_t i = 0; i < hw; ++i) {
          const double d = p[i] - mean;
          v += d * d;
        }
      }
      mu[ch] = mean;
      var[ch] = v / static_cast<double>(m);
      inv[ch] = 1.0 / std::sqrt(var[ch] + eps);
    }
    for (int64_t ch = 0; ch < c; ++ch) {
      st.running_mean[ch] = (1.0 - st.momentum) * st.running_mean[ch] + st.momentum * mu[ch];
      st.running_var[ch] = (1.0 - st.momentum) * st.running_var[ch] + st.momentum * var[ch];
    }
  } else {
    for (int64_t ch = 0; ch < c; ++ch) {
      if (st.running_var[ch] < 0.0)
        throw StateError("normalize: negative running variance (internal corruption)");
      mu[ch] = st.running_mean[ch];
      inv[ch] = 1.0 / std::sqrt(st.running_var[ch] + eps);
    }
  }

  const Tensor& gv = gamma.value();
  const Tensor& bv = beta.value();
  Tensor out(xv.shape());
  for (int64_t b = 0; b < n; ++b) {
    for (int64_t ch = 0; ch < c; ++ch) {
      const double* p = xv.data() + (b * c + ch) * hw;
      double* o = out.data() + (b * c + ch) * hw;
      const double sc = gv[ch] * inv[ch];
      const double off = bv[ch] - mu[ch] * sc;
      for (int64_t i = 0; i < hw; ++i) o[i] = p[i] * sc + off;
    }
  }

  const int ix = x.id, ig = gamma.id, ib = beta.id;
  const bool train = mode == Mode::train;
  return t.make_node(std::move(out), {ix, ig, ib},
                     [ix, ig, ib, mu, inv, n, c, hw, m, train](Tape& t, int self) {
    const Tensor& g = *t.grad(self);
    const Tensor& xv = t.value(ix);
    const Tensor& gv = t.value(ig);
    for (int64_t ch = 0; ch < c; ++ch) {
      // per-channel reductions over (b,h,w)
      double sum_g = 0.0, sum_gx = 0.0;
      for (int64_t b = 0; b < n; ++b) {
        const double* gp = g.data() + (b * c + ch) * hw;
        const double* xp = xv.data() + (b * c + ch) * hw;
        for (int64_t i = 0; i < hw; ++i) {
          sum_g += gp[i];
          sum_gx += gp[i] * (xp[i] - mu[ch]) * inv[ch];
        }
      }
      if (t.needs_grad(ig)) t.grad_acc(ig)[ch] += sum_gx;
      if (t.needs_grad(ib)) t.grad_acc(ib)[ch] += sum_g;
      if (t.needs_grad(ix)) {
        Tensor& dx = t.grad_acc(ix);
        const double sc = gv[ch] * inv[ch];
        if (train) {
          const double k1 = sum_g / static_cast<double>(m);
          const double k2 = sum_gx / static_cast<double>(m);
          for (int64_t b = 0; b < n; ++b) {
            const double* gp = g.data() + (b * c + ch) * hw;
            const double* xp = xv.data() + (b * c + ch) * hw;
            double* dp = dx.data() + (b * c + ch) * hw;
            for (int64_t i = 0; i < hw; ++i) {
              const double xhat = (xp[i] - mu[ch]) * inv[ch];
              dp[i] += sc * (gp[i] - k1 - xhat * k2);
            }
          }
        } else {
          for (int64_t b = 0; b < n; ++b) {
            const double* gp = g.data() + (b * c + ch) * hw;
            double* dp = dx.data() + (b * c + ch) * hw;
            for (int64_t i = 0; i < hw; ++i) dp[i] += sc * gp[i];
          }
        }
      }
    }
  });
}

Var layernorm(Var x, NormState& st) {
  Tape& t = *x.tape;
  const Tensor& xv = x.value();
  if (xv.rank() != 4)
    throw ShapeError("normalize: input must be (b,c,h,w), got " + shape_str(xv.shape()));
  const int64_t n = xv.dim(0), c = xv.dim(1), h = xv.dim(2), w = xv.dim(3);
  if (c != st.gamma->value.dim(0))
    throw ShapeError("normalize: channel mismatch, input " + shape_str(xv.shape()) +
                     " vs affine " + shape_str(st.gamma->value.shape()));
  const int64_t hw = h * w;
  Var gamma = t.param(st.gamma);
  Var beta = t.param(st.beta);
  const double eps = st.epsilon;

  // statistics across channels at each (b,y,x)
  Tensor mu({n, h, w}), inv({n, h, w});
  for (int64_t b = 0; b < n; ++b) {
    for (int64_t i = 0; i < hw; ++i) {
      double s = 0.0;
      for (int64_t ch = 0; ch < c; ++ch) s += xv[(b * c + ch) * hw + i];
      const double mean = s / static_cast<double>(c);
      double v = 0.0;
      for (int64_t ch = 0; ch < c; ++ch) {
        const double d = xv[(b * c + ch) * hw + i] - mean;
        v += d * d;
      }
      mu[b * hw + i] = mean;
      inv[b * hw + i] = 1.0 / std::sqrt(v / static_cast<double>(c) + eps);
    }
  }

  const Tensor& gv = gamma.value();
  const Tensor& bv = beta.value();
  Tensor out(xv.shape());
  for (int64_t b = 0; b < n; ++b)
    for (int64_t ch = 0; ch < c; ++ch)
      for (int64_t i = 0; i < hw; ++i) {
        const int64_t xi = (b * c + ch) * hw + i;
        out[xi] = gv[ch] * (xv[xi] - mu[b * hw + i]) * inv[b * hw + i] + bv[ch];
      }

  const int ix = x.id, ig = gamma.id, ib = beta.id;
  return t.make_node(std::move(out), {ix, ig, ib},
                     [ix, ig, ib, mu, inv, n, c, hw](Tape& t, int self) {
    const Tensor& g = *t.grad(self);
    const Tensor& xv = t.value(ix);
    const Tensor& gv = t.value(ig);
    Tensor* dgamma = t.needs_grad(ig) ? &t.grad_acc(ig) : nullptr;
    Tensor* dbeta = t.needs_grad(ib) ? &t.grad_acc(ib) : nullptr;
    Tensor* dx = t.needs_grad(ix) ? &t.grad_acc(ix) : nullptr;
    for (int64_t b = 0; b < n; ++b) {
      for (int64_t i = 0; i < hw; ++i) {
        const double m = mu[b * hw + i];
        const double iv = inv[b * hw + i];
        double mean_h = 0.0, mean_hx = 0.0;
        for (int64_t ch = 0; ch < c; ++ch) {
          const int64_t xi = (b * c + ch) * hw + i;
          const double xhat = (xv[xi] - m) * iv;
          const double hh = g[xi] * gv[ch];
          mean_h += hh;
          mean_hx += hh * xhat;
          if (dgamma) (*dgamma)[ch] += g[xi] * xhat;
          if (dbeta) (*dbeta)[ch] += g[xi];
        }
        if (dx) {
          mean_h /= static_cast<double>(c);
          mean_hx /= static_cast<double>(c);
          for (int64_t ch = 0; ch < c; ++ch) {
            const int64_t xi = (b * c + ch) * hw + i;
            const double xhat = (xv[xi] - m) * iv;
            (*dx)[xi] += iv * (g[xi] * gv[ch] - mean_h - xhat * mean_hx);
          }
        }
      }
    }
  });
}

}  // namespace

Var normalize(Var x, NormState& state, NormKind kind, Mode mode) {
  return kind == NormKind::batch ? batchnorm(x, state, mode) : layernorm(x, state);
}

Var dropout_op(Var x, double rate, Mode mode, Rng& rng) {
  if (rate < 0.0 || rate >= 1.0)
    throw ConfigError("dropout rate must lie in [0,1), got " + std::to_string(rate));
  if (mode == Mode::eval || rate == 0.0) return x;
  Tape& t = *x.tape;
  const Tensor& xv = x.value();
  const double keep_scale = 1.0 / (1.0 - rate);
  auto mask = std::make_shared<Tensor>(xv.shape());
  Tensor out(xv.shape());
  for (int64_t i = 0; i < xv.numel(); ++i) {
    const double m = rng.uniform() >= rate ? keep_scale : 0.0;
    (*mask)[i] = m;
    out[i] = xv[i] * m;
  }
  const int ix = x.id;
  return t.make_node(std::move(out), {ix}, [ix, mask](Tape& t, int self) {
    if (!t.needs_grad(ix)) return;
    const Tensor& g = *t.grad(self);
    Tensor& dx = t.grad_acc(ix);
    for (int64_t i = 0; i < g.numel(); ++i) dx[i] += g[i] * (*mask)[i];
  });
}

GateUnit::GateUnit(ParameterStore& store, const std::string& name, GateSpec spec)
    : spec_(spec), name_(name) {
  if (spec_.channels <= 0 || spec_.channels % 2 != 0)
    throw ShapeError("gate '" + name + "': the 2-part split requires an even channel count, got " +
                     std::to_string(spec_.channels));
  kind_gate_ = spec_.norm_kind.value_or(NormKind::batch);
  kind_feat_ = spec_.norm_kind.value_or(NormKind::layer);
  const int half = spec_.channels / 2;
  norm_gate_ = make_norm_state(store, name + ".ng", half);
  norm_feat_ = make_norm_state(store, name + ".nf", half);
}

Var GateUnit::forward(Tape& t, Var x, Mode mode) {
  const Tensor& xv = x.value();
  if (xv.rank() != 4 || xv.dim(1) != spec_.channels)
    throw ShapeError("gate '" + name_ + "': expected " + std::to_string(spec_.channels) +
                     " channels, got input " + shape_str(xv.shape()));
  const int64_t half = spec_.channels / 2;
  auto halves = ops::split(x, 1, {half, half});
  Var gate_act = spec_.swap_activations ? ops::sigmoid(halves[0]) : ops::tanh(halves[0]);
  Var feat_act = spec_.swap_activations ? ops::tanh(halves[1]) : ops::sigmoid(halves[1]);
  Var gate_n = normalize(gate_act, norm_gate_, kind_gate_, mode);
  Var feat_n = normalize(feat_act, norm_feat_, kind_feat_, mode);
  return ops::mul(gate_n, feat_n);
}

std::vector<std::pair<std::string, ParamPtr>> GateUnit::params() const {
  return {{norm_gate_.gamma->share_id, norm_gate_.gamma},
          {norm_gate_.beta->share_id, norm_gate_.beta},
          {norm_feat_.gamma->share_id, norm_feat_.gamma},
          {norm_feat_.beta->share_id, norm_feat_.beta}};
}

std::vector<std::pair<std::string, Tensor*>> GateUnit::buffers() {
  return {{name_ + ".ng.rmean", &norm_gate_.running_mean},
          {name_ + ".ng.rvar", &norm_gate_.running_var},
          {name_ + ".nf.rmean", &norm_feat_.running_mean},
          {name_ + ".nf.rvar", &norm_feat_.running_var}};
}

GateBlock::GateBlock(ParameterStore& store, const std::string& name, int channels,
                     const std::string& mid_share, bool mid_separable, bool double_mid,
                     GateSpec gate_template)
    : channels_(channels), double_mid_(double_mid) {
  if (channels <= 0 || channels % 2 != 0)
    throw ShapeError("gate block '" + name +
                     "': the 2-part split requires an even channel count, got " +
                     std::to_string(channels));
  GateSpec gs = gate_template;
  gs.channels = channels;
  gate_in_ = std::make_unique<GateUnit>(store, name + ".ga", gs);
  gate_out_ = std::make_unique<GateUnit>(store, name + ".gb", gs);
  ConvSpec mid;
  mid.in_channels = mid.out_channels = channels / 2;
  mid.separable = mid_separable;
  mid.share_id = mid_share;
  mid_ = std::make_unique<Conv2d>(store, name + ".mid", mid);
}

Var GateBlock::forward(Tape& t, Var x, Mode mode) {
  Var u = gate_in_->forward(t, x, mode);
  Var m = mid_->forward(t, u);
  if (double_mid_) m = mid_->forward(t, m);
  Var v = gate_out_->forward(t, ops::concat({u, m}, 1), mode);
  return ops::concat({v, m}, 1);
}

std::vector<std::pair<std::string, ParamPtr>> GateBlock::params() const {
  auto out = gate_in_->params();
  for (auto& p : gate_out_->params()) out.push_back(p);
  for (auto& p : mid_->params()) out.push_back(p);
  return out;
}

std::vector<std::pair<std::string, Tensor*>> GateBlock::buffers() {
  auto out = gate_in_->buffers();
  for (auto& p : gate_out_->buffers()) out.push_back(p);
  return out;
}

Conv2d::Conv2d(ParameterStore& store, const std::string& name, ConvSpec spec) : spec_(spec) {
  if (spec_.in_channels <= 0 || spec_.out_channels <= 0 || spec_.kh < 1 || spec_.kw < 1)
    throw ConfigError("conv '" + name + "': invalid spec");
  key_ = spec_.share_id.empty() ? name : spec_.share_id;
  const int cin = spec_.in_channels, cout = spec_.out_channels;
  const int kh = spec_.kh, kw = spec_.kw;
  int64_t allocated = 0;
  if (spec_.separable) {
    dw_ = store.get_or_create(key_ + ".dw", {cin, kh, kw}, [kh, kw](Rng& r, Tensor& t) {
      init_normal(t, r, std::sqrt(2.0 / (kh * kw)));
    });
    pw_ = store.get_or_create(key_ + ".pw", {cout, cin, 1, 1}, [cin](Rng& r, Tensor& t) {
      init_normal(t, r, std::sqrt(2.0 / cin));
    });
    allocated = dw_->numel() + pw_->numel();
  } else {
    w_ = store.get_or_create(key_ + ".w", {cout, cin, kh, kw}, [cin, kh, kw](Rng& r, Tensor& t) {
      init_normal(t, r, std::sqrt(2.0 / (cin * kh * kw)));
    });
    allocated = w_->numel();
  }
  if (spec_.bias) {
    b_ = store.get_or_create(key_ + ".b", {cout}, nullptr);
    allocated += b_->numel();
  }
  if (allocated != spec_.param_count())
    throw StateError("conv '" + name + "': allocated " + std::to_string(allocated) +
                     " parameters but the spec formula gives " +
                     std::to_string(spec_.param_count()));
}

Var Conv2d::forward(Tape& t, Var x) const {
  const Tensor& xv = x.value();
  if (xv.rank() != 4 || xv.dim(1) != spec_.in_channels)
    throw ShapeError("conv '" + key_ + "': expected " + std::to_string(spec_.in_channels) +
                     " input channels, got " + shape_str(xv.shape()));
  std::optional<Var> bias;
  if (b_) bias = t.param(b_);
  if (spec_.separable) {
    Var mid = depthwise_conv2d_op(x, t.param(dw_), spec_.sh, spec_.sw, spec_.padding);
    return conv2d_op(mid, t.param(pw_), bias, 1, 1, Padding::same);
  }
  return conv2d_op(x, t.param(w_), bias, spec_.sh, spec_.sw, spec_.padding);
}

std::vector<std::pair<std::string, ParamPtr>> Conv2d::params() const {
  std::vector<std::pair<std::string, ParamPtr>> out;
  if (spec_.separable) {
    out.emplace_back(dw_->share_id, dw_);
    out.emplace_back(pw_->share_id, pw_);
  } else {
    out.emplace_back(w_->share_id, w_);
  }
  if (b_) out.emplace_back(b_->share_id, b_);
  return out;
}

Dense::Dense(ParameterStore& store, const std::string& name, int in, int out, bool bias,
             double init_scale)
    : in_(in), out_(out), bias_(bias) {
  w_ = store.get_or_create(name + ".w", {in, out}, [in, init_scale](Rng& r, Tensor& t) {
    init_normal(t, r, init_scale * std::sqrt(1.0 / in));
  });
  if (bias_) b_ = store.get_or_create(name + ".b", {out}, nullptr);
}

Var Dense::forward(Tape& t, Var x) const {
  Var y = ops::matmul(x, t.param(w_));
  if (bias_) y = ops::add_rowvec(y, t.param(b_));
  return y;
}

int64_t Dense::param_count() const {
  return static_cast<int64_t>(in_) * out_ + (bias_ ? out_ : 0);
}

std::vector<std::pair<std::string, ParamPtr>> Dense::params() const {
  std::vector<std::pair<std::string, ParamPtr>> out{{w_->share_id, w_}};
  if (b_) out.emplace_back(b_->share_id, b_);
  return out;
}

LstmCell::LstmCell(ParameterStore& store, const std::string& name, int in, int units)
    : in_(in), units_(units) {
  const double stddev = std::sqrt(1.0 / (in + units));
  wx_ = store.get_or_create(name + ".wx", {in, 4 * units}, [stddev](Rng& r, Tensor& t) {
    init_normal(t, r, stddev);
  });
  wh_ = store.get_or_create(name + ".wh", {units, 4 * units}, [stddev](Rng& r, Tensor& t) {
    init_normal(t, r, stddev);
  });
  b_ = store.get_or_create(name + ".b", {4 * units}, [units](Rng&, Tensor& t) {
    for (int i = units; i < 2 * units; ++i) t[i] = 1.0;  // forget gate bias
  });
}

std::pair<Var, Var> LstmCell::step(Tape& t, Var x, Var h, Var c) const {
  const int64_t u = units_;
  if (x.value().rank() != 2 || x.value().dim(1) != in_)
    throw ShapeError("lstm_step: input shape " + shape_str(x.value().shape()) +
                     " does not match in=" + std::to_string(in_));
  if (h.value().shape() != Shape{x.value().dim(0), u} ||
      c.value().shape() != Shape{x.value().dim(0), u})
    throw ShapeError("lstm_step: state shapes " + shape_str(h.value().shape()) + "/" +
                     shape_str(c.value().shape()) + " do not match units=" + std::to_string(u));
  Var z = ops::add_rowvec(ops::add(ops::matmul(x, t.param(wx_)), ops::matmul(h, t.param(wh_))),
                          t.param(b_));
  auto gates = ops::split(z, 1, {u, u, u, u});
  Var i = ops::sigmoid(gates[0]);
  Var f = ops::sigmoid(gates[1]);
  Var o = ops::sigmoid(gates[2]);
  Var g = ops::tanh(gates[3]);
  Var c2 = ops::add(ops::mul(f, c), ops::mul(i, g));
  Var h2 = ops::mul(o, ops::tanh(c2));
  return {h2, c2};
}

int64_t LstmCell::param_count() const {
  return static_cast<int64_t>(4) * units_ * (in_ + units_ + 1);
}

std::vector<std::pair<std::string, ParamPtr>> LstmCell::params() const {
  return {{wx_->share_id, wx_}, {wh_->share_id, wh_}, {b_->share_id, b_}};
}

Blstm::Blstm(ParameterStore& store, const std::string& name, int in, int units)
    : fw_(store, name + ".fw", in, units), bw_(store, name + ".bw", in, units) {}

Var Blstm::forward(Tape& t, Var seq) const {
  const Tensor& sv = seq.value();
  if (sv.rank() != 3)
    throw ShapeError("blstm: sequence must be (T,b,in), got " + shape_str(sv.shape()));
  const int64_t T = sv.dim(0), b = sv.dim(1), in = sv.dim(2);
  if (T < 1) throw ShapeError("blstm: empty sequence");
  std::vector<int64_t> ones(static_cast<size_t>(T), 1);
  auto steps = ops::split(seq, 0, ones);
  std::vector<Var> xs(static_cast<size_t>(T));
  for (int64_t i = 0; i < T; ++i) xs[static_cast<size_t>(i)] = ops::reshape(steps[static_cast<size_t>(i)], {b, in});

  const int64_t u = fw_.units();
  auto run = [&](const LstmCell& cell, bool reversed) {
    Var h = t.constant(Tensor({b, u}));
    Var c = t.constant(Tensor({b, u}));
    std::vector<Var> hs(static_cast<size_t>(T));
    for (int64_t i = 0; i < T; ++i) {
      const int64_t idx = reversed ? T - 1 - i : i;
      auto [h2, c2] = cell.step(t, xs[static_cast<size_t>(idx)], h, c);
      h = h2;
      c = c2;
      hs[static_cast<size_t>(idx)] = h2;
    }
    return hs;
  };
  auto fw_h = run(fw_, false);
  auto bw_h = run(bw_, true);

  std::vector<Var> rows(static_cast<size_t>(T));
  for (int64_t i = 0; i < T; ++i) {
    Var row = ops::concat({fw_h[static_cast<size_t>(i)], bw_h[static_cast<size_t>(i)]}, 1);
    rows[static_cast<size_t>(i)] = ops::reshape(row, {1, b, 2 * u});
  }
  return ops::concat(rows, 0);
}

std::vector<std::pair<std::string, ParamPtr>> Blstm::params() const {
  auto out = fw_.params();
  for (auto& p : bw_.params()) out.push_back(p);
  return out;
}

}  // namespace htr
