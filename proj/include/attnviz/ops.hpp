#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "attnviz/errors.hpp"
#include "attnviz/tape.hpp"
#include "attnviz/tensor.hpp"

// Tensor operations. Every op is a pure function of its inputs; when a tape
// is active and an input tracks gradients, the op appends a backward node.
// All loops run in a fixed sequential order so results are bit-reproducible.
//
// Convolution is cross-correlation (no kernel flip), zero padding.

namespace attnviz {

enum class Activation { relu, sigmoid };
enum class PoolKind { max, avg };
enum class UpsampleMode { nearest, bilinear };
enum class EwKind { add, mul };

namespace detail {

inline int ceil_div(int a, int b) {  // b > 0
  return a > 0 ? (a + b - 1) / b : a / b;
}

inline int floor_div(int a, int b) {  // b > 0
  return a >= 0 ? a / b : -((-a + b - 1) / b);
}

// Output index range [lo, hi] for which o*stride - pad + koff lands in [0, in).
inline void conv_span(int out, int in, int stride, int pad, int koff, int& lo, int& hi) {
  lo = std::max(0, ceil_div(pad - koff, stride));
  hi = std::min(out - 1, floor_div(in - 1 - koff + pad, stride));
}

template <class S>
bool should_track(std::initializer_list<const Tensor<S>*> ins) {
  if (!Tape<S>::active()) return false;
  for (const Tensor<S>* t : ins)
    if (t->requires_grad()) return true;
  return false;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// conv2d
// ---------------------------------------------------------------------------

template <class S>
Tensor<S> conv2d(const Tensor<S>& x, const Tensor<S>& w, const Tensor<S>& b,
                 int stride = 1, int pad = 0, int dilation = 1) {
  if (x.ndim() != 4 || w.ndim() != 4)
    throw ShapeError("conv2d: need 4-d input and weight, got x=" +
                     shape_str(x.shape()) + " w=" + shape_str(w.shape()));
  const int n_batch = x.dim(0), c_in = x.dim(1), in_h = x.dim(2), in_w = x.dim(3);
  const int c_out = w.dim(0), k_h = w.dim(2), k_w = w.dim(3);
  if (w.dim(1) != c_in)
    throw ShapeError("conv2d: input channel mismatch between x=" +
                     shape_str(x.shape()) + " and w=" + shape_str(w.shape()));
  if (b.ndim() != 1 || b.dim(0) != c_out)
    throw ShapeError("conv2d: bias must be [" + std::to_string(c_out) +
                     "], got " + shape_str(b.shape()));
  if (stride < 1 || dilation < 1 || pad < 0)
    throw UsageError("conv2d: stride/dilation must be >= 1 and pad >= 0");
  const int span_h = dilation * (k_h - 1) + 1;
  const int span_w = dilation * (k_w - 1) + 1;
  if (in_h + 2 * pad < span_h || in_w + 2 * pad < span_w)
    throw ShapeError("conv2d: kernel span exceeds padded input, x=" +
                     shape_str(x.shape()) + " w=" + shape_str(w.shape()) +
                     " pad=" + std::to_string(pad) +
                     " dilation=" + std::to_string(dilation));
  const int out_h = (in_h + 2 * pad - span_h) / stride + 1;
  const int out_w = (in_w + 2 * pad - span_w) / stride + 1;

  Tensor<S> out(Shape{n_batch, c_out, out_h, out_w});
  const S* xp = x.data();
  const S* wp = w.data();
  const S* bp = b.data();
  S* op = out.data();

  for (int n = 0; n < n_batch; ++n) {
    for (int co = 0; co < c_out; ++co) {
      S* out_plane = op + (static_cast<std::size_t>(n) * c_out + co) * out_h * out_w;
      std::fill(out_plane, out_plane + static_cast<std::size_t>(out_h) * out_w, bp[co]);
      for (int ci = 0; ci < c_in; ++ci) {
        const S* x_plane = xp + (static_cast<std::size_t>(n) * c_in + ci) * in_h * in_w;
        for (int kh = 0; kh < k_h; ++kh) {
          const int khd = kh * dilation;
          int oh_lo, oh_hi;
          detail::conv_span(out_h, in_h, stride, pad, khd, oh_lo, oh_hi);
          for (int kw = 0; kw < k_w; ++kw) {
            const S wv = wp[((static_cast<std::size_t>(co) * c_in + ci) * k_h + kh) * k_w + kw];
            const int kwd = kw * dilation;
            int ow_lo, ow_hi;
            detail::conv_span(out_w, in_w, stride, pad, kwd, ow_lo, ow_hi);
            for (int oh = oh_lo; oh <= oh_hi; ++oh) {
              const S* xrow = x_plane + static_cast<std::size_t>(oh * stride - pad + khd) * in_w;
              S* orow = out_plane + static_cast<std::size_t>(oh) * out_w;
              const int iw0 = ow_lo * stride - pad + kwd;
              if (stride == 1) {
                for (int ow = ow_lo; ow <= ow_hi; ++ow)
                  orow[ow] += wv * xrow[iw0 + (ow - ow_lo)];
              } else {
                for (int ow = ow_lo; ow <= ow_hi; ++ow)
                  orow[ow] += wv * xrow[iw0 + (ow - ow_lo) * stride];
              }
            }
          }
        }
      }
    }
  }

  if (detail::should_track<S>({&x, &w, &b})) {
    out.set_requires_grad(true);
    Tape<S>::active()->record(
        "conv2d", {&x, &w, &b}, out,
        [x, w, b, out, stride, pad, dilation, n_batch, c_in, in_h, in_w, c_out,
         k_h, k_w, out_h, out_w] {
          const std::vector<S>& gy = out.grad();
          const S* gp = gy.data();
          if (b.requires_grad()) {
            std::vector<S>& db = b.grad();
            for (int n = 0; n < n_batch; ++n)
              for (int co = 0; co < c_out; ++co) {
                const S* grow = gp + (static_cast<std::size_t>(n) * c_out + co) * out_h * out_w;
                S acc = 0;
                for (std::size_t i = 0; i < static_cast<std::size_t>(out_h) * out_w; ++i)
                  acc += grow[i];
                db[co] += acc;
              }
          }
          const S* xp = x.data();
          const S* wp = w.data();
          if (w.requires_grad()) {
            std::vector<S>& dw = w.grad();
            for (int n = 0; n < n_batch; ++n)
              for (int co = 0; co < c_out; ++co) {
                const S* g_plane = gp + (static_cast<std::size_t>(n) * c_out + co) * out_h * out_w;
                for (int ci = 0; ci < c_in; ++ci) {
                  const S* x_plane = xp + (static_cast<std::size_t>(n) * c_in + ci) * in_h * in_w;
                  for (int kh = 0; kh < k_h; ++kh) {
                    const int khd = kh * dilation;
                    int oh_lo, oh_hi;
                    detail::conv_span(out_h, in_h, stride, pad, khd, oh_lo, oh_hi);
                    for (int kw = 0; kw < k_w; ++kw) {
                      const int kwd = kw * dilation;
                      int ow_lo, ow_hi;
                      detail::conv_span(out_w, in_w, stride, pad, kwd, ow_lo, ow_hi);
                      S acc = 0;
                      for (int oh = oh_lo; oh <= oh_hi; ++oh) {
                        const S* xrow = x_plane + static_cast<std::size_t>(oh * stride - pad + khd) * in_w;
                        const S* grow = g_plane + static_cast<std::size_t>(oh) * out_w;
                        const int iw0 = ow_lo * stride - pad + kwd;
                        if (stride == 1) {
                          for (int ow = ow_lo; ow <= ow_hi; ++ow)
                            acc += xrow[iw0 + (ow - ow_lo)] * grow[ow];
                        } else {
                          for (int ow = ow_lo; ow <= ow_hi; ++ow)
                            acc += xrow[iw0 + (ow - ow_lo) * stride] * grow[ow];
                        }
                      }
                      dw[((static_cast<std::size_t>(co) * c_in + ci) * k_h + kh) * k_w + kw] += acc;
                    }
                  }
                }
              }
          }
          if (x.requires_grad()) {
            std::vector<S>& dx = x.grad();
            for (int n = 0; n < n_batch; ++n)
              for (int co = 0; co < c_out; ++co) {
                const S* g_plane = gp + (static_cast<std::size_t>(n) * c_out + co) * out_h * out_w;
                for (int ci = 0; ci < c_in; ++ci) {
                  S* dx_plane = dx.data() + (static_cast<std::size_t>(n) * c_in + ci) * in_h * in_w;
                  for (int kh = 0; kh < k_h; ++kh) {
                    const int khd = kh * dilation;
                    int oh_lo, oh_hi;
                    detail::conv_span(out_h, in_h, stride, pad, khd, oh_lo, oh_hi);
                    for (int kw = 0; kw < k_w; ++kw) {
                      const S wv = wp[((static_cast<std::size_t>(co) * c_in + ci) * k_h + kh) * k_w + kw];
                      const int kwd = kw * dilation;
                      int ow_lo, ow_hi;
                      detail::conv_span(out_w, in_w, stride, pad, kwd, ow_lo, ow_hi);
                      for (int oh = oh_lo; oh <= oh_hi; ++oh) {
                        S* dxrow = dx_plane + static_cast<std::size_t>(oh * stride - pad + khd) * in_w;
                        const S* grow = g_plane + static_cast<std::size_t>(oh) * out_w;
                        const int iw0 = ow_lo * stride - pad + kwd;
                        if (stride == 1) {
                          for (int ow = ow_lo; ow <= ow_hi; ++ow)
                            dxrow[iw0 + (ow - ow_lo)] += wv * grow[ow];
                        } else {
                          for (int ow = ow_lo; ow <= ow_hi; ++ow)
                            dxrow[iw0 + (ow - ow_lo) * stride] += wv * grow[ow];
                        }
                      }
                    }
                  }
                }
              }
          }
        });
  }
  return out;
}

// ---------------------------------------------------------------------------
// pool2d
// ---------------------------------------------------------------------------

// Max pooling ignores padded cells (window clipped to the valid region); avg
// pooling treats padding as zeros and always divides by k*k. Max gradient
// goes to the first (row-major) argmax of each window.
template <class S>
Tensor<S> pool2d(const Tensor<S>& x, PoolKind kind, int k, int stride, int pad = 0) {
  if (x.ndim() != 4)
    throw ShapeError("pool2d: need 4-d input, got " + shape_str(x.shape()));
  const int n_batch = x.dim(0), chans = x.dim(1), in_h = x.dim(2), in_w = x.dim(3);
  if (stride < 1) throw UsageError("pool2d: stride must be >= 1");
  if (pad < 0 || pad >= k) throw UsageError("pool2d: need 0 <= pad < k");
  if (k > in_h + 2 * pad || k > in_w + 2 * pad)
    throw ShapeError("pool2d: kernel " + std::to_string(k) +
                     " larger than padded input " + shape_str(x.shape()));
  const int out_h = (in_h + 2 * pad - k) / stride + 1;
  const int out_w = (in_w + 2 * pad - k) / stride + 1;

  Tensor<S> out(Shape{n_batch, chans, out_h, out_w});
  const bool track = detail::should_track<S>({&x});
  std::vector<std::int64_t> argmax;
  if (kind == PoolKind::max && track)
    argmax.assign(out.numel(), -1);

  const S* xp = x.data();
  S* op = out.data();
  const S inv = S(1) / static_cast<S>(k * k);
  std::size_t oi = 0;
  for (int n = 0; n < n_batch; ++n)
    for (int c = 0; c < chans; ++c) {
      const std::size_t plane = (static_cast<std::size_t>(n) * chans + c) * in_h * in_w;
      for (int oh = 0; oh < out_h; ++oh)
        for (int ow = 0; ow < out_w; ++ow, ++oi) {
          const int h0 = oh * stride - pad, w0 = ow * stride - pad;
          if (kind == PoolKind::max) {
            S best = 0;
            std::int64_t best_i = -1;
            for (int kh = 0; kh < k; ++kh) {
              const int h = h0 + kh;
              if (h < 0 || h >= in_h) continue;
              for (int kw = 0; kw < k; ++kw) {
                const int w = w0 + kw;
                if (w < 0 || w >= in_w) continue;
                const std::size_t xi = plane + static_cast<std::size_t>(h) * in_w + w;
                if (best_i < 0 || xp[xi] > best) {
                  best = xp[xi];
                  best_i = static_cast<std::int64_t>(xi);
                }
              }
            }
            op[oi] = best;
            if (!argmax.empty()) argmax[oi] = best_i;
          } else {
            S acc = 0;
            for (int kh = 0; kh < k; ++kh) {
              const int h = h0 + kh;
              if (h < 0 || h >= in_h) continue;
              for (int kw = 0; kw < k; ++kw) {
                const int w = w0 + kw;
                if (w < 0 || w >= in_w) continue;
                acc += xp[plane + static_cast<std::size_t>(h) * in_w + w];
              }
            }
            op[oi] = acc * inv;
          }
        }
    }

  if (track) {
    out.set_requires_grad(true);
    Tape<S>::active()->record(
        "pool2d", {&x}, out,
        [x, out, kind, k, stride, pad, n_batch, chans, in_h, in_w, out_h, out_w,
         argmax = std::move(argmax), inv] {
          const std::vector<S>& gy = out.grad();
          std::vector<S>& dx = x.grad();
          if (kind == PoolKind::max) {
            for (std::size_t i = 0; i < gy.size(); ++i)
              if (argmax[i] >= 0) dx[static_cast<std::size_t>(argmax[i])] += gy[i];
          } else {
            std::size_t oi = 0;
            for (int n = 0; n < n_batch; ++n)
              for (int c = 0; c < chans; ++c) {
                const std::size_t plane = (static_cast<std::size_t>(n) * chans + c) * in_h * in_w;
                for (int oh = 0; oh < out_h; ++oh)
                  for (int ow = 0; ow < out_w; ++ow, ++oi) {
                    const S g = gy[oi] * inv;
                    const int h0 = oh * stride - pad, w0 = ow * stride - pad;
                    for (int kh = 0; kh < k; ++kh) {
                      const int h = h0 + kh;
                      if (h < 0 || h >= in_h) continue;
                      for (int kw = 0; kw < k; ++kw) {
                        const int w = w0 + kw;
                        if (w < 0 || w >= in_w) continue;
                        dx[plane + static_cast<std::size_t>(h) * in_w + w] += g;
                      }
                    }
                  }
              }
          }
        });
  }
  return out;
}

// ---------------------------------------------------------------------------
// upsample
// ---------------------------------------------------------------------------

// Bilinear uses half-pixel centers: source y = (out_y + 0.5)/factor - 0.5,
// border samples clamped (align-corners=false convention).
template <class S>
Tensor<S> upsample(const Tensor<S>& x, int factor, UpsampleMode mode) {
  if (x.ndim() != 4)
    throw ShapeError("upsample: need 4-d input, got " + shape_str(x.shape()));
  if (factor < 1) throw UsageError("upsample: factor must be >= 1");
  const int n_batch = x.dim(0), chans = x.dim(1), in_h = x.dim(2), in_w = x.dim(3);
  const int out_h = in_h * factor, out_w = in_w * factor;
  Tensor<S> out(Shape{n_batch, chans, out_h, out_w});

  struct Lerp {
    int i0, i1;
    double t;
  };
  std::vector<Lerp> ly, lx;
  if (mode == UpsampleMode::bilinear) {
    ly.resize(out_h);
    lx.resize(out_w);
    auto fill = [factor](std::vector<Lerp>& v, int in_n) {
      for (int o = 0; o < static_cast<int>(v.size()); ++o) {
        const double s = (o + 0.5) / factor - 0.5;
        const int i0 = static_cast<int>(std::floor(s));
        v[o].t = s - i0;
        v[o].i0 = std::clamp(i0, 0, in_n - 1);
        v[o].i1 = std::clamp(i0 + 1, 0, in_n - 1);
      }
    };
    fill(ly, in_h);
    fill(lx, in_w);
  }

  const S* xp = x.data();
  S* op = out.data();
  for (int n = 0; n < n_batch; ++n)
    for (int c = 0; c < chans; ++c) {
      const S* x_plane = xp + (static_cast<std::size_t>(n) * chans + c) * in_h * in_w;
      S* o_plane = op + (static_cast<std::size_t>(n) * chans + c) * out_h * out_w;
      if (mode == UpsampleMode::nearest) {
        for (int oh = 0; oh < out_h; ++oh) {
          const S* xrow = x_plane + static_cast<std::size_t>(oh / factor) * in_w;
          S* orow = o_plane + static_cast<std::size_t>(oh) * out_w;
          for (int ow = 0; ow < out_w; ++ow) orow[ow] = xrow[ow / factor];
        }
      } else {
        for (int oh = 0; oh < out_h; ++oh) {
          const Lerp& y = ly[oh];
          const S* r0 = x_plane + static_cast<std::size_t>(y.i0) * in_w;
          const S* r1 = x_plane + static_cast<std::size_t>(y.i1) * in_w;
          S* orow = o_plane + static_cast<std::size_t>(oh) * out_w;
          for (int ow = 0; ow < out_w; ++ow) {
            const Lerp& xc = lx[ow];
            const double top = (1.0 - xc.t) * r0[xc.i0] + xc.t * r0[xc.i1];
            const double bot = (1.0 - xc.t) * r1[xc.i0] + xc.t * r1[xc.i1];
            orow[ow] = static_cast<S>((1.0 - y.t) * top + y.t * bot);
          }
        }
      }
    }

  if (detail::should_track<S>({&x})) {
    out.set_requires_grad(true);
    Tape<S>::active()->record(
        "upsample", {&x}, out,
        [x, out, factor, mode, n_batch, chans, in_h, in_w, out_h, out_w,
         ly = std::move(ly), lx = std::move(lx)] {
          const std::vector<S>& gy = out.grad();
          std::vector<S>& dx = x.grad();
          for (int n = 0; n < n_batch; ++n)
            for (int c = 0; c < chans; ++c) {
              const std::size_t xb = (static_cast<std::size_t>(n) * chans + c) * in_h * in_w;
              const std::size_t ob = (static_cast<std::size_t>(n) * chans + c) * out_h * out_w;
              if (mode == UpsampleMode::nearest) {
                for (int oh = 0; oh < out_h; ++oh)
                  for (int ow = 0; ow < out_w; ++ow)
                    dx[xb + static_cast<std::size_t>(oh / factor) * in_w + ow / factor] +=
                        gy[ob + static_cast<std::size_t>(oh) * out_w + ow];
              } else {
                for (int oh = 0; oh < out_h; ++oh) {
                  const auto& y = ly[oh];
                  for (int ow = 0; ow < out_w; ++ow) {
                    const auto& xc = lx[ow];
                    const S g = gy[ob + static_cast<std::size_t>(oh) * out_w + ow];
                    dx[xb + static_cast<std::size_t>(y.i0) * in_w + xc.i0] +=
                        static_cast<S>((1.0 - y.t) * (1.0 - xc.t)) * g;
                    dx[xb + static_cast<std::size_t>(y.i0) * in_w + xc.i1] +=
                        static_cast<S>((1.0 - y.t) * xc.t) * g;
                    dx[xb + static_cast<std::size_t>(y.i1) * in_w + xc.i0] +=
                        static_cast<S>(y.t * (1.0 - xc.t)) * g;
                    dx[xb + static_cast<std::size_t>(y.i1) * in_w + xc.i1] +=
                        static_cast<S>(y.t * xc.t) * g;
                  }
                }
              }
            }
        });
  }
  return out;
}

// ---------------------------------------------------------------------------
// activations
// ---------------------------------------------------------------------------

template <class S>
S sigmoid_scalar(S z) {
  if (z >= S(0)) return S(1) / (S(1) + std::exp(-z));
  const S e = std::exp(z);
  return e / (S(1) + e);
}

template <class S>
Tensor<S> activate(const Tensor<S>& x, Activation kind) {
  Tensor<S> out(x.shape());
  const S* xp = x.data();
  S* op = out.data();
  const std::size_t n = x.numel();
  if (kind == Activation::relu) {
    for (std::size_t i = 0; i < n; ++i) op[i] = xp[i] > S(0) ? xp[i] : S(0);
  } else {
    for (std::size_t i = 0; i < n; ++i) op[i] = sigmoid_scalar(xp[i]);
  }

  if (detail::should_track<S>({&x})) {
    out.set_requires_grad(true);
    const char* name = kind == Activation::relu ? "relu" : "sigmoid";
    Tape<S>::active()->record(name, {&x}, out, [x, out, kind] {
      const std::vector<S>& gy = out.grad();
      std::vector<S>& dx = x.grad();
      const S* xp = x.data();
      const S* op = out.data();
      if (kind == Activation::relu) {
        // subgradient 0 at exactly 0
        for (std::size_t i = 0; i < gy.size(); ++i)
          if (xp[i] > S(0)) dx[i] += gy[i];
      } else {
        for (std::size_t i = 0; i < gy.size(); ++i)
          dx[i] += gy[i] * op[i] * (S(1) - op[i]);
      }
    });
  }
  return out;
}

template <class S>
Tensor<S> relu(const Tensor<S>& x) {
  return activate(x, Activation::relu);
}

template <class S>
Tensor<S> sigmoid(const Tensor<S>& x) {
  return activate(x, Activation::sigmoid);
}

// ---------------------------------------------------------------------------
// elementwise add / mul
// ---------------------------------------------------------------------------

namespace detail {

enum class Broadcast { none, scalar, chw };

template <class S>
Broadcast broadcast_mode(const Tensor<S>& a, const Tensor<S>& b, const char* op) {
  if (a.shape() == b.shape()) return Broadcast::none;
  if (b.numel() == 1) return Broadcast::scalar;
  if (a.ndim() == 4 && b.ndim() == 3 && a.dim(1) == b.dim(0) &&
      a.dim(2) == b.dim(1) && a.dim(3) == b.dim(2))
    return Broadcast::chw;
  throw ShapeError(std::string(op) + ": incompatible shapes a=" +
                   shape_str(a.shape()) + " b=" + shape_str(b.shape()));
}

}  // namespace detail

template <class S>
Tensor<S> elementwise(EwKind kind, const Tensor<S>& a, const Tensor<S>& b) {
  const char* name = kind == EwKind::add ? "add" : "mul";
  const auto bc = detail::broadcast_mode(a, b, name);
  Tensor<S> out(a.shape());
  const S* ap = a.data();
  const S* bp = b.data();
  S* op = out.data();
  const std::size_t n = a.numel();
  const std::size_t bn = b.numel();

  auto bval = [&](std::size_t i) -> S {
    switch (bc) {
      case detail::Broadcast::none: return bp[i];
      case detail::Broadcast::scalar: return bp[0];
      default: return bp[i % bn];
    }
  };
  if (kind == EwKind::add)
    for (std::size_t i = 0; i < n; ++i) op[i] = ap[i] + bval(i);
  else
    for (std::size_t i = 0; i < n; ++i) op[i] = ap[i] * bval(i);

  if (detail::should_track<S>({&a, &b})) {
    out.set_requires_grad(true);
    Tape<S>::active()->record(name, {&a, &b}, out, [a, b, out, kind, bc, n, bn] {
      const std::vector<S>& gy = out.grad();
      const S* ap = a.data();
      const S* bp = b.data();
      if (a.requires_grad()) {
        std::vector<S>& da = a.grad();
        if (kind == EwKind::add) {
          for (std::size_t i = 0; i < n; ++i) da[i] += gy[i];
        } else {
          for (std::size_t i = 0; i < n; ++i) {
            const S bv = bc == detail::Broadcast::none   ? bp[i]
                         : bc == detail::Broadcast::scalar ? bp[0]
                                                           : bp[i % bn];
            da[i] += gy[i] * bv;
          }
        }
      }
      if (b.requires_grad()) {
        std::vector<S>& db = b.grad();
        for (std::size_t i = 0; i < n; ++i) {
          const std::size_t j = bc == detail::Broadcast::none   ? i
                                : bc == detail::Broadcast::scalar ? 0
                                                                  : i % bn;
          db[j] += kind == EwKind::add ? gy[i] : gy[i] * ap[i];
        }
      }
    });
  }
  return out;
}

template <class S>
Tensor<S> add(const Tensor<S>& a, const Tensor<S>& b) {
  return elementwise(EwKind::add, a, b);
}

template <class S>
Tensor<S> mul(const Tensor<S>& a, const Tensor<S>& b) {
  return elementwise(EwKind::mul, a, b);
}

// ---------------------------------------------------------------------------
// dense
// ---------------------------------------------------------------------------

template <class S>
Tensor<S> dense(const Tensor<S>& x, const Tensor<S>& w, const Tensor<S>& b) {
  if (x.ndim() != 2 || w.ndim() != 2)
    throw ShapeError("dense: need 2-d input and weight, got x=" +
                     shape_str(x.shape()) + " w=" + shape_str(w.shape()));
  const int n_rows = x.dim(0), in_dim = x.dim(1), out_dim = w.dim(1);
  if (w.dim(0) != in_dim)
    throw ShapeError("dense: inner dimension mismatch between x=" +
                     shape_str(x.shape()) + " and w=" + shape_str(w.shape()));
  if (b.ndim() != 1 || b.dim(0) != out_dim)
    throw ShapeError("dense: bias must be [" + std::to_string(out_dim) +
                     "], got " + shape_str(b.shape()));

  Tensor<S> out(Shape{n_rows, out_dim});
  const S* xp = x.data();
  const S* wp = w.data();
  const S* bp = b.data();
  S* op = out.data();
  for (int n = 0; n < n_rows; ++n) {
    S* orow = op + static_cast<std::size_t>(n) * out_dim;
    for (int k = 0; k < out_dim; ++k) orow[k] = bp[k];
    const S* xrow = xp + static_cast<std::size_t>(n) * in_dim;
    for (int d = 0; d < in_dim; ++d) {
      const S xv = xrow[d];
      const S* wrow = wp + static_cast<std::size_t>(d) * out_dim;
      for (int k = 0; k < out_dim; ++k) orow[k] += xv * wrow[k];
    }
  }

  if (detail::should_track<S>({&x, &w, &b})) {
    out.set_requires_grad(true);
    Tape<S>::active()->record("dense", {&x, &w, &b}, out,
                              [x, w, b, out, n_rows, in_dim, out_dim] {
      const std::vector<S>& gy = out.grad();
      const S* gp = gy.data();
      const S* xp = x.data();
      const S* wp = w.data();
      if (b.requires_grad()) {
        std::vector<S>& db = b.grad();
        for (int n = 0; n < n_rows; ++n)
          for (int k = 0; k < out_dim; ++k)
            db[k] += gp[static_cast<std::size_t>(n) * out_dim + k];
      }
      if (w.requires_grad()) {
        std::vector<S>& dw = w.grad();
        for (int n = 0; n < n_rows; ++n) {
          const S* xrow = xp + static_cast<std::size_t>(n) * in_dim;
          const S* grow = gp + static_cast<std::size_t>(n) * out_dim;
          for (int d = 0; d < in_dim; ++d) {
            const S xv = xrow[d];
            S* dwrow = dw.data() + static_cast<std::size_t>(d) * out_dim;
            for (int k = 0; k < out_dim; ++k) dwrow[k] += xv * grow[k];
          }
        }
      }
      if (x.requires_grad()) {
        std::vector<S>& dx = x.grad();
        for (int n = 0; n < n_rows; ++n) {
          S* dxrow = dx.data() + static_cast<std::size_t>(n) * in_dim;
          const S* grow = gp + static_cast<std::size_t>(n) * out_dim;
          for (int d = 0; d < in_dim; ++d) {
            const S* wrow = wp + static_cast<std::size_t>(d) * out_dim;
            S acc = 0;
            for (int k = 0; k < out_dim; ++k) acc += wrow[k] * grow[k];
            dxrow[d] += acc;
          }
        }
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// reductions and shape ops
// ---------------------------------------------------------------------------

template <class S>
Tensor<S> global_avg_pool(const Tensor<S>& x) {
  if (x.ndim() != 4)
    throw ShapeError("global_avg_pool: need 4-d input, got " + shape_str(x.shape()));
  const int n_batch = x.dim(0), chans = x.dim(1), in_h = x.dim(2), in_w = x.dim(3);
  const std::size_t hw = static_cast<std::size_t>(in_h) * in_w;
  Tensor<S> out(Shape{n_batch, chans});
  const S* xp = x.data();
  S* op = out.data();
  const S inv = S(1) / static_cast<S>(hw);
  for (int n = 0; n < n_batch; ++n)
    for (int c = 0; c < chans; ++c) {
      const S* plane = xp + (static_cast<std::size_t>(n) * chans + c) * hw;
      S acc = 0;
      for (std::size_t i = 0; i < hw; ++i) acc += plane[i];
      op[static_cast<std::size_t>(n) * chans + c] = acc * inv;
    }

  if (detail::should_track<S>({&x})) {
    out.set_requires_grad(true);
    Tape<S>::active()->record("global_avg_pool", {&x}, out,
                              [x, out, n_batch, chans, hw, inv] {
      const std::vector<S>& gy = out.grad();
      std::vector<S>& dx = x.grad();
      for (int n = 0; n < n_batch; ++n)
        for (int c = 0; c < chans; ++c) {
          const S g = gy[static_cast<std::size_t>(n) * chans + c] * inv;
          S* plane = dx.data() + (static_cast<std::size_t>(n) * chans + c) * hw;
          for (std::size_t i = 0; i < hw; ++i) plane[i] += g;
        }
    });
  }
  return out;
}

template <class S>
Tensor<S> concat_channels(const std::vector<Tensor<S>>& xs) {
  if (xs.empty()) throw UsageError("concat_channels: empty input list");
  const int n_batch = xs[0].dim(0), in_h = xs[0].dim(2), in_w = xs[0].dim(3);
  int total_c = 0;
  for (const auto& t : xs) {
    if (t.ndim() != 4 || t.dim(0) != n_batch || t.dim(2) != in_h || t.dim(3) != in_w)
      throw ShapeError("concat_channels: mismatched shapes " +
                       shape_str(xs[0].shape()) + " vs " + shape_str(t.shape()));
    total_c += t.dim(1);
  }
  const std::size_t hw = static_cast<std::size_t>(in_h) * in_w;
  Tensor<S> out(Shape{n_batch, total_c, in_h, in_w});
  S* op = out.data();
  int c_off = 0;
  for (const auto& t : xs) {
    const int tc = t.dim(1);
    const S* tp = t.data();
    for (int n = 0; n < n_batch; ++n)
      std::copy(tp + static_cast<std::size_t>(n) * tc * hw,
                tp + static_cast<std::size_t>(n + 1) * tc * hw,
                op + (static_cast<std::size_t>(n) * total_c + c_off) * hw);
    c_off += tc;
  }

  bool track = false;
  if (Tape<S>::active())
    for (const auto& t : xs)
      if (t.requires_grad()) track = true;
  if (track) {
    out.set_requires_grad(true);
    std::vector<const Tensor<S>*> ins;
    for (const auto& t : xs) ins.push_back(&t);
    Tape<S>::active()->record("concat_channels", ins, out,
                 [xs, out, n_batch, total_c, hw] {
                   const std::vector<S>& gy = out.grad();
                   int c_off = 0;
                   for (const auto& t : xs) {
                     const int tc = t.dim(1);
                     if (t.requires_grad()) {
                       std::vector<S>& dt = t.grad();
                       for (int n = 0; n < n_batch; ++n) {
                         const S* g = gy.data() + (static_cast<std::size_t>(n) * total_c + c_off) * hw;
                         S* d = dt.data() + static_cast<std::size_t>(n) * tc * hw;
                         for (std::size_t i = 0; i < static_cast<std::size_t>(tc) * hw; ++i)
                           d[i] += g[i];
                       }
                     }
                     c_off += tc;
                   }
                 });
  }
  return out;
}

template <class S>
Tensor<S> slice_channels(const Tensor<S>& x, int c0, int c1) {
  if (x.ndim() != 4)
    throw ShapeError("slice_channels: need 4-d input, got " + shape_str(x.shape()));
  const int n_batch = x.dim(0), chans = x.dim(1), in_h = x.dim(2), in_w = x.dim(3);
  if (c0 < 0 || c1 <= c0 || c1 > chans)
    throw UsageError("slice_channels: bad range [" + std::to_string(c0) + "," +
                     std::to_string(c1) + ") for " + shape_str(x.shape()));
  const std::size_t hw = static_cast<std::size_t>(in_h) * in_w;
  const int out_c = c1 - c0;
  Tensor<S> out(Shape{n_batch, out_c, in_h, in_w});
  const S* xp = x.data();
  S* op = out.data();
  for (int n = 0; n < n_batch; ++n)
    std::copy(xp + (static_cast<std::size_t>(n) * chans + c0) * hw,
              xp + (static_cast<std::size_t>(n) * chans + c1) * hw,
              op + static_cast<std::size_t>(n) * out_c * hw);

  if (detail::should_track<S>({&x})) {
    out.set_requires_grad(true);
    Tape<S>::active()->record("slice_channels", {&x}, out,
                              [x, out, c0, n_batch, chans, out_c, hw] {
      const std::vector<S>& gy = out.grad();
      std::vector<S>& dx = x.grad();
      for (int n = 0; n < n_batch; ++n) {
        const S* g = gy.data() + static_cast<std::size_t>(n) * out_c * hw;
        S* d = dx.data() + (static_cast<std::size_t>(n) * chans + c0) * hw;
        for (std::size_t i = 0; i < static_cast<std::size_t>(out_c) * hw; ++i)
          d[i] += g[i];
      }
    });
  }
  return out;
}

template <class S>
Tensor<S> reshape(const Tensor<S>& x, Shape shape) {
  if (numel_of(shape) != x.numel())
    throw ShapeError("reshape: cannot view " + shape_str(x.shape()) + " as " +
                     shape_str(shape));
  Tensor<S> out(shape);
  std::copy(x.data(), x.data() + x.numel(), out.data());
  if (detail::should_track<S>({&x})) {
    out.set_requires_grad(true);
    Tape<S>::active()->record("reshape", {&x}, out, [x, out] {
      const std::vector<S>& gy = out.grad();
      std::vector<S>& dx = x.grad();
      for (std::size_t i = 0; i < gy.size(); ++i) dx[i] += gy[i];
    });
  }
  return out;
}

// [N,C,H,W] -> [N,1,H,W], mean over channels (spatial-only mask variant).
template <class S>
Tensor<S> channel_mean(const Tensor<S>& x) {
  if (x.ndim() != 4)
    throw ShapeError("channel_mean: need 4-d input, got " + shape_str(x.shape()));
  const int n_batch = x.dim(0), chans = x.dim(1), in_h = x.dim(2), in_w = x.dim(3);
  const std::size_t hw = static_cast<std::size_t>(in_h) * in_w;
  Tensor<S> out(Shape{n_batch, 1, in_h, in_w});
  const S* xp = x.data();
  S* op = out.data();
  const S inv = S(1) / static_cast<S>(chans);
  for (int n = 0; n < n_batch; ++n)
    for (std::size_t i = 0; i < hw; ++i) {
      S acc = 0;
      for (int c = 0; c < chans; ++c)
        acc += xp[(static_cast<std::size_t>(n) * chans + c) * hw + i];
      op[static_cast<std::size_t>(n) * hw + i] = acc * inv;
    }
  if (detail::should_track<S>({&x})) {
    out.set_requires_grad(true);
    Tape<S>::active()->record("channel_mean", {&x}, out,
                              [x, out, n_batch, chans, hw, inv] {
      const std::vector<S>& gy = out.grad();
      std::vector<S>& dx = x.grad();
      for (int n = 0; n < n_batch; ++n)
        for (std::size_t i = 0; i < hw; ++i) {
          const S g = gy[static_cast<std::size_t>(n) * hw + i] * inv;
          for (int c = 0; c < chans; ++c)
            dx[(static_cast<std::size_t>(n) * chans + c) * hw + i] += g;
        }
    });
  }
  return out;
}

// [N,1,H,W] -> [N,C,H,W] by repetition.
template <class S>
Tensor<S> broadcast_channels(const Tensor<S>& x, int chans) {
  if (x.ndim() != 4 || x.dim(1) != 1)
    throw ShapeError("broadcast_channels: need [N,1,H,W] input, got " +
                     shape_str(x.shape()));
  const int n_batch = x.dim(0), in_h = x.dim(2), in_w = x.dim(3);
  const std::size_t hw = static_cast<std::size_t>(in_h) * in_w;
  Tensor<S> out(Shape{n_batch, chans, in_h, in_w});
  const S* xp = x.data();
  S* op = out.data();
  for (int n = 0; n < n_batch; ++n)
    for (int c = 0; c < chans; ++c)
      std::copy(xp + static_cast<std::size_t>(n) * hw,
                xp + static_cast<std::size_t>(n + 1) * hw,
                op + (static_cast<std::size_t>(n) * chans + c) * hw);
  if (detail::should_track<S>({&x})) {
    out.set_requires_grad(true);
    Tape<S>::active()->record("broadcast_channels", {&x}, out,
                              [x, out, n_batch, chans, hw] {
      const std::vector<S>& gy = out.grad();
      std::vector<S>& dx = x.grad();
      for (int n = 0; n < n_batch; ++n)
        for (int c = 0; c < chans; ++c)
          for (std::size_t i = 0; i < hw; ++i)
            dx[static_cast<std::size_t>(n) * hw + i] +=
                gy[(static_cast<std::size_t>(n) * chans + c) * hw + i];
    });
  }
  return out;
}

// Sum of all elements, as a [1] tensor.
template <class S>
Tensor<S> sum(const Tensor<S>& x) {
  Tensor<S> out(Shape{1});
  const S* xp = x.data();
  S acc = 0;
  for (std::size_t i = 0; i < x.numel(); ++i) acc += xp[i];
  out[0] = acc;
  if (detail::should_track<S>({&x})) {
    out.set_requires_grad(true);
    Tape<S>::active()->record("sum", {&x}, out, [x, out] {
      const S g = out.grad()[0];
      std::vector<S>& dx = x.grad();
      for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += g;
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// softmax cross-entropy
// ---------------------------------------------------------------------------

// Mean over the batch of -log softmax(logits)[label], stabilized by rowwise
// max subtraction. Returns a [1] tensor.
template <class S>
Tensor<S> softmax_cross_entropy(const Tensor<S>& logits, const std::vector<int>& labels) {
  if (logits.ndim() != 2)
    throw ShapeError("softmax_cross_entropy: need 2-d logits, got " +
                     shape_str(logits.shape()));
  const int n_rows = logits.dim(0), classes = logits.dim(1);
  if (static_cast<int>(labels.size()) != n_rows)
    throw ShapeError("softmax_cross_entropy: " + std::to_string(labels.size()) +
                     " labels for " + std::to_string(n_rows) + " rows");
  for (int n = 0; n < n_rows; ++n)
    if (labels[n] < 0 || labels[n] >= classes)
      throw UsageError("softmax_cross_entropy: label " + std::to_string(labels[n]) +
                       " at row " + std::to_string(n) + " out of range [0," +
                       std::to_string(classes) + ")");

  const bool track = detail::should_track<S>({&logits});
  std::vector<S> probs;
  if (track) probs.resize(logits.numel());

  const S* lp = logits.data();
  double loss_acc = 0;
  for (int n = 0; n < n_rows; ++n) {
    const S* row = lp + static_cast<std::size_t>(n) * classes;
    S m = row[0];
    for (int k = 1; k < classes; ++k) m = std::max(m, row[k]);
    S z = 0;
    for (int k = 0; k < classes; ++k) z += std::exp(row[k] - m);
    loss_acc += static_cast<double>(std::log(z) - (row[labels[n]] - m));
    if (track) {
      S* prow = probs.data() + static_cast<std::size_t>(n) * classes;
      for (int k = 0; k < classes; ++k) prow[k] = std::exp(row[k] - m) / z;
    }
  }
  Tensor<S> out(Shape{1});
  out[0] = static_cast<S>(loss_acc / n_rows);

  if (track) {
    out.set_requires_grad(true);
    Tape<S>::active()->record("softmax_cross_entropy", {&logits}, out,
                              [logits, out, labels, probs = std::move(probs),
                               n_rows, classes] {
      const S g = out.grad()[0] / static_cast<S>(n_rows);
      std::vector<S>& dl = logits.grad();
      for (int n = 0; n < n_rows; ++n)
        for (int k = 0; k < classes; ++k) {
          const std::size_t i = static_cast<std::size_t>(n) * classes + k;
          dl[i] += g * (probs[i] - (k == labels[n] ? S(1) : S(0)));
        }
    });
  }
  return out;
}

}  // namespace attnviz
