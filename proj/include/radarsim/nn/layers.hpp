#pragma once

#include <cassert>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "radarsim/nn/tensor.hpp"

namespace radarsim::nn {

// Shared layer conventions: forward() caches whatever backward() needs;
// backward(gy, need_gx) accumulates parameter gradients and returns the input
// gradient when requested. Layers are single-use per step: one forward, then
// at most one backward on that forward's cache.

// 2-D convolution via im2col + GEMM. Rows are azimuth, columns are range.
// Row padding is circular (the scene wraps in azimuth), column padding is
// zero. Output dims use floor((padded - k)/stride) + 1.
template <typename T>
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(int in_c, int out_c, int kh, int kw, int sh, int sw, int pad_top, int pad_bottom,
         int pad_left, int pad_right, bool has_bias, const std::string& name)
      : in_c_(in_c), out_c_(out_c), kh_(kh), kw_(kw), sh_(sh), sw_(sw), pt_(pad_top),
        pb_(pad_bottom), pl_(pad_left), pr_(pad_right), has_bias_(has_bias) {
    weight_.alloc(out_c, in_c, kh, kw, name + ".weight");
    if (has_bias_) bias_.alloc(1, out_c, 1, 1, name + ".bias");
  }

  // Square-kernel convenience with symmetric "same"-style padding.
  static Conv2d same(int in_c, int out_c, int k, int stride, const std::string& name) {
    const int p = (k - 1) / 2;
    const int q = k - 1 - p;
    return Conv2d(in_c, out_c, k, k, stride, stride, p, q, p, q, true, name);
  }

  void init(Rng& rng, double stddev = 0.02) {
    weight_.fill_normal(rng, 0.0, stddev);
    if (has_bias_) bias_.val.zero();
  }

  Tensor<T> forward(const Tensor<T>& x) {
    if (x.c != in_c_) throw std::invalid_argument("Conv2d: channel mismatch");
    xn_ = x.n;
    xh_ = x.h;
    xw_ = x.w;
    const int oh = out_dim(x.h, pt_ + pb_, kh_, sh_);
    const int ow = out_dim(x.w, pl_ + pr_, kw_, sw_);
    Tensor<T> y(x.n, out_c_, oh, ow);
    const int K = in_c_ * kh_ * kw_;
    const int P = oh * ow;
    cols_.resize(static_cast<size_t>(x.n));
    for (int in = 0; in < x.n; ++in) {
      build_cols(x, in, oh, ow, cols_[in]);
      gemm(false, false, out_c_, P, K, T(1), weight_.val.v.data(), K, cols_[in].data(), P, T(0),
           y.plane(in, 0), P);
      if (has_bias_) {
        for (int oc = 0; oc < out_c_; ++oc) {
          T* dst = y.plane(in, oc);
          const T b = bias_.val.v[oc];
          for (int p = 0; p < P; ++p) dst[p] += b;
        }
      }
    }
    return y;
  }

  // accum=false computes the input gradient without touching parameter
  // gradients (generator updates must not pollute discriminator grads).
  // Reuses the column buffers built by the preceding forward.
  Tensor<T> backward(const Tensor<T>& gy, bool need_gx, bool accum = true) {
    const int oh = gy.h, ow = gy.w;
    const int K = in_c_ * kh_ * kw_;
    const int P = oh * ow;
    Tensor<T> gx;
    if (need_gx) gx = Tensor<T>(xn_, in_c_, xh_, xw_);
    for (int in = 0; in < xn_; ++in) {
      if (accum) {
        gemm(false, true, out_c_, K, P, T(1), gy.plane(in, 0), P, cols_[in].data(), P, T(1),
             weight_.grad.v.data(), K);
        if (has_bias_) {
          for (int oc = 0; oc < out_c_; ++oc) {
            const T* src = gy.plane(in, oc);
            T s = T(0);
            for (int p = 0; p < P; ++p) s += src[p];
            bias_.grad.v[oc] += s;
          }
        }
      }
      if (need_gx) {
        gcol_.resize(static_cast<size_t>(K) * P);
        gemm(true, false, K, P, out_c_, T(1), weight_.val.v.data(), K, gy.plane(in, 0), P, T(0),
             gcol_.data(), P);
        scatter_cols(gx, in, oh, ow);
      }
    }
    return gx;
  }

  std::vector<Param<T>*> params() {
    std::vector<Param<T>*> p{&weight_};
    if (has_bias_) p.push_back(&bias_);
    return p;
  }

  int out_c() const { return out_c_; }

 private:
  static int out_dim(int size, int pad, int k, int stride) {
    const int padded = size + pad;
    if (padded < k) throw std::invalid_argument("Conv2d: input smaller than kernel");
    return (padded - k) / stride + 1;
  }

  // Padded row index -> source row, or -1 for zero padding (never happens for
  // rows: rows are circular).
  int src_row(int pr_row, int h) const {
    int r = pr_row - pt_;
    r %= h;
    if (r < 0) r += h;
    return r;
  }

  // Valid output-column span [lo, hi) for kernel column kx: the ox values
  // whose source column ox*sw + kx - pl lands inside [0, xw).
  void col_span(int kx, int ow, int& lo, int& hi) const {
    const int off = kx - pl_;
    lo = off >= 0 ? 0 : (-off + sw_ - 1) / sw_;
    if (lo > ow) lo = ow;
    const int top = xw_ - 1 - off;
    hi = top < 0 ? lo : std::min(ow, top / sw_ + 1);
    if (hi < lo) hi = lo;
  }

  void build_cols(const Tensor<T>& x, int in, int oh, int ow, std::vector<T>& col) {
    const int K = in_c_ * kh_ * kw_;
    col.resize(static_cast<size_t>(K) * oh * ow);
    for (int c = 0; c < in_c_; ++c) {
      const T* src = x.plane(in, c);
      for (int ky = 0; ky < kh_; ++ky) {
        for (int kx = 0; kx < kw_; ++kx) {
          T* dst = col.data() + (static_cast<size_t>(c) * kh_ * kw_ + ky * kw_ + kx) *
                                    (static_cast<size_t>(oh) * ow);
          int lo, hi;
          col_span(kx, ow, lo, hi);
          const int off = kx - pl_;
          for (int oy = 0; oy < oh; ++oy) {
            const int row = src_row(oy * sh_ + ky, x.h);
            const T* src_r = src + static_cast<size_t>(row) * x.w;
            T* d = dst + static_cast<size_t>(oy) * ow;
            std::fill(d, d + lo, T(0));
            if (sw_ == 1) {
              std::copy(src_r + lo + off, src_r + hi + off, d + lo);
            } else {
              const T* s = src_r + static_cast<size_t>(lo) * sw_ + off;
              for (int ox = lo; ox < hi; ++ox, s += sw_) d[ox] = *s;
            }
            std::fill(d + hi, d + ow, T(0));
          }
        }
      }
    }
  }

  void scatter_cols(Tensor<T>& gx, int in, int oh, int ow) {
    for (int c = 0; c < in_c_; ++c) {
      T* dst = gx.plane(in, c);
      for (int ky = 0; ky < kh_; ++ky) {
        for (int kx = 0; kx < kw_; ++kx) {
          const T* src = gcol_.data() + (static_cast<size_t>(c) * kh_ * kw_ + ky * kw_ + kx) *
                                            (static_cast<size_t>(oh) * ow);
          int lo, hi;
          col_span(kx, ow, lo, hi);
          const int off = kx - pl_;
          for (int oy = 0; oy < oh; ++oy) {
            const int row = src_row(oy * sh_ + ky, gx.h);
            T* dst_r = dst + static_cast<size_t>(row) * gx.w;
            const T* s = src + static_cast<size_t>(oy) * ow;
            if (sw_ == 1) {
              T* d = dst_r + off;
              for (int ox = lo; ox < hi; ++ox) d[ox] += s[ox];
            } else {
              T* d = dst_r + static_cast<size_t>(lo) * sw_ + off;
              for (int ox = lo; ox < hi; ++ox, d += sw_) *d += s[ox];
            }
          }
        }
      }
    }
  }

  int in_c_ = 0, out_c_ = 0, kh_ = 0, kw_ = 0, sh_ = 1, sw_ = 1;
  int pt_ = 0, pb_ = 0, pl_ = 0, pr_ = 0;
  bool has_bias_ = true;
  int xn_ = 0, xh_ = 0, xw_ = 0;
  Param<T> weight_, bias_;
  std::vector<std::vector<T>> cols_;
  std::vector<T> gcol_;
};

// 2x nearest upsampling realized as zero stuffing followed by a 3x3 same
// convolution; the exact adjoint of a stride-2 downsampling conv.
template <typename T>
class ConvUp2 {
 public:
  ConvUp2() = default;
  ConvUp2(int in_c, int out_c, const std::string& name)
      : conv_(in_c, out_c, 3, 3, 1, 1, 1, 1, 1, 1, true, name) {}

  void init(Rng& rng, double stddev = 0.02) { conv_.init(rng, stddev); }

  Tensor<T> forward(const Tensor<T>& x) {
    Tensor<T> stuffed(x.n, x.c, x.h * 2, x.w * 2);
    for (int in = 0; in < x.n; ++in)
      for (int c = 0; c < x.c; ++c) {
        const T* src = x.plane(in, c);
        T* dst = stuffed.plane(in, c);
        for (int y = 0; y < x.h; ++y)
          for (int xx = 0; xx < x.w; ++xx)
            dst[(static_cast<size_t>(y) * 2) * (x.w * 2) + xx * 2] =
                src[static_cast<size_t>(y) * x.w + xx];
      }
    in_h_ = x.h;
    in_w_ = x.w;
    in_n_ = x.n;
    in_c_ = x.c;
    return conv_.forward(stuffed);
  }

  Tensor<T> backward(const Tensor<T>& gy, bool need_gx, bool accum = true) {
    Tensor<T> gstuffed = conv_.backward(gy, need_gx, accum);
    Tensor<T> gx;
    if (need_gx) {
      gx = Tensor<T>(in_n_, in_c_, in_h_, in_w_);
      for (int in = 0; in < in_n_; ++in)
        for (int c = 0; c < in_c_; ++c) {
          const T* src = gstuffed.plane(in, c);
          T* dst = gx.plane(in, c);
          for (int y = 0; y < in_h_; ++y)
            for (int xx = 0; xx < in_w_; ++xx)
              dst[static_cast<size_t>(y) * in_w_ + xx] =
                  src[(static_cast<size_t>(y) * 2) * (in_w_ * 2) + xx * 2];
        }
    }
    return gx;
  }

  std::vector<Param<T>*> params() { return conv_.params(); }

 private:
  Conv2d<T> conv_;
  int in_h_ = 0, in_w_ = 0, in_n_ = 0, in_c_ = 0;
};

// Batch normalization over (n, h, w) per channel, always using the current
// batch's statistics. No running averages: every network stays a pure
// function of (input, parameters), and at batch size 1 this coincides with
// instance normalization.
template <typename T>
class BatchNorm {
 public:
  BatchNorm() = default;
  BatchNorm(int channels, const std::string& name) : c_(channels) {
    gamma_.alloc(1, channels, 1, 1, name + ".gamma");
    beta_.alloc(1, channels, 1, 1, name + ".beta");
  }

  void init(Rng& rng, double gamma_stddev = 0.02) {
    gamma_.fill_normal(rng, 1.0, gamma_stddev);
    beta_.val.zero();
  }

  Tensor<T> forward(const Tensor<T>& x) {
    if (x.c != c_) throw std::invalid_argument("BatchNorm: channel mismatch");
    const size_t plane = static_cast<size_t>(x.h) * x.w;
    const size_t m = static_cast<size_t>(x.n) * plane;
    if (m < 2) throw std::invalid_argument("BatchNorm: needs more than one value per channel");
    xhat_ = Tensor<T>(x.n, x.c, x.h, x.w);
    invstd_.assign(c_, T(0));
    Tensor<T> y(x.n, x.c, x.h, x.w);
    for (int c = 0; c < c_; ++c) {
      double sum = 0, sum2 = 0;
      for (int in = 0; in < x.n; ++in) {
        const T* src = x.plane(in, c);
        for (size_t k = 0; k < plane; ++k) {
          sum += src[k];
          sum2 += static_cast<double>(src[k]) * src[k];
        }
      }
      const double mean = sum / static_cast<double>(m);
      const double var = sum2 / static_cast<double>(m) - mean * mean;
      const T invstd = static_cast<T>(1.0 / std::sqrt(std::max(var, 0.0) + eps_));
      invstd_[c] = invstd;
      const T g = gamma_.val.v[c];
      const T b = beta_.val.v[c];
      for (int in = 0; in < x.n; ++in) {
        const T* src = x.plane(in, c);
        T* xh = xhat_.plane(in, c);
        T* dst = y.plane(in, c);
        for (size_t k = 0; k < plane; ++k) {
          xh[k] = (src[k] - static_cast<T>(mean)) * invstd;
          dst[k] = g * xh[k] + b;
        }
      }
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& gy, bool need_gx, bool accum = true) {
    const size_t plane = static_cast<size_t>(gy.h) * gy.w;
    const double m = static_cast<double>(gy.n) * plane;
    Tensor<T> gx;
    if (need_gx) gx = Tensor<T>(gy.n, gy.c, gy.h, gy.w);
    for (int c = 0; c < c_; ++c) {
      double sum_gy = 0, sum_gy_xhat = 0;
      for (int in = 0; in < gy.n; ++in) {
        const T* g = gy.plane(in, c);
        const T* xh = xhat_.plane(in, c);
        for (size_t k = 0; k < plane; ++k) {
          sum_gy += g[k];
          sum_gy_xhat += static_cast<double>(g[k]) * xh[k];
        }
      }
      if (accum) {
        beta_.grad.v[c] += static_cast<T>(sum_gy);
        gamma_.grad.v[c] += static_cast<T>(sum_gy_xhat);
      }
      if (need_gx) {
        const double gam = gamma_.val.v[c];
        const double invstd = invstd_[c];
        const double k1 = sum_gy / m;
        const double k2 = sum_gy_xhat / m;
        for (int in = 0; in < gy.n; ++in) {
          const T* g = gy.plane(in, c);
          const T* xh = xhat_.plane(in, c);
          T* dst = gx.plane(in, c);
          for (size_t k = 0; k < plane; ++k)
            dst[k] = static_cast<T>(gam * invstd * (g[k] - k1 - xh[k] * k2));
        }
      }
    }
    return gx;
  }

  std::vector<Param<T>*> params() { return {&gamma_, &beta_}; }

 private:
  int c_ = 0;
  double eps_ = 1e-5;
  Param<T> gamma_, beta_;
  Tensor<T> xhat_;
  std::vector<T> invstd_;
};

template <typename T>
class ReLU {
 public:
  Tensor<T> forward(const Tensor<T>& x) {
    x_ = x;
    Tensor<T> y = x;
    for (T& v : y.v) v = v > T(0) ? v : T(0);
    return y;
  }
  Tensor<T> backward(const Tensor<T>& gy) {
    Tensor<T> gx = gy;
    for (size_t k = 0; k < gx.v.size(); ++k)
      if (x_.v[k] <= T(0)) gx.v[k] = T(0);
    return gx;
  }

 private:
  Tensor<T> x_;
};

template <typename T>
class LeakyReLU {
 public:
  explicit LeakyReLU(double slope = 0.2) : slope_(static_cast<T>(slope)) {}
  Tensor<T> forward(const Tensor<T>& x) {
    x_ = x;
    Tensor<T> y = x;
    for (T& v : y.v) v = v > T(0) ? v : slope_ * v;
    return y;
  }
  Tensor<T> backward(const Tensor<T>& gy) {
    Tensor<T> gx = gy;
    for (size_t k = 0; k < gx.v.size(); ++k)
      if (x_.v[k] <= T(0)) gx.v[k] *= slope_;
    return gx;
  }

 private:
  T slope_;
  Tensor<T> x_;
};

template <typename T>
class Tanh {
 public:
  Tensor<T> forward(const Tensor<T>& x) {
    y_ = x;
    for (T& v : y_.v) v = std::tanh(v);
    return y_;
  }
  Tensor<T> backward(const Tensor<T>& gy) {
    Tensor<T> gx = gy;
    for (size_t k = 0; k < gx.v.size(); ++k) gx.v[k] *= T(1) - y_.v[k] * y_.v[k];
    return gx;
  }

 private:
  Tensor<T> y_;
};

// 2x2 stride-2 max pooling; ties pick the first (row-major) element.
template <typename T>
class MaxPool2 {
 public:
  Tensor<T> forward(const Tensor<T>& x) {
    if (x.h % 2 != 0 || x.w % 2 != 0)
      throw std::invalid_argument("MaxPool2: dims must be even");
    in_h_ = x.h;
    in_w_ = x.w;
    Tensor<T> y(x.n, x.c, x.h / 2, x.w / 2);
    arg_.assign(y.numel(), 0);
    size_t o = 0;
    for (int in = 0; in < x.n; ++in)
      for (int c = 0; c < x.c; ++c) {
        const T* src = x.plane(in, c);
        T* dst = y.plane(in, c);
        for (int oy = 0; oy < y.h; ++oy)
          for (int ox = 0; ox < y.w; ++ox, ++o) {
            size_t best = (static_cast<size_t>(oy) * 2) * x.w + ox * 2;
            T bv = src[best];
            for (int dy = 0; dy < 2; ++dy)
              for (int dx = 0; dx < 2; ++dx) {
                const size_t k = (static_cast<size_t>(oy) * 2 + dy) * x.w + ox * 2 + dx;
                if (src[k] > bv) {
                  bv = src[k];
                  best = k;
                }
              }
            dst[static_cast<size_t>(oy) * y.w + ox] = bv;
            arg_[o] = best;
          }
      }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& gy) {
    Tensor<T> gx(gy.n, gy.c, in_h_, in_w_);
    size_t o = 0;
    for (int in = 0; in < gy.n; ++in)
      for (int c = 0; c < gy.c; ++c) {
        const T* src = gy.plane(in, c);
        T* dst = gx.plane(in, c);
        const size_t plane = static_cast<size_t>(gy.h) * gy.w;
        for (size_t k = 0; k < plane; ++k, ++o) dst[arg_[o]] += src[k];
      }
    return gx;
  }

 private:
  int in_h_ = 0, in_w_ = 0;
  std::vector<size_t> arg_;
};

}  // namespace radarsim::nn
