#pragma once

#include <cmath>
#include <cstddef>

#include "camcls/tensor.hpp"

// Plain forward/backward math over tensors. The autodiff tape and the
// no-tape inference path both call into these, so the two paths cannot
// drift apart numerically.
namespace camcls::ops {

inline double softplus(double z) {
  return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
}

inline double sigmoid_scalar(double z) {
  if (z >= 0.0) {
    const double e = std::exp(-z);
    return 1.0 / (1.0 + e);
  }
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// Numerically stable binary cross entropy on a raw logit:
// bce(z, t) = softplus(z) - z * t.
inline double bce_with_logit(double z, double t) {
  if (t < 0.0 || t > 1.0) throw ContractError("bce: target outside [0,1]");
  return softplus(z) - z * t;
}

inline double bce_with_logit_grad(double z, double t) { return sigmoid_scalar(z) - t; }

namespace detail {
template <typename T>
void require_nchw(const Tensor<T>& x, const char* who) {
  if (x.rank() != 4) throw DimensionError(std::string(who) + ": expected NCHW tensor");
}
}  // namespace detail

template <typename T>
std::vector<size_t> conv2d_out_shape(const Tensor<T>& x, const Tensor<T>& k, size_t stride,
                                     size_t pad) {
  detail::require_nchw(x, "conv2d");
  if (k.rank() != 4) throw DimensionError("conv2d: expected OIHW kernel");
  if (stride < 1) throw ContractError("conv2d: stride must be positive");
  if (k.dim(1) != x.dim(1)) throw DimensionError("conv2d: channel counts do not match");
  const size_t h = x.dim(2), w = x.dim(3), kh = k.dim(2), kw = k.dim(3);
  if (h + 2 * pad < kh || w + 2 * pad < kw)
    throw DimensionError("conv2d: kernel larger than padded input");
  const size_t ho = (h + 2 * pad - kh) / stride + 1;
  const size_t wo = (w + 2 * pad - kw) / stride + 1;
  return {x.dim(0), k.dim(0), ho, wo};
}

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& k, size_t stride, size_t pad) {
  Tensor<T> y(conv2d_out_shape(x, k, stride, pad));
  const size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const size_t o = k.dim(0), kh = k.dim(2), kw = k.dim(3);
  const size_t ho = y.dim(2), wo = y.dim(3);
  const ptrdiff_t p = static_cast<ptrdiff_t>(pad);
  for (size_t in = 0; in < n; ++in)
    for (size_t oc = 0; oc < o; ++oc)
      for (size_t ic = 0; ic < c; ++ic) {
        const T* xp = &x.data[(in * c + ic) * h * w];
        const T* kp = &k.data[((oc * c + ic) * kh) * kw];
        T* yp = &y.data[(in * o + oc) * ho * wo];
        for (size_t oy = 0; oy < ho; ++oy)
          for (size_t ox = 0; ox < wo; ++ox) {
            T acc = 0;
            const ptrdiff_t iy0 = static_cast<ptrdiff_t>(oy * stride) - p;
            const ptrdiff_t ix0 = static_cast<ptrdiff_t>(ox * stride) - p;
            for (size_t ky = 0; ky < kh; ++ky) {
              const ptrdiff_t iy = iy0 + static_cast<ptrdiff_t>(ky);
              if (iy < 0 || iy >= static_cast<ptrdiff_t>(h)) continue;
              for (size_t kx = 0; kx < kw; ++kx) {
                const ptrdiff_t ix = ix0 + static_cast<ptrdiff_t>(kx);
                if (ix < 0 || ix >= static_cast<ptrdiff_t>(w)) continue;
                acc += xp[iy * static_cast<ptrdiff_t>(w) + ix] * kp[ky * kw + kx];
              }
            }
            yp[oy * wo + ox] += acc;
          }
      }
  return y;
}

// Accumulates dL/dx and dL/dk for conv2d. Output buffers must be
// zero-initialized to the input/kernel shapes.
template <typename T>
void conv2d_backward(const Tensor<T>& x, const Tensor<T>& k, size_t stride, size_t pad,
                     const Tensor<T>& gy, Tensor<T>& gx, Tensor<T>& gk) {
  const size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const size_t o = k.dim(0), kh = k.dim(2), kw = k.dim(3);
  const size_t ho = gy.dim(2), wo = gy.dim(3);
  const ptrdiff_t p = static_cast<ptrdiff_t>(pad);
  for (size_t in = 0; in < n; ++in)
    for (size_t oc = 0; oc < o; ++oc)
      for (size_t ic = 0; ic < c; ++ic) {
        const T* xp = &x.data[(in * c + ic) * h * w];
        const T* kp = &k.data[((oc * c + ic) * kh) * kw];
        T* gxp = &gx.data[(in * c + ic) * h * w];
        T* gkp = &gk.data[((oc * c + ic) * kh) * kw];
        const T* gyp = &gy.data[(in * o + oc) * ho * wo];
        for (size_t oy = 0; oy < ho; ++oy)
          for (size_t ox = 0; ox < wo; ++ox) {
            const T g = gyp[oy * wo + ox];
            if (g == T(0)) continue;
            const ptrdiff_t iy0 = static_cast<ptrdiff_t>(oy * stride) - p;
            const ptrdiff_t ix0 = static_cast<ptrdiff_t>(ox * stride) - p;
            for (size_t ky = 0; ky < kh; ++ky) {
              const ptrdiff_t iy = iy0 + static_cast<ptrdiff_t>(ky);
              if (iy < 0 || iy >= static_cast<ptrdiff_t>(h)) continue;
              for (size_t kx = 0; kx < kw; ++kx) {
                const ptrdiff_t ix = ix0 + static_cast<ptrdiff_t>(kx);
                if (ix < 0 || ix >= static_cast<ptrdiff_t>(w)) continue;
                gxp[iy * static_cast<ptrdiff_t>(w) + ix] += g * kp[ky * kw + kx];
                gkp[ky * kw + kx] += g * xp[iy * static_cast<ptrdiff_t>(w) + ix];
              }
            }
          }
      }
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  Tensor<T> y = x;
  for (T& v : y.data) v = v > T(0) ? v : T(0);
  return y;
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  Tensor<T> y = x;
  for (T& v : y.data) v = static_cast<T>(sigmoid_scalar(static_cast<double>(v)));
  return y;
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  if (!a.same_shape(b)) throw DimensionError("add: shape mismatch");
  Tensor<T> y = a;
  for (size_t i = 0; i < y.numel(); ++i) y.data[i] += b.data[i];
  return y;
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  if (!a.same_shape(b)) throw DimensionError("sub: shape mismatch");
  Tensor<T> y = a;
  for (size_t i = 0; i < y.numel(); ++i) y.data[i] -= b.data[i];
  return y;
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  if (!a.same_shape(b)) throw DimensionError("mul: shape mismatch");
  Tensor<T> y = a;
  for (size_t i = 0; i < y.numel(); ++i) y.data[i] *= b.data[i];
  return y;
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T c) {
  Tensor<T> y = a;
  for (T& v : y.data) v *= c;
  return y;
}

template <typename T>
Tensor<T> add_channel_bias(const Tensor<T>& x, const Tensor<T>& b) {
  detail::require_nchw(x, "add_channel_bias");
  if (b.rank() != 1 || b.dim(0) != x.dim(1))
    throw DimensionError("add_channel_bias: bias must have one entry per channel");
  Tensor<T> y = x;
  const size_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  for (size_t in = 0; in < n; ++in)
    for (size_t ic = 0; ic < c; ++ic) {
      T* yp = &y.data[(in * c + ic) * hw];
      for (size_t i = 0; i < hw; ++i) yp[i] += b.data[ic];
    }
  return y;
}

template <typename T>
Tensor<T> avgpool2(const Tensor<T>& x) {
  detail::require_nchw(x, "avgpool2");
  const size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (h % 2 != 0 || w % 2 != 0) throw DimensionError("avgpool2: spatial dims must be even");
  Tensor<T> y({n, c, h / 2, w / 2});
  for (size_t in = 0; in < n; ++in)
    for (size_t ic = 0; ic < c; ++ic)
      for (size_t oy = 0; oy < h / 2; ++oy)
        for (size_t ox = 0; ox < w / 2; ++ox) {
          const T s = x(in, ic, 2 * oy, 2 * ox) + x(in, ic, 2 * oy, 2 * ox + 1) +
                      x(in, ic, 2 * oy + 1, 2 * ox) + x(in, ic, 2 * oy + 1, 2 * ox + 1);
          y(in, ic, oy, ox) = s / T(4);
        }
  return y;
}

// Global average pooling, NCHW -> NC.
template <typename T>
Tensor<T> gap(const Tensor<T>& x) {
  detail::require_nchw(x, "gap");
  const size_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  Tensor<T> y({n, c});
  for (size_t in = 0; in < n; ++in)
    for (size_t ic = 0; ic < c; ++ic) {
      const T* xp = &x.data[(in * c + ic) * hw];
      T s = 0;
      for (size_t i = 0; i < hw; ++i) s += xp[i];
      y(in, ic) = s / static_cast<T>(hw);
    }
  return y;
}

// x: N x I, w: O x I, b: O  ->  N x O
template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
  if (x.rank() != 2 || w.rank() != 2 || b.rank() != 1)
    throw DimensionError("linear: expected x NxI, w OxI, b O");
  if (x.dim(1) != w.dim(1) || w.dim(0) != b.dim(0))
    throw DimensionError("linear: shape mismatch");
  const size_t n = x.dim(0), i = x.dim(1), o = w.dim(0);
  Tensor<T> y({n, o});
  for (size_t in = 0; in < n; ++in)
    for (size_t io = 0; io < o; ++io) {
      T s = b.data[io];
      for (size_t ii = 0; ii < i; ++ii) s += x(in, ii) * w(io, ii);
      y(in, io) = s;
    }
  return y;
}

template <typename T>
T sum(const Tensor<T>& x) {
  T s = 0;
  for (T v : x.data) s += v;
  return s;
}

template <typename T>
T mean(const Tensor<T>& x) {
  if (x.numel() == 0) throw DimensionError("mean: empty tensor");
  return sum(x) / static_cast<T>(x.numel());
}

template <typename T>
T dot(const Tensor<T>& u, const Tensor<T>& v) {
  if (u.numel() != v.numel()) throw DimensionError("dot: length mismatch");
  T s = 0;
  for (size_t i = 0; i < u.numel(); ++i) s += u.data[i] * v.data[i];
  return s;
}

}  // namespace camcls::ops
