#pragma once

#include <algorithm>
#include <cmath>

#include "camcls/tensor.hpp"

namespace camcls {

// Bilinear resample of a single HxW plane, half-pixel centers, edges
// clamped. Output values stay inside [min(src), max(src)].
template <typename T>
Tensor<T> resize_bilinear(const Tensor<T>& src, size_t out_h, size_t out_w) {
  if (src.rank() != 2) throw DimensionError("resize: expected HxW plane");
  if (out_h == 0 || out_w == 0) throw ContractError("resize: empty output");
  const size_t h = src.dim(0), w = src.dim(1);
  if (h == 0 || w == 0) throw ContractError("resize: empty input");
  Tensor<T> dst({out_h, out_w});
  const double sy = static_cast<double>(h) / static_cast<double>(out_h);
  const double sx = static_cast<double>(w) / static_cast<double>(out_w);
  for (size_t oy = 0; oy < out_h; ++oy) {
    double fy = (static_cast<double>(oy) + 0.5) * sy - 0.5;
    fy = std::clamp(fy, 0.0, static_cast<double>(h - 1));
    const size_t y0 = static_cast<size_t>(fy);
    const size_t y1 = std::min(y0 + 1, h - 1);
    const double wy = fy - static_cast<double>(y0);
    for (size_t ox = 0; ox < out_w; ++ox) {
      double fx = (static_cast<double>(ox) + 0.5) * sx - 0.5;
      fx = std::clamp(fx, 0.0, static_cast<double>(w - 1));
      const size_t x0 = static_cast<size_t>(fx);
      const size_t x1 = std::min(x0 + 1, w - 1);
      const double wx = fx - static_cast<double>(x0);
      const double v = (1.0 - wy) * ((1.0 - wx) * src(y0, x0) + wx * src(y0, x1)) +
                       wy * ((1.0 - wx) * src(y1, x0) + wx * src(y1, x1));
      dst(oy, ox) = static_cast<T>(v);
    }
  }
  return dst;
}

// Per-image intensity normalization: (x - mean) / max(std, 1e-6).
// Constant images map to all zeros through the variance clamp.
template <typename T>
Tensor<T> normalize_plane(const Tensor<T>& src) {
  double m = 0.0;
  for (T v : src.data) m += static_cast<double>(v);
  m /= static_cast<double>(src.numel());
  double var = 0.0;
  for (T v : src.data) {
    const double d = static_cast<double>(v) - m;
    var += d * d;
  }
  var /= static_cast<double>(src.numel());
  const double sd = std::max(std::sqrt(var), 1e-6);
  Tensor<T> out = src;
  for (T& v : out.data) v = static_cast<T>((static_cast<double>(v) - m) / sd);
  return out;
}

}  // namespace camcls
