#pragma once

#include <cmath>
#include <cstddef>

#include "camcls/image.hpp"
#include "camcls/model.hpp"
#include "camcls/tensor.hpp"

namespace camcls {

struct Box {
  size_t top = 0, left = 0, height = 0, width = 0;

  size_t area() const { return height * width; }
  bool inside(size_t img_h, size_t img_w) const {
    return top + height <= img_h && left + width <= img_w;
  }
};

// Class Activation Map at feature-grid resolution plus an upsampled
// full-resolution view. `raw` keeps the signed evidence before the
// nonnegativity clamp.
template <typename T>
struct Heatmap {
  Tensor<T> raw;       // G x G, signed
  Tensor<T> grid;      // G x G, clamped nonnegative
  Tensor<T> full_res;  // H x W
  int class_sign = 1;  // +1 positive class, -1 negative class
  bool degenerate = false;
};

enum class Upsample { nearest, bilinear };

// sign * sum_k w_k F_k(x, y); with a GAP-linear head this is the exact
// CAM, no gradients involved.
template <typename T>
Tensor<T> cam_from_feature(const Tensor<T>& feature, const Tensor<T>& head_w, int sign) {
  if (feature.rank() != 3) throw DimensionError("cam: expected CxGxG feature");
  if (head_w.numel() != feature.dim(0)) throw DimensionError("cam: head width mismatch");
  if (sign != 1 && sign != -1) throw ContractError("cam: class_sign must be +1 or -1");
  const size_t c = feature.dim(0), g = feature.dim(1);
  Tensor<T> raw({g, feature.dim(2)});
  for (size_t y = 0; y < g; ++y)
    for (size_t x = 0; x < feature.dim(2); ++x) {
      T s = 0;
      for (size_t k = 0; k < c; ++k) s += head_w.data[k] * feature(k, y, x);
      raw(y, x) = static_cast<T>(sign) * s;
    }
  return raw;
}

// Nearest-cell replication keeps patch sums exactly proportional to grid
// values; bilinear is available behind the flag.
template <typename T>
Tensor<T> upsample_grid(const Tensor<T>& grid, size_t out_h, size_t out_w, Upsample mode) {
  if (mode == Upsample::bilinear) return resize_bilinear(grid, out_h, out_w);
  const size_t g_h = grid.dim(0), g_w = grid.dim(1);
  if (out_h % g_h != 0 || out_w % g_w != 0)
    throw DimensionError("upsample: output size must be a multiple of the grid");
  const size_t ph = out_h / g_h, pw = out_w / g_w;
  Tensor<T> out({out_h, out_w});
  for (size_t y = 0; y < out_h; ++y)
    for (size_t x = 0; x < out_w; ++x) out(y, x) = grid(y / ph, x / pw);
  return out;
}

template <typename T>
Heatmap<T> heatmap_from_feature(const Tensor<T>& feature, const Tensor<T>& head_w, int sign,
                                size_t input_size, Upsample mode = Upsample::nearest) {
  Heatmap<T> h;
  h.class_sign = sign;
  h.raw = cam_from_feature(feature, head_w, sign);
  h.grid = h.raw;
  for (T& v : h.grid.data) v = v > T(0) ? v : T(0);
  double total = 0.0;
  for (T v : h.grid.data) total += static_cast<double>(v);
  h.degenerate = (total == 0.0);
  h.full_res = upsample_grid(h.grid, input_size, input_size, mode);
  return h;
}

template <typename T>
Heatmap<T> compute_cam(const ModelT<T>& m, const Tensor<T>& image, int sign,
                       Upsample mode = Upsample::nearest) {
  const ForwardResult<T> fr = forward(m, image);
  return heatmap_from_feature(fr.feature, m.head_weight, sign, m.config.input_size, mode);
}

// Fraction of CAM mass inside the box; degenerate maps fall back to the
// box area fraction. Accumulated in double so ratio identities hold to
// 1e-9 even for float maps.
template <typename T>
double box_cam_ratio(const Heatmap<T>& heat, const Box& box) {
  const size_t h = heat.full_res.dim(0), w = heat.full_res.dim(1);
  if (!box.inside(h, w)) throw ContractError("box_cam_ratio: box outside image");
  if (heat.degenerate)
    return static_cast<double>(box.area()) / static_cast<double>(h * w);
  double total = 0.0;
  for (T v : heat.full_res.data) total += static_cast<double>(v);
  double inside = 0.0;
  for (size_t y = box.top; y < box.top + box.height; ++y)
    for (size_t x = box.left; x < box.left + box.width; ++x)
      inside += static_cast<double>(heat.full_res(y, x));
  return inside / total;
}

// Tile sums of the full-resolution map over a patch_px grid.
template <typename T>
Tensor<T> patch_cam_sums(const Heatmap<T>& heat, size_t patch_px) {
  const size_t h = heat.full_res.dim(0), w = heat.full_res.dim(1);
  if (patch_px == 0 || h % patch_px != 0 || w % patch_px != 0)
    throw ContractError("patch_cam_sums: image size not divisible by patch size");
  const size_t gh = h / patch_px, gw = w / patch_px;
  Tensor<T> sums({gh, gw});
  for (size_t a = 0; a < gh; ++a)
    for (size_t b = 0; b < gw; ++b) {
      double s = 0.0;
      for (size_t y = a * patch_px; y < (a + 1) * patch_px; ++y)
        for (size_t x = b * patch_px; x < (b + 1) * patch_px; ++x)
          s += static_cast<double>(heat.full_res(y, x));
      sums(a, b) = static_cast<T>(s);
    }
  return sums;
}

}  // namespace camcls
