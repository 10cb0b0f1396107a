#pragma once

#include <cmath>
#include <cstddef>

#include "camcls/autodiff.hpp"
#include "camcls/cam.hpp"
#include "camcls/image.hpp"
#include "camcls/rng.hpp"
#include "camcls/tensor.hpp"

namespace camcls {

// A composited training image with its two-source soft label weights.
// weight_a + weight_b is deliberately not constrained to 1: the label
// interpolation uses (1 - rho_a) for the first source and rho_b for the
// second.
template <typename T>
struct VirtualSample {
  Tensor<T> image;  // C x H x W
  int label_a = 0;
  int label_b = 0;
  double weight_a = 1.0;
  double weight_b = 0.0;
  Box box_a, box_b;
  double rho_a = 0.0;
  double rho_b = 0.0;
};

// Box side scales with sqrt(1 - lambda) so the area fraction tracks
// 1 - lambda; position uniform over valid placements.
inline Box sample_box(Rng& rng, double lambda, size_t img_h, size_t img_w) {
  if (lambda < 0.0 || lambda > 1.0) throw ContractError("sample_box: lambda outside [0,1]");
  const double side = std::sqrt(1.0 - lambda);
  const size_t h = static_cast<size_t>(std::llround(static_cast<double>(img_h) * side));
  const size_t w = static_cast<size_t>(std::llround(static_cast<double>(img_w) * side));
  Box box;
  box.height = h;
  box.width = w;
  box.top = static_cast<size_t>(rng.integer(img_h - h + 1));
  box.left = static_cast<size_t>(rng.integer(img_w - w + 1));
  return box;
}

template <typename T>
VirtualSample<T> identity_sample(const Tensor<T>& image, int label) {
  VirtualSample<T> vs;
  vs.image = image;
  vs.label_a = label;
  vs.label_b = label;
  vs.weight_a = 1.0;
  vs.weight_b = 0.0;
  return vs;
}

// Deterministic core: paste the (resized) box_b region of image b over
// box_a in image a and derive the label weights from the CAM ratios.
// Either box degenerating to zero area recovers the unmixed sample with
// weights (1, 0).
template <typename T>
VirtualSample<T> snapmix_compose(const Tensor<T>& img_a, int label_a, const Tensor<T>& img_b,
                                 int label_b, const Heatmap<T>& heat_a, const Heatmap<T>& heat_b,
                                 const Box& box_a, const Box& box_b) {
  if (!img_a.same_shape(img_b)) throw ContractError("snapmix: image sizes do not match");
  if (img_a.rank() != 3) throw DimensionError("snapmix: expected CxHxW images");
  const size_t c = img_a.dim(0), h = img_a.dim(1), w = img_a.dim(2);
  if (!box_a.inside(h, w) || !box_b.inside(h, w))
    throw ContractError("snapmix: box outside image");

  VirtualSample<T> vs;
  vs.image = img_a;
  vs.label_a = label_a;
  vs.label_b = label_b;
  vs.box_a = box_a;
  vs.box_b = box_b;
  if (box_a.area() == 0 || box_b.area() == 0) {
    vs.rho_a = 0.0;
    vs.rho_b = 0.0;
    vs.weight_a = 1.0;
    vs.weight_b = 0.0;
    return vs;
  }

  for (size_t ic = 0; ic < c; ++ic) {
    Tensor<T> region({box_b.height, box_b.width});
    for (size_t y = 0; y < box_b.height; ++y)
      for (size_t x = 0; x < box_b.width; ++x)
        region(y, x) = img_b(ic, box_b.top + y, box_b.left + x);
    Tensor<T> resized = resize_bilinear(region, box_a.height, box_a.width);
    for (size_t y = 0; y < box_a.height; ++y)
      for (size_t x = 0; x < box_a.width; ++x)
        vs.image(ic, box_a.top + y, box_a.left + x) = resized(y, x);
  }

  vs.rho_a = box_cam_ratio(heat_a, box_a);
  vs.rho_b = box_cam_ratio(heat_b, box_b);
  vs.weight_a = 1.0 - vs.rho_a;
  vs.weight_b = vs.rho_b;
  return vs;
}

// Full procedure: independent Beta(alpha, alpha) draws for the two boxes,
// then compose. Heatmaps must carry each image's ground-truth class sign.
template <typename T>
VirtualSample<T> snapmix(const Tensor<T>& img_a, int label_a, const Tensor<T>& img_b, int label_b,
                         const Heatmap<T>& heat_a, const Heatmap<T>& heat_b, Rng& rng,
                         double alpha) {
  if (alpha <= 0.0) throw ContractError("snapmix: alpha must be positive");
  const size_t h = img_a.dim(1), w = img_a.dim(2);
  const double lambda_a = rng.beta(alpha, alpha);
  const double lambda_b = rng.beta(alpha, alpha);
  const Box box_a = sample_box(rng, lambda_a, h, w);
  const Box box_b = sample_box(rng, lambda_b, h, w);
  return snapmix_compose(img_a, label_a, img_b, label_b, heat_a, heat_b, box_a, box_b);
}

// weight_a * bce(logit, label_a) + weight_b * bce(logit, label_b)
template <typename T>
double mixed_bce_loss(double logit, const VirtualSample<T>& vs) {
  return vs.weight_a * ops::bce_with_logit(logit, vs.label_a) +
         vs.weight_b * ops::bce_with_logit(logit, vs.label_b);
}

template <typename T>
int mixed_bce_node(Tape<T>& tape, int logit, const VirtualSample<T>& vs) {
  const int la = tape.bce_with_logit(logit, vs.label_a);
  const int lb = tape.bce_with_logit(logit, vs.label_b);
  return tape.combine({la, lb}, {static_cast<T>(vs.weight_a), static_cast<T>(vs.weight_b)});
}

}  // namespace camcls
