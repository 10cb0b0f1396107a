#pragma once

#include <algorithm>
#include <cstddef>
#include <vector>

#include "camcls/cam.hpp"
#include "camcls/cpe.hpp"
#include "camcls/model.hpp"
#include "camcls/parallel.hpp"
#include "camcls/tensor.hpp"

namespace camcls {

struct TtaConfig {
  size_t k = 31;
  double theta = 0.2;
  size_t mask_patch_px = 8;
  float mask_fill = 0.0f;  // inputs are normalized to zero mean

  void validate(size_t input_size) const {
    if (theta <= 0.0 || theta > 0.5) throw ConfigError("tta: theta must lie in (0, 0.5]");
    if (mask_patch_px == 0 || input_size % mask_patch_px != 0)
      throw ConfigError("tta: input size not divisible by mask patch size");
    const size_t cells = (input_size / mask_patch_px) * (input_size / mask_patch_px);
    if (k < 1 || k > cells)
      throw ConfigError("tta: k must lie in [1, grid cells]");
  }
};

struct VoteRecord {
  double original_prob = 0.0;
  std::vector<double> masked_probs;
  std::vector<bool> supporting;
  bool flipped = false;
  int final_label = 0;
};

// Mask-grid cells ordered by CAM mass, descending; ties fall back to
// row-major order.
template <typename T>
std::vector<GridCell> rank_patches(const Heatmap<T>& heat, size_t mask_patch_px) {
  const Tensor<T> sums = patch_cam_sums(heat, mask_patch_px);
  const size_t rows = sums.dim(0), cols = sums.dim(1), n = rows * cols;
  std::vector<size_t> idx(n);
  for (size_t i = 0; i < n; ++i) idx[i] = i;
  std::sort(idx.begin(), idx.end(), [&](size_t a, size_t b) {
    if (sums.data[a] != sums.data[b]) return sums.data[a] > sums.data[b];
    return a < b;
  });
  std::vector<GridCell> cells(n);
  for (size_t i = 0; i < n; ++i) cells[i] = {idx[i] / cols, idx[i] % cols};
  return cells;
}

// Image m (1-indexed) masks exactly the top-m ranked patches; the masked
// pixel sets are nested by construction.
template <typename T>
std::vector<Tensor<T>> make_masked_images(const Tensor<T>& image,
                                          const std::vector<GridCell>& ranked_cells, size_t k,
                                          T mask_fill, size_t mask_patch_px) {
  if (image.rank() != 3) throw DimensionError("make_masked_images: expected CxHxW image");
  if (k > ranked_cells.size())
    throw ContractError("make_masked_images: k exceeds the number of ranked cells");
  const size_t c = image.dim(0);
  std::vector<Tensor<T>> out;
  out.reserve(k);
  Tensor<T> current = image;
  for (size_t m = 0; m < k; ++m) {
    const auto [cy, cx] = ranked_cells[m];
    for (size_t ic = 0; ic < c; ++ic)
      for (size_t y = cy * mask_patch_px; y < (cy + 1) * mask_patch_px; ++y)
        for (size_t x = cx * mask_patch_px; x < (cx + 1) * mask_patch_px; ++x)
          current(ic, y, x) = mask_fill;
    out.push_back(current);
  }
  return out;
}

// Supporting votes keep the original call within slack theta; a strict
// majority of non-supporting votes flips the label.
inline VoteRecord vote(double original_prob, const std::vector<double>& masked_probs,
                       double theta) {
  VoteRecord rec;
  rec.original_prob = original_prob;
  rec.masked_probs = masked_probs;
  const bool positive = original_prob > 0.5;
  size_t non_supporting = 0;
  rec.supporting.reserve(masked_probs.size());
  for (double p : masked_probs) {
    const bool support = positive ? (p >= theta) : (p <= 1.0 - theta);
    rec.supporting.push_back(support);
    if (!support) ++non_supporting;
  }
  rec.flipped = 2 * non_supporting > masked_probs.size();
  const int original_label = positive ? 1 : 0;
  rec.final_label = rec.flipped ? 1 - original_label : original_label;
  return rec;
}

// Full procedure for one test image: rank patches by the CAM of the
// predicted class, classify the k cumulatively masked variants, vote.
template <typename T>
VoteRecord tta_classify(const ModelT<T>& m, const Tensor<T>& image, const TtaConfig& cfg) {
  cfg.validate(m.config.input_size);
  const ForwardResult<T> fr = forward(m, image);
  const int sign = fr.prob > T(0.5) ? 1 : -1;
  const Heatmap<T> heat =
      heatmap_from_feature(fr.feature, m.head_weight, sign, m.config.input_size);
  const auto ranked = rank_patches(heat, cfg.mask_patch_px);
  const auto masked =
      make_masked_images(image, ranked, cfg.k, static_cast<T>(cfg.mask_fill), cfg.mask_patch_px);
  std::vector<double> probs(masked.size());
  parallel_for(masked.size(),
               [&](size_t i) { probs[i] = static_cast<double>(forward(m, masked[i]).prob); });
  return vote(static_cast<double>(fr.prob), probs, cfg.theta);
}

}  // namespace camcls
