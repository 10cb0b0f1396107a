#pragma once

#include <string>

#include "camcls/tensor.hpp"

namespace camcls {

// Grayscale image codecs. Decoded planes are HxW floats in [0, 1];
// RGB PNGs are converted to luma. PGM writing min-max normalizes to
// 8-bit, which is what the heatmap and mask exports require.

Tensor<float> read_pgm(const std::string& path);
Tensor<float> read_png_gray(const std::string& path);

// Dispatches on the file's magic bytes (P5 or PNG signature).
Tensor<float> read_image(const std::string& path);

void write_pgm_minmax(const std::string& path, const Tensor<float>& plane);
void write_png_gray8(const std::string& path, const Tensor<float>& plane);

}  // namespace camcls
