#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "camcls/tensor.hpp"

namespace camcls {

struct Sample {
  Tensor<float> image;  // 1 x H x W, normalized
  int label = 0;
  std::string source_tag;
  std::string path;
  // ground truth for synthetic samples
  bool has_blob = false;
  size_t blob_row = 0;
  size_t blob_col = 0;
};

struct Dataset {
  std::vector<Sample> samples;
  size_t input_size = 0;
  size_t skipped = 0;  // undecodable files encountered during loading
};

// Synthetic blob-quadrant task: class 1 puts a bright Gaussian blob in
// the upper-left quadrant, class 0 in the lower-right, plus additive
// noise. The discriminative evidence is localized by construction, so
// CAM peaks have a checkable ground-truth location.
struct SynthConfig {
  size_t n_per_class = 100;
  size_t image_size = 64;
  double blob_radius_min = 6.0;
  double blob_radius_max = 10.0;
  double noise_sigma = 0.05;
  uint64_t seed = 0;

  void validate() const;
};

// Loads `pos/` and `neg/` PGM or PNG files under root_dir, path-sorted,
// resized to input_size and per-image normalized.
Dataset load_dataset(const std::string& root_dir, size_t input_size);

Dataset synth_generate(const SynthConfig& config);

// Stratified, disjoint, deterministic split.
std::pair<Dataset, Dataset> split(const Dataset& dataset, double train_fraction, uint64_t seed);

// Writes the dataset back out as pos/ and neg/ PGM files.
void export_dataset(const Dataset& dataset, const std::string& root_dir);

}  // namespace camcls
