#include "camcls/data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <iostream>

#include "camcls/error.hpp"
#include "camcls/image.hpp"
#include "camcls/image_io.hpp"
#include "camcls/rng.hpp"

namespace fs = std::filesystem;

namespace camcls {

namespace {

bool has_image_extension(const fs::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return ext == ".pgm" || ext == ".png";
}

std::vector<fs::path> sorted_images(const fs::path& dir) {
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.is_regular_file() && has_image_extension(entry.path()))
      files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  return files;
}

}  // namespace

void SynthConfig::validate() const {
  if (n_per_class < 1) throw ConfigError("synth: n_per_class must be at least 1");
  if (image_size < 8) throw ConfigError("synth: image_size too small");
  if (blob_radius_min <= 0.0 || blob_radius_max < blob_radius_min)
    throw ConfigError("synth: bad blob radius range");
  if (noise_sigma < 0.0) throw ConfigError("synth: noise_sigma must be nonnegative");
  // the blob, out to about one radius, must fit inside its quadrant
  const size_t margin = static_cast<size_t>(std::ceil(blob_radius_max));
  if (margin + 1 > image_size / 2)
    throw ConfigError("synth: blob radius too large for the quadrant");
}

Dataset load_dataset(const std::string& root_dir, size_t input_size) {
  if (input_size == 0) throw ContractError("load_dataset: input_size must be positive");
  const fs::path root(root_dir);
  const fs::path pos = root / "pos";
  const fs::path neg = root / "neg";
  if (!fs::is_directory(pos) || !fs::is_directory(neg))
    throw IngestError("load_dataset: '" + root_dir + "' must contain pos/ and neg/");

  Dataset ds;
  ds.input_size = input_size;
  const std::string tag = root.filename().empty() ? root_dir : root.filename().string();
  for (const auto& [dir, label] : {std::pair{pos, 1}, std::pair{neg, 0}}) {
    for (const fs::path& file : sorted_images(dir)) {
      Tensor<float> plane;
      try {
        plane = read_image(file.string());
      } catch (const Error& e) {
        std::cerr << "warning: skipping undecodable file " << file << ": " << e.what() << "\n";
        ++ds.skipped;
        continue;
      }
      plane = resize_bilinear(plane, input_size, input_size);
      plane = normalize_plane(plane);
      Sample s;
      s.image = plane.reshaped({1, input_size, input_size});
      s.label = label;
      s.source_tag = tag;
      s.path = file.string();
      ds.samples.push_back(std::move(s));
    }
  }
  return ds;
}

Dataset synth_generate(const SynthConfig& config) {
  config.validate();
  Dataset ds;
  ds.input_size = config.image_size;
  const size_t n = config.image_size;
  const size_t half = n / 2;
  const Rng root(config.seed);
  for (const auto& [label, name] : {std::pair{1, std::string("pos")}, {0, std::string("neg")}}) {
    for (size_t i = 0; i < config.n_per_class; ++i) {
      Rng rng = root.fork(static_cast<uint64_t>(label), i);
      const double radius = rng.uniform(config.blob_radius_min, config.blob_radius_max);
      const size_t margin = static_cast<size_t>(std::ceil(radius));
      // class 1: upper-left quadrant, class 0: lower-right
      const size_t lo = label == 1 ? margin : half;
      const size_t hi = label == 1 ? half - 1 : n - 1 - margin;
      const size_t cy = lo + rng.integer(hi - lo + 1);
      const size_t cx = lo + rng.integer(hi - lo + 1);
      Tensor<float> plane({n, n});
      const double inv = 1.0 / (2.0 * radius * radius);
      for (size_t y = 0; y < n; ++y)
        for (size_t x = 0; x < n; ++x) {
          const double dy = static_cast<double>(y) - static_cast<double>(cy);
          const double dx = static_cast<double>(x) - static_cast<double>(cx);
          double v = std::exp(-(dy * dy + dx * dx) * inv);
          if (config.noise_sigma > 0.0) v += rng.normal() * config.noise_sigma;
          plane(y, x) = static_cast<float>(v);
        }
      Sample s;
      s.image = normalize_plane(plane).reshaped({1, n, n});
      s.label = label;
      s.source_tag = "synth";
      s.path = "synth:" + name + "/" + std::to_string(i);
      s.has_blob = true;
      s.blob_row = cy;
      s.blob_col = cx;
      ds.samples.push_back(std::move(s));
    }
  }
  return ds;
}

std::pair<Dataset, Dataset> split(const Dataset& dataset, double train_fraction, uint64_t seed) {
  if (train_fraction <= 0.0 || train_fraction >= 1.0)
    throw ContractError("split: train_fraction must lie in (0, 1)");
  std::vector<size_t> by_class[2];
  for (size_t i = 0; i < dataset.samples.size(); ++i)
    by_class[dataset.samples[i].label == 1 ? 1 : 0].push_back(i);

  std::vector<bool> in_train(dataset.samples.size(), false);
  const Rng root(seed);
  for (int label = 0; label < 2; ++label) {
    auto& idx = by_class[label];
    if (idx.size() < 2) throw Error("split: class with fewer than 2 samples");
    Rng rng = root.fork(static_cast<uint64_t>(label));
    // Fisher-Yates with our own rng so the split is engine-stable
    for (size_t i = idx.size(); i-- > 1;) {
      const size_t j = static_cast<size_t>(rng.integer(i + 1));
      std::swap(idx[i], idx[j]);
    }
    size_t n_train = static_cast<size_t>(std::llround(train_fraction * static_cast<double>(idx.size())));
    n_train = std::clamp<size_t>(n_train, 1, idx.size() - 1);
    for (size_t i = 0; i < n_train; ++i) in_train[idx[i]] = true;
  }

  Dataset train, test;
  train.input_size = test.input_size = dataset.input_size;
  for (size_t i = 0; i < dataset.samples.size(); ++i)
    (in_train[i] ? train : test).samples.push_back(dataset.samples[i]);
  return {std::move(train), std::move(test)};
}

void export_dataset(const Dataset& dataset, const std::string& root_dir) {
  const fs::path root(root_dir);
  fs::create_directories(root / "pos");
  fs::create_directories(root / "neg");
  size_t counter[2] = {0, 0};
  for (const Sample& s : dataset.samples) {
    const int label = s.label == 1 ? 1 : 0;
    char name[32];
    std::snprintf(name, sizeof name, "%06zu.pgm", counter[label]++);
    const fs::path out = root / (label == 1 ? "pos" : "neg") / name;
    const size_t h = s.image.dim(1), w = s.image.dim(2);
    write_pgm_minmax(out.string(), s.image.reshaped({h, w}));
  }
}

}  // namespace camcls
