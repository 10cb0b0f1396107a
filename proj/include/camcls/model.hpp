#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "camcls/autodiff.hpp"
#include "camcls/ops.hpp"
#include "camcls/rng.hpp"
#include "camcls/tensor.hpp"

namespace camcls {

// Geometry and initialization of the CAM-native classifier: a conv stack
// that reduces input_size x input_size down to a channels x G x G feature
// map, global average pooling, and a single-logit linear head.
struct ModelConfig {
  size_t input_size = 224;
  size_t grid_size = 7;  // G
  size_t channels = 32;  // feature depth C
  size_t in_channels = 1;
  std::vector<size_t> block_channels;  // per-stage widths; empty -> ramp to channels
  uint64_t seed = 0;

  size_t patch_size() const { return input_size / grid_size; }

  // Each stage halves the spatial side, so the reduction factor must be a
  // power of two.
  size_t stages() const {
    size_t f = patch_size(), n = 0;
    while (f > 1) {
      f /= 2;
      ++n;
    }
    return n;
  }

  void validate() const {
    if (grid_size < 2) throw ConfigError("model: grid_size must be at least 2");
    if (input_size == 0 || input_size % grid_size != 0)
      throw ConfigError("model: input_size must be a positive multiple of grid_size");
    const size_t f = input_size / grid_size;
    if ((f & (f - 1)) != 0 || f < 2)
      throw ConfigError("model: input_size / grid_size must be a power of two >= 2");
    if (channels == 0 || in_channels == 0) throw ConfigError("model: channel counts must be positive");
    if (!block_channels.empty()) {
      if (block_channels.size() != stages())
        throw ConfigError("model: block_channels must list one width per stage");
      for (size_t c : block_channels)
        if (c == 0) throw ConfigError("model: block widths must be positive");
      if (block_channels.back() != channels)
        throw ConfigError("model: last block width must equal channels");
    }
  }

  std::vector<size_t> resolved_block_channels() const {
    if (!block_channels.empty()) return block_channels;
    std::vector<size_t> out(stages(), channels);
    // default ramp: halve the width per step back from the top, floor 4
    for (size_t i = out.size(); i-- > 0;) {
      if (i + 1 < out.size()) {
        const size_t half = out[i + 1] / 2;
        out[i] = half < 4 ? (channels < 4 ? channels : 4) : half;
      }
    }
    return out;
  }
};

template <typename T>
struct ConvBlock {
  Tensor<T> weight;  // OIHW, 3x3
  Tensor<T> bias;    // O
};

template <typename T>
struct ModelT {
  ModelConfig config;
  std::vector<ConvBlock<T>> blocks;
  Tensor<T> head_weight;  // C
  Tensor<T> head_bias;    // scalar, stored as {1}
};

using Model = ModelT<float>;

// Deterministic Kaiming-style init for the trunk, small zero-mean head.
template <typename T>
ModelT<T> build_model(const ModelConfig& config) {
  config.validate();
  ModelT<T> m;
  m.config = config;
  Rng rng(config.seed);
  size_t in_c = config.in_channels;
  for (size_t s = 0; s < config.stages(); ++s) {
    const size_t out_c = config.resolved_block_channels()[s];
    ConvBlock<T> blk;
    blk.weight = Tensor<T>({out_c, in_c, 3, 3});
    const double std_dev = std::sqrt(2.0 / static_cast<double>(in_c * 9));
    for (T& v : blk.weight.data) v = static_cast<T>(rng.normal() * std_dev);
    blk.bias = Tensor<T>::zeros({out_c});
    m.blocks.push_back(std::move(blk));
    in_c = out_c;
  }
  m.head_weight = Tensor<T>({config.channels});
  for (T& v : m.head_weight.data) v = static_cast<T>(rng.normal() * 0.01);
  m.head_bias = Tensor<T>::zeros({1});
  return m;
}

template <typename T>
struct ForwardResult {
  Tensor<T> feature;  // C x G x G
  T logit;
  T prob;

  // The G*G embedding vectors are the feature map viewed per cell.
  Tensor<T> embedding(size_t i, size_t j) const {
    const size_t c = feature.dim(0);
    Tensor<T> v({c});
    for (size_t ic = 0; ic < c; ++ic) v.data[ic] = feature(ic, i, j);
    return v;
  }
};

namespace detail {
template <typename T>
Tensor<T> as_nchw_image(const Tensor<T>& image, const ModelConfig& cfg) {
  if (image.rank() != 3 || image.dim(0) != cfg.in_channels)
    throw DimensionError("forward: expected CxHxW image");
  if (image.dim(1) != cfg.input_size || image.dim(2) != cfg.input_size)
    throw DimensionError("forward: image spatial size does not match model input size");
  return image.reshaped({1, cfg.in_channels, cfg.input_size, cfg.input_size});
}
}  // namespace detail

// Plain inference pass: conv/relu/avgpool stages, GAP, linear head.
template <typename T>
ForwardResult<T> forward(const ModelT<T>& m, const Tensor<T>& image) {
  Tensor<T> x = detail::as_nchw_image(image, m.config);
  for (const auto& blk : m.blocks) {
    x = ops::conv2d(x, blk.weight, 1, 1);
    x = ops::add_channel_bias(x, blk.bias);
    x = ops::relu(x);
    x = ops::avgpool2(x);
  }
  ForwardResult<T> out;
  const size_t c = m.config.channels, g = m.config.grid_size;
  Tensor<T> pooled = ops::gap(x);  // 1 x C
  Tensor<T> logit =
      ops::linear(pooled, m.head_weight.reshaped({1, c}), m.head_bias);  // 1 x 1
  out.feature = x.reshaped({c, g, g});
  out.logit = logit.data[0];
  out.prob = static_cast<T>(ops::sigmoid_scalar(static_cast<double>(out.logit)));
  if (!out.feature.all_finite() || !std::isfinite(static_cast<double>(out.logit)))
    throw Error("forward: non-finite activation");
  return out;
}

// Parameter node ids for one tape, in declaration order.
struct ModelParamVars {
  std::vector<std::pair<int, int>> blocks;  // (weight, bias)
  int head_weight = -1;
  int head_bias = -1;
};

template <typename T>
ModelParamVars register_params(Tape<T>& tape, const ModelT<T>& m) {
  ModelParamVars v;
  for (const auto& blk : m.blocks)
    v.blocks.emplace_back(tape.leaf(blk.weight), tape.leaf(blk.bias));
  v.head_weight = tape.leaf(m.head_weight.reshaped({1, m.config.channels}));
  v.head_bias = tape.leaf(m.head_bias);
  return v;
}

struct TapeForward {
  int feature = -1;  // 1 x C x G x G node
  int logit = -1;    // scalar node
};

// Training pass on the tape; value math is shared with forward() through
// the ops:: kernels.
template <typename T>
TapeForward forward_on_tape(Tape<T>& tape, const ModelParamVars& vars, const ModelT<T>& m,
                            const Tensor<T>& image) {
  int x = tape.leaf(detail::as_nchw_image(image, m.config));
  for (size_t s = 0; s < m.blocks.size(); ++s) {
    x = tape.conv2d(x, vars.blocks[s].first, 1, 1);
    x = tape.add_channel_bias(x, vars.blocks[s].second);
    x = tape.relu(x);
    x = tape.avgpool2(x);
  }
  TapeForward out;
  out.feature = x;
  const int pooled = tape.gap(x);
  out.logit = tape.linear(pooled, vars.head_weight, vars.head_bias);
  return out;
}

struct PatchRect {
  size_t top = 0, left = 0, height = 0, width = 0;
};

// Input-pixel rectangle fed into feature-grid cell (i, j); the G*G
// rectangles tile the input exactly.
inline PatchRect cell_to_patch(size_t i, size_t j, const ModelConfig& cfg) {
  if (i >= cfg.grid_size || j >= cfg.grid_size)
    throw ContractError("cell_to_patch: cell outside grid");
  const size_t p = cfg.patch_size();
  return PatchRect{i * p, j * p, p, p};
}

}  // namespace camcls
