#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "camcls/model.hpp"

namespace camcls {

// Checkpoint container: magic, length-prefixed JSON config block, then the
// parameter tensors in declaration order, each stored as (name, shape,
// 64-bit little-endian payload). Round-trips bit-exactly.
inline constexpr char kCheckpointMagic[8] = {'C', 'A', 'M', 'C', 'L', 'S', '0', '1'};

namespace detail {

inline void put_u32(std::ostream& os, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

inline void put_u64(std::ostream& os, uint64_t v) {
  put_u32(os, static_cast<uint32_t>(v));
  put_u32(os, static_cast<uint32_t>(v >> 32));
}

inline void put_f64(std::ostream& os, double v) {
  uint64_t bits;
  std::memcpy(&bits, &v, 8);
  put_u64(os, bits);
}

inline uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is) throw Error("checkpoint: truncated file");
  return static_cast<uint32_t>(b[0]) | static_cast<uint32_t>(b[1]) << 8 |
         static_cast<uint32_t>(b[2]) << 16 | static_cast<uint32_t>(b[3]) << 24;
}

inline uint64_t get_u64(std::istream& is) {
  const uint64_t lo = get_u32(is);
  const uint64_t hi = get_u32(is);
  return lo | hi << 32;
}

inline double get_f64(std::istream& is) {
  const uint64_t bits = get_u64(is);
  double v;
  std::memcpy(&v, &bits, 8);
  return v;
}

template <typename T>
void put_param(std::ostream& os, const std::string& name, const Tensor<T>& t) {
  put_u32(os, static_cast<uint32_t>(name.size()));
  os.write(name.data(), static_cast<std::streamsize>(name.size()));
  put_u32(os, static_cast<uint32_t>(t.rank()));
  for (size_t d : t.shape) put_u32(os, static_cast<uint32_t>(d));
  for (T v : t.data) put_f64(os, static_cast<double>(v));
}

template <typename T>
Tensor<T> get_param(std::istream& is, const std::string& expect_name) {
  const uint32_t len = get_u32(is);
  std::string name(len, '\0');
  is.read(name.data(), len);
  if (!is || name != expect_name)
    throw Error("checkpoint: unexpected parameter '" + name + "'");
  const uint32_t rank = get_u32(is);
  std::vector<size_t> shape(rank);
  for (auto& d : shape) d = get_u32(is);
  Tensor<T> t(shape);
  for (T& v : t.data) v = static_cast<T>(get_f64(is));
  if (!is) throw Error("checkpoint: truncated parameter payload");
  return t;
}

}  // namespace detail

inline nlohmann::ordered_json model_config_json(const ModelConfig& cfg) {
  return nlohmann::ordered_json{{"input_size", cfg.input_size},
                                {"grid_size", cfg.grid_size},
                                {"channels", cfg.channels},
                                {"in_channels", cfg.in_channels},
                                {"block_channels", cfg.resolved_block_channels()},
                                {"seed", cfg.seed}};
}

inline ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig cfg;
  cfg.input_size = j.at("input_size").get<size_t>();
  cfg.grid_size = j.at("grid_size").get<size_t>();
  cfg.channels = j.at("channels").get<size_t>();
  cfg.in_channels = j.at("in_channels").get<size_t>();
  cfg.block_channels = j.at("block_channels").get<std::vector<size_t>>();
  cfg.seed = j.at("seed").get<uint64_t>();
  cfg.validate();
  return cfg;
}

template <typename T>
void save_checkpoint(const std::string& path, const ModelT<T>& m) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FileError("checkpoint: cannot open '" + path + "' for writing");
  os.write(kCheckpointMagic, 8);
  const std::string cfg = model_config_json(m.config).dump();
  detail::put_u32(os, static_cast<uint32_t>(cfg.size()));
  os.write(cfg.data(), static_cast<std::streamsize>(cfg.size()));
  detail::put_u32(os, static_cast<uint32_t>(2 * m.blocks.size() + 2));
  for (size_t s = 0; s < m.blocks.size(); ++s) {
    detail::put_param(os, "block" + std::to_string(s) + ".weight", m.blocks[s].weight);
    detail::put_param(os, "block" + std::to_string(s) + ".bias", m.blocks[s].bias);
  }
  detail::put_param(os, "head.weight", m.head_weight);
  detail::put_param(os, "head.bias", m.head_bias);
  if (!os) throw Error("checkpoint: write failed for '" + path + "'");
}

template <typename T = float>
ModelT<T> load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FileError("checkpoint: cannot open '" + path + "'");
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, kCheckpointMagic, 8) != 0)
    throw Error("checkpoint: bad magic in '" + path + "'");
  const uint32_t cfg_len = detail::get_u32(is);
  std::string cfg_str(cfg_len, '\0');
  is.read(cfg_str.data(), cfg_len);
  if (!is) throw Error("checkpoint: truncated config block");
  nlohmann::json cfg_json = nlohmann::json::parse(cfg_str, nullptr, false);
  if (cfg_json.is_discarded()) throw Error("checkpoint: corrupt config block");
  ModelT<T> m;
  m.config = model_config_from_json(cfg_json);
  const uint32_t n_params = detail::get_u32(is);
  const size_t stages = m.config.stages();
  if (n_params != 2 * stages + 2) throw Error("checkpoint: parameter count mismatch");
  for (size_t s = 0; s < stages; ++s) {
    ConvBlock<T> blk;
    blk.weight = detail::get_param<T>(is, "block" + std::to_string(s) + ".weight");
    blk.bias = detail::get_param<T>(is, "block" + std::to_string(s) + ".bias");
    m.blocks.push_back(std::move(blk));
  }
  m.head_weight = detail::get_param<T>(is, "head.weight");
  m.head_bias = detail::get_param<T>(is, "head.bias");
  return m;
}

}  // namespace camcls
