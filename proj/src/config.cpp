#include "camcls/config.hpp"

#include <fstream>
#include <set>

#include "camcls/error.hpp"

namespace camcls {

namespace {

using nlohmann::json;

void reject_unknown_keys(const json& j, const std::string& where,
                         const std::set<std::string>& allowed) {
  if (!j.is_object()) throw ConfigError("config: '" + where + "' must be a JSON object");
  for (const auto& [key, _] : j.items())
    if (!allowed.count(key))
      throw ConfigError("config: unknown key '" + key + "' in section '" + where + "'");
}

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(std::string("config: bad value for '") + key + "'");
  }
}

ModelConfig parse_model(const json& j) {
  reject_unknown_keys(j, "model",
                      {"input_size", "grid_size", "channels", "in_channels", "block_channels",
                       "seed"});
  ModelConfig cfg;
  cfg.input_size = get_or<size_t>(j, "input_size", cfg.input_size);
  cfg.grid_size = get_or<size_t>(j, "grid_size", cfg.grid_size);
  cfg.channels = get_or<size_t>(j, "channels", cfg.channels);
  cfg.in_channels = get_or<size_t>(j, "in_channels", cfg.in_channels);
  cfg.block_channels = get_or<std::vector<size_t>>(j, "block_channels", cfg.block_channels);
  cfg.seed = get_or<uint64_t>(j, "seed", cfg.seed);
  cfg.validate();
  return cfg;
}

TtaConfig parse_tta(const json& j, size_t input_size) {
  reject_unknown_keys(j, "tta", {"k", "theta", "mask_patch_px", "mask_fill"});
  TtaConfig cfg;
  cfg.k = get_or<size_t>(j, "k", cfg.k);
  cfg.theta = get_or<double>(j, "theta", cfg.theta);
  cfg.mask_patch_px = get_or<size_t>(j, "mask_patch_px", cfg.mask_patch_px);
  cfg.mask_fill = get_or<float>(j, "mask_fill", cfg.mask_fill);
  cfg.validate(input_size);
  return cfg;
}

TrainConfig parse_train(const json& j) {
  reject_unknown_keys(j, "train",
                      {"epochs", "batch_size", "learning_rate", "momentum", "alpha",
                       "snapmix_enabled", "cpe_enabled", "cosine_lr", "seed"});
  TrainConfig cfg;
  cfg.epochs = get_or<size_t>(j, "epochs", cfg.epochs);
  cfg.batch_size = get_or<size_t>(j, "batch_size", cfg.batch_size);
  cfg.learning_rate = get_or<double>(j, "learning_rate", cfg.learning_rate);
  cfg.momentum = get_or<double>(j, "momentum", cfg.momentum);
  cfg.alpha = get_or<double>(j, "alpha", cfg.alpha);
  cfg.snapmix_enabled = get_or<bool>(j, "snapmix_enabled", cfg.snapmix_enabled);
  cfg.cpe_enabled = get_or<bool>(j, "cpe_enabled", cfg.cpe_enabled);
  cfg.cosine_lr = get_or<bool>(j, "cosine_lr", cfg.cosine_lr);
  cfg.seed = get_or<uint64_t>(j, "seed", cfg.seed);
  cfg.validate();
  return cfg;
}

SynthConfig parse_synth(const json& j) {
  reject_unknown_keys(j, "data.synth",
                      {"n_per_class", "image_size", "blob_radius_min", "blob_radius_max",
                       "noise_sigma", "seed"});
  SynthConfig cfg;
  cfg.n_per_class = get_or<size_t>(j, "n_per_class", cfg.n_per_class);
  cfg.image_size = get_or<size_t>(j, "image_size", cfg.image_size);
  cfg.blob_radius_min = get_or<double>(j, "blob_radius_min", cfg.blob_radius_min);
  cfg.blob_radius_max = get_or<double>(j, "blob_radius_max", cfg.blob_radius_max);
  cfg.noise_sigma = get_or<double>(j, "noise_sigma", cfg.noise_sigma);
  cfg.seed = get_or<uint64_t>(j, "seed", cfg.seed);
  cfg.validate();
  return cfg;
}

DataConfig parse_data(const json& j) {
  reject_unknown_keys(j, "data", {"root", "synth", "train_fraction", "split_seed"});
  DataConfig cfg;
  if (j.contains("root")) cfg.root = get_or<std::string>(j, "root", "");
  if (j.contains("synth")) cfg.synth = parse_synth(j.at("synth"));
  if (cfg.root.has_value() == cfg.synth.has_value())
    throw ConfigError("config: data section needs exactly one of 'root' or 'synth'");
  cfg.train_fraction = get_or<double>(j, "train_fraction", cfg.train_fraction);
  cfg.split_seed = get_or<uint64_t>(j, "split_seed", cfg.split_seed);
  if (cfg.train_fraction <= 0.0 || cfg.train_fraction >= 1.0)
    throw ConfigError("config: train_fraction must lie in (0, 1)");
  return cfg;
}

}  // namespace

RunConfig parse_run_config_json(const json& j) {
  reject_unknown_keys(j, "<root>", {"model", "train", "tta", "data"});
  if (!j.contains("model")) throw ConfigError("config: missing 'model' section");
  if (!j.contains("train")) throw ConfigError("config: missing 'train' section");
  if (!j.contains("data")) throw ConfigError("config: missing 'data' section");
  RunConfig cfg;
  cfg.model = parse_model(j.at("model"));
  cfg.train = parse_train(j.at("train"));
  cfg.data = parse_data(j.at("data"));
  if (j.contains("tta")) {
    cfg.tta = parse_tta(j.at("tta"), cfg.model.input_size);
    cfg.train.eval_tta = cfg.tta;
  }
  if (cfg.data.synth && cfg.data.synth->image_size != cfg.model.input_size)
    throw ConfigError("config: synth image_size must match model input_size");
  return cfg;
}

RunConfig parse_run_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw FileError("config: cannot open '" + path + "'");
  json j = json::parse(is, nullptr, false);
  if (j.is_discarded()) throw ConfigError("config: '" + path + "' is not valid JSON");
  return parse_run_config_json(j);
}

Dataset realize_dataset(const DataConfig& cfg, size_t input_size) {
  if (cfg.synth) return synth_generate(*cfg.synth);
  return load_dataset(*cfg.root, input_size);
}

std::pair<Dataset, Dataset> realize_split(const DataConfig& cfg, size_t input_size) {
  return split(realize_dataset(cfg, input_size), cfg.train_fraction, cfg.split_seed);
}

}  // namespace camcls
