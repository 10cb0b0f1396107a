#pragma once

#include <optional>
#include <string>

#include <json.hpp>

#include "camcls/data.hpp"
#include "camcls/model.hpp"
#include "camcls/training.hpp"
#include "camcls/tta.hpp"

namespace camcls {

// Where the run's data comes from: a pos/neg directory or the synthetic
// generator, plus the train/test split.
struct DataConfig {
  std::optional<std::string> root;
  std::optional<SynthConfig> synth;
  double train_fraction = 0.8;
  uint64_t split_seed = 0;
};

// The JSON run document. Unknown keys are rejected at every level and all
// module invariants are re-validated on load.
struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  std::optional<TtaConfig> tta;
  DataConfig data;
};

RunConfig parse_run_config_json(const nlohmann::json& j);
RunConfig parse_run_config(const std::string& path);

// Full dataset before splitting.
Dataset realize_dataset(const DataConfig& cfg, size_t input_size);

// Train/test per the data section.
std::pair<Dataset, Dataset> realize_split(const DataConfig& cfg, size_t input_size);

}  // namespace camcls
