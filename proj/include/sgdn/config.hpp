#pragma once

// Structured run configuration: one JSON document with a section per
// command. Missing keys take defaults; unknown keys are rejected.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "sgdn/data_synth.hpp"
#include "sgdn/model.hpp"
#include "sgdn/trainer.hpp"

namespace sgdn {

struct DataConfig {
  SynthConfig synth;
  SplitConfig split = default_split();
  int train_samples = 2000;
  int val_samples = 200;
  std::uint64_t seed = 1;
  std::string lexicon_path;  // empty: built-in relation phrases

  void validate() const;
};

struct EvalConfig {
  Real iou_threshold = 0.5;
  Real score_threshold = 0.0;
  bool use_prompt = false;
  // Empty lists mean the split's full category / relation lists.
  std::vector<std::string> categories;
  std::vector<std::string> relations;
};

struct InferConfig {
  Real score_threshold = 0.5;
  bool use_prompt = false;
};

struct GradCheckConfig {
  int trials = 3;
  Real op_tolerance = 1e-4;
  Real model_tolerance = 1e-3;
  std::vector<std::string> ops;  // empty: every registered op
};

struct RunConfig {
  std::uint64_t seed = 0;
  ModelConfig model;
  DataConfig data;
  TrainConfig train = default_train();
  // Settings for the optional second (fixed-set) stage.
  TrainConfig fixed_set = default_fixed_set();
  EvalConfig eval;
  InferConfig infer;
  GradCheckConfig grad_check;

  // Adam, base-list candidates and box_scale 8 for both stages.
  static TrainConfig default_train();
  static TrainConfig default_fixed_set();
  // Throws ConfigInvalid.
  void validate() const;
};

// Throws ConfigInvalid on unknown keys or wrong types.
RunConfig run_config_from_json(const nlohmann::json& j);
nlohmann::ordered_json to_json(const RunConfig& config);
RunConfig load_run_config(const std::filesystem::path& path);

nlohmann::ordered_json to_json(const ModelConfig& config);
ModelConfig model_config_from_json(const nlohmann::json& j);
nlohmann::ordered_json to_json(const TrainConfig& config);
TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig defaults = {});
nlohmann::ordered_json to_json(const SplitConfig& split);
SplitConfig split_config_from_json(const nlohmann::json& j);

}  // namespace sgdn
