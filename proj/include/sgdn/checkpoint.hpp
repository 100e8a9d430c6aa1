#pragma once

// Self-describing JSON checkpoint: model config, every parameter as a named
// row-major array, and optionally the training state (train config, step,
// optimizer moments, RNG state).

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "sgdn/config.hpp"
#include "sgdn/model.hpp"
#include "sgdn/trainer.hpp"

namespace sgdn {

inline constexpr int kCheckpointVersion = 1;

struct TrainingState {
  TrainConfig config;
  int step = 0;
  std::vector<Matrix> first_moment;
  std::vector<Matrix> second_moment;
  std::string rng_state;
};

struct Checkpoint {
  ModelConfig model_config;
  std::vector<std::string> names;
  std::vector<Matrix> values;
  std::optional<TrainingState> training;
};

Checkpoint make_checkpoint(const SgdnModel& model, const Trainer* trainer = nullptr);

// Rebuilds the model and copies every parameter in. Throws SchemaViolation
// when names or shapes disagree with the stored config.
SgdnModel model_from_checkpoint(const Checkpoint& checkpoint);
// Copies parameters into an existing model of the same layout.
void load_parameters(SgdnModel& model, const Checkpoint& checkpoint);

std::string checkpoint_to_json(const Checkpoint& checkpoint);
Checkpoint checkpoint_from_json(const std::string& text);

// Throws IOFailure / SchemaViolation.
void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace sgdn
