#pragma once

// Two-stage training loop: grounding (expression nouns as candidates, all
// four loss terms) and fixed-set (a fixed category list, box and object
// terms only, relation parameters held still).

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "sgdn/expr_parser.hpp"
#include "sgdn/model.hpp"

namespace sgdn {

enum class Stage { kGrounding, kFixedSet };
// Where per-sample candidate labels come from: the parsed expression, the
// split's base lists, or the split's full lists.
enum class CandidateSource { kExpression, kBase, kAll };
enum class OptimizerKind { kSgd, kAdam };
enum class LrSchedule { kConstant, kCosine };

Stage parse_stage(std::string_view name);
std::string to_string(Stage s);
CandidateSource parse_candidate_source(std::string_view name);
std::string to_string(CandidateSource c);
OptimizerKind parse_optimizer(std::string_view name);
std::string to_string(OptimizerKind o);
LrSchedule parse_lr_schedule(std::string_view name);
std::string to_string(LrSchedule s);

struct TrainConfig {
  Stage stage = Stage::kGrounding;
  CandidateSource candidates = CandidateSource::kExpression;
  int steps = 3000;
  int batch_size = 4;
  OptimizerKind optimizer = OptimizerKind::kSgd;
  Real learning_rate = 0.02;
  Real momentum = 0.9;
  Real adam_beta2 = 0.999;
  Real adam_eps = 1e-8;
  LrSchedule schedule = LrSchedule::kConstant;
  Real grad_clip = 1.0;  // global norm; <= 0 disables
  std::uint64_t seed = 0;
  LossLambdas lambdas;
  MatchCostWeights match;
  bool per_block_matching = false;
  bool use_prompt = false;

  // Throws ConfigInvalid.
  void validate() const;
  // The fixed-set stage drops the two relation terms.
  LossLambdas effective_lambdas() const;
  Real learning_rate_at(int step) const;
};

struct StepRecord {
  int step = 0;
  LossBreakdown loss;
  Real grad_norm = 0.0;
  Real learning_rate = 0.0;
};

std::string to_json_line(const StepRecord& record);

// Number of (sample, label) occurrences in `samples` that use a novel
// category or novel relation of the split.
int split_violations(const std::vector<GroundingSample>& samples, const SplitConfig& split);

struct SampleVocab {
  std::vector<std::string> objects;    // ends with "no object"
  std::vector<std::string> relations;  // ends with "no relation"
};

class Trainer {
 public:
  Trainer(SgdnModel& model, TrainConfig config, SplitConfig split,
          RelationLexicon lexicon = RelationLexicon::defaults());

  const TrainConfig& config() const { return config_; }
  int step_count() const { return step_; }
  const std::vector<int>& frozen() const { return frozen_; }

  SampleVocab vocab_for(const GroundingSample& sample) const;
  // Forward + loss for one sample without touching gradients or state.
  LossBreakdown sample_loss(const GroundingSample& sample) const;

  // One optimizer update on the mean loss of the batch. Throws
  // DivergenceDetected, leaving parameters at their last finite values.
  StepRecord step(std::span<const GroundingSample* const> batch);

  // Runs config.steps updates over epochs of shuffled samples. Throws
  // ConfigInvalid when the data violate the split.
  void run(const std::vector<GroundingSample>& data, const std::function<void(const StepRecord&)>& on_step = {});

  // Optimizer state, for checkpoints.
  const std::vector<Matrix>& first_moment() const { return m1_; }
  const std::vector<Matrix>& second_moment() const { return m2_; }
  std::string rng_state() const;
  void restore(int step, std::vector<Matrix> m1, std::vector<Matrix> m2, const std::string& rng_state);

 private:
  SgdnModel* model_;
  TrainConfig config_;
  SplitConfig split_;
  RelationLexicon lexicon_;
  std::vector<int> frozen_;
  std::vector<char> is_frozen_;
  std::vector<Matrix> m1_;
  std::vector<Matrix> m2_;
  Rng rng_;
  int step_ = 0;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
};

}  // namespace sgdn
