#include "sgdn/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>
#include <sstream>

#include <json.hpp>

#include "sgdn/errors.hpp"

namespace sgdn {

Stage parse_stage(std::string_view name) {
  if (name == "grounding") return Stage::kGrounding;
  if (name == "fixed_set") return Stage::kFixedSet;
  throw ConfigInvalid("unknown stage: " + std::string(name));
}

std::string to_string(Stage s) { return s == Stage::kGrounding ? "grounding" : "fixed_set"; }

CandidateSource parse_candidate_source(std::string_view name) {
  if (name == "expression") return CandidateSource::kExpression;
  if (name == "base") return CandidateSource::kBase;
  if (name == "all") return CandidateSource::kAll;
  throw ConfigInvalid("unknown candidate source: " + std::string(name));
}

std::string to_string(CandidateSource c) {
  switch (c) {
    case CandidateSource::kExpression: return "expression";
    case CandidateSource::kBase: return "base";
    case CandidateSource::kAll: return "all";
  }
  return "";
}

OptimizerKind parse_optimizer(std::string_view name) {
  if (name == "sgd") return OptimizerKind::kSgd;
  if (name == "adam") return OptimizerKind::kAdam;
  throw ConfigInvalid("unknown optimizer: " + std::string(name));
}

std::string to_string(OptimizerKind o) { return o == OptimizerKind::kSgd ? "sgd" : "adam"; }

LrSchedule parse_lr_schedule(std::string_view name) {
  if (name == "constant") return LrSchedule::kConstant;
  if (name == "cosine") return LrSchedule::kCosine;
  throw ConfigInvalid("unknown learning-rate schedule: " + std::string(name));
}

std::string to_string(LrSchedule s) { return s == LrSchedule::kConstant ? "constant" : "cosine"; }

void TrainConfig::validate() const {
  if (steps < 0) throw ConfigInvalid("train.steps must be >= 0");
  if (batch_size < 1) throw ConfigInvalid("train.batch_size must be >= 1");
  if (!(learning_rate >= 0)) throw ConfigInvalid("train.learning_rate must be >= 0");
  if (!(momentum >= 0 && momentum < 1)) throw ConfigInvalid("train.momentum must lie in [0, 1)");
  if (!(adam_beta2 >= 0 && adam_beta2 < 1)) throw ConfigInvalid("train.adam_beta2 must lie in [0, 1)");
  for (Real l : {lambdas.box, lambdas.object, lambdas.relation, lambdas.cross_modal}) {
    if (!(l >= 0)) throw ConfigInvalid("loss weights must be >= 0");
  }
}

LossLambdas TrainConfig::effective_lambdas() const {
  LossLambdas l = lambdas;
  if (stage == Stage::kFixedSet) l.relation = l.cross_modal = 0.0;
  return l;
}

Real TrainConfig::learning_rate_at(int step) const {
  if (schedule == LrSchedule::kConstant || steps <= 0) return learning_rate;
  const Real t = std::min<Real>(1.0, static_cast<Real>(step) / steps);
  return learning_rate * 0.5 * (1.0 + std::cos(std::numbers::pi * t));
}

std::string to_json_line(const StepRecord& r) {
  nlohmann::ordered_json j;
  j["step"] = r.step;
  j["total"] = r.loss.total;
  j["l_bb"] = r.loss.l_bb;
  j["l_ocls"] = r.loss.l_ocls;
  j["l_pcls"] = r.loss.l_pcls;
  j["l_cml"] = r.loss.l_cml;
  j["grad_norm"] = r.grad_norm;
  j["lr"] = r.learning_rate;
  return j.dump();
}

int split_violations(const std::vector<GroundingSample>& samples, const SplitConfig& split) {
  const std::set<std::string> novel_rel(split.novel_relations.begin(), split.novel_relations.end());
  int count = 0;
  for (const auto& s : samples) {
    for (const auto& c : s.gt_categories) count += split.is_novel_category(c) ? 1 : 0;
    for (const auto& t : s.gt_triplets) count += novel_rel.count(t.predicate) ? 1 : 0;
  }
  return count;
}

Trainer::Trainer(SgdnModel& model, TrainConfig config, SplitConfig split, RelationLexicon lexicon)
    : model_(&model),
      config_(std::move(config)),
      split_(std::move(split)),
      lexicon_(std::move(lexicon)),
      rng_(config_.seed) {
  config_.validate();
  split_.validate();
  if (config_.stage == Stage::kFixedSet) frozen_ = model.relation_parameter_ids();
  is_frozen_.assign(model.params().size(), 0);
  for (int id : frozen_) is_frozen_[id] = 1;
  m1_ = model.params().zero_grads();
  if (config_.optimizer == OptimizerKind::kAdam) m2_ = model.params().zero_grads();
}

SampleVocab Trainer::vocab_for(const GroundingSample& sample) const {
  SampleVocab v;
  switch (config_.candidates) {
    case CandidateSource::kExpression: {
      const TrainingVocab tv = build_training_vocab(parse_expression(sample.expression, lexicon_));
      v.objects = tv.object_categories;
      v.relations = tv.relation_categories;
      return v;
    }
    case CandidateSource::kBase:
      v.objects = with_sentinel(split_.base_categories, kNoObject);
      v.relations = with_sentinel(split_.base_relations, kNoRelation);
      return v;
    case CandidateSource::kAll:
      v.objects = with_sentinel(split_.all_categories(), kNoObject);
      v.relations = with_sentinel(split_.all_relations(), kNoRelation);
      return v;
  }
  return v;
}

namespace {

struct SampleResult {
  LossBreakdown loss;
  bool finite = true;
};

SampleResult run_sample(const SgdnModel& model, const GroundingSample& sample, const SampleVocab& vocab,
                        const TrainConfig& config, std::vector<Matrix>* grads) {
  const LossConfig loss_config{config.effective_lambdas(), config.match, config.per_block_matching};
  const CategoryEmbeddings obj = model.text_encoder().encode(vocab.objects, config.use_prompt);
  const CategoryEmbeddings rel = model.text_encoder().encode(vocab.relations, config.use_prompt);
  const SampleTargets targets = make_targets(sample, vocab.objects, vocab.relations);
  ad::Tape tape(model.params());
  const ModelOutput out = model.forward(tape, sample.image, obj, rel, loss_config.relations_enabled());
  TrainingLoss loss;
  try {
    loss = model.loss(tape, out, targets, loss_config);
  } catch (const NonFiniteCost&) {
    // A non-finite forward pass already poisons the matching costs.
    return {{}, false};
  }
  SampleResult r{loss.parts, std::isfinite(loss.parts.total)};
  if (grads && r.finite) {
    tape.backward(loss.total);
    tape.collect_param_grads(*grads);
  }
  return r;
}

}  // namespace

LossBreakdown Trainer::sample_loss(const GroundingSample& sample) const {
  return run_sample(*model_, sample, vocab_for(sample), config_, nullptr).loss;
}

StepRecord Trainer::step(std::span<const GroundingSample* const> batch) {
  if (batch.empty()) throw ConfigInvalid("empty batch");
  ParameterStore& params = model_->params();
  std::vector<Matrix> grads = params.zero_grads();
  StepRecord record;
  record.step = step_ + 1;
  const Real inv_b = 1.0 / static_cast<Real>(batch.size());
  for (const GroundingSample* sample : batch) {
    const SampleResult r = run_sample(*model_, *sample, vocab_for(*sample), config_, &grads);
    if (!r.finite) throw DivergenceDetected("non-finite loss at step " + std::to_string(record.step));
    record.loss.l_bb += r.loss.l_bb * inv_b;
    record.loss.l_ocls += r.loss.l_ocls * inv_b;
    record.loss.l_pcls += r.loss.l_pcls * inv_b;
    record.loss.l_cml += r.loss.l_cml * inv_b;
    record.loss.total += r.loss.total * inv_b;
  }
  record.loss.lambdas = config_.effective_lambdas();

  Real sq = 0.0;
  for (Index i = 0; i < params.size(); ++i) {
    if (is_frozen_[i]) continue;
    grads[i] *= inv_b;
    sq += grads[i].squaredNorm();
  }
  record.grad_norm = std::sqrt(sq);
  if (!std::isfinite(record.grad_norm)) {
    throw DivergenceDetected("non-finite gradient at step " + std::to_string(record.step));
  }
  const Real clip =
      (config_.grad_clip > 0 && record.grad_norm > config_.grad_clip) ? config_.grad_clip / record.grad_norm : 1.0;
  record.learning_rate = config_.learning_rate_at(step_);

  const Real lr = record.learning_rate;
  const int t = step_ + 1;
  for (Index i = 0; i < params.size(); ++i) {
    if (is_frozen_[i]) continue;
    const Matrix g = grads[i] * clip;
    if (config_.optimizer == OptimizerKind::kSgd) {
      m1_[i] = config_.momentum * m1_[i] + g;
      params.value(static_cast<int>(i)) -= lr * m1_[i];
    } else {
      const Real b1 = config_.momentum, b2 = config_.adam_beta2;
      m1_[i] = b1 * m1_[i] + (1 - b1) * g;
      m2_[i] = b2 * m2_[i] + (1 - b2) * g.cwiseAbs2();
      const Real c1 = 1 - std::pow(b1, t), c2 = 1 - std::pow(b2, t);
      params.value(static_cast<int>(i)).array() -=
          lr * (m1_[i].array() / c1) / ((m2_[i].array() / c2).sqrt() + config_.adam_eps);
    }
  }
  step_ = t;
  return record;
}

void Trainer::run(const std::vector<GroundingSample>& data, const std::function<void(const StepRecord&)>& on_step) {
  if (data.empty()) throw ConfigInvalid("training set is empty");
  if (const int bad = split_violations(data, split_); bad > 0) {
    throw ConfigInvalid("training data contain " + std::to_string(bad) + " novel labels");
  }
  std::vector<const GroundingSample*> batch;
  for (int s = 0; s < config_.steps; ++s) {
    batch.clear();
    while (static_cast<int>(batch.size()) < config_.batch_size) {
      if (cursor_ >= order_.size()) {
        order_.resize(data.size());
        for (std::size_t i = 0; i < order_.size(); ++i) order_[i] = i;
        std::shuffle(order_.begin(), order_.end(), rng_);
        cursor_ = 0;
      }
      batch.push_back(&data[order_[cursor_++]]);
    }
    const StepRecord r = step(batch);
    if (on_step) on_step(r);
  }
}

std::string Trainer::rng_state() const {
  std::ostringstream os;
  os << rng_;
  return os.str();
}

void Trainer::restore(int step, std::vector<Matrix> m1, std::vector<Matrix> m2, const std::string& rng_state) {
  if (m1.size() != m1_.size() || (!m2_.empty() && m2.size() != m2_.size())) {
    throw SchemaViolation("optimizer state does not match the model");
  }
  step_ = step;
  m1_ = std::move(m1);
  if (!m2_.empty()) m2_ = std::move(m2);
  std::istringstream is(rng_state);
  is >> rng_;
  if (!is) throw SchemaViolation("bad RNG state");
  order_.clear();
  cursor_ = 0;
}

}  // namespace sgdn
