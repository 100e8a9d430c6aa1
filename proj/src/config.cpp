#include "sgdn/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "sgdn/errors.hpp"

namespace sgdn {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

const json kEmptyObject = json::object();

// Reads one JSON object, remembering which keys were used so leftovers can
// be reported.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j.is_null() ? kEmptyObject : j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigInvalid(where() + " must be an object");
  }

  template <typename T>
  void read(const char* key, T& out) {
    used_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception&) {
      throw ConfigInvalid(where(key) + " has the wrong type");
    }
  }

  template <typename Enum, typename Parse>
  void read_enum(const char* key, Enum& out, Parse parse) {
    std::string name;
    used_.insert(key);
    if (!j_.contains(key)) return;
    read(key, name);
    out = parse(name);
  }

  Section child(const char* key) {
    used_.insert(key);
    return Section(j_.contains(key) ? j_.at(key) : kEmptyObject, where(key));
  }

  bool has(const char* key) const { return j_.contains(key); }

  void finish() const {
    for (const auto& [key, value] : j_.items()) {
      if (!used_.count(key)) throw ConfigInvalid("unknown config key " + where(key.c_str()));
    }
  }

 private:
  std::string where(const char* key = nullptr) const {
    const std::string base = path_.empty() ? std::string("<root>") : path_;
    return key ? (path_.empty() ? std::string(key) : path_ + "." + key) : base;
  }

  const json& j_;
  std::string path_;
  std::set<std::string> used_;
};

void read_model(Section s, ModelConfig& m) {
  Index dim = m.decoder.dim;
  s.read("dim", dim);
  m.encoder.dim = m.decoder.dim = dim;
  s.read("patch", m.encoder.patch);
  s.read("encoder_layers", m.encoder.layers);
  s.read("encoder_heads", m.encoder.heads);
  s.read("encoder_ffn", m.encoder.ffn_dim);
  s.read("num_queries", m.decoder.num_queries);
  s.read("decoder_blocks", m.decoder.blocks);
  s.read("decoder_heads", m.decoder.heads);
  s.read("decoder_ffn", m.decoder.ffn_dim);
  s.read("sgor_hidden", m.decoder.sgor_hidden);
  s.read_enum("sgor_activation", m.decoder.sgor_activation, parse_activation);
  s.read_enum("box_update", m.decoder.box_update, parse_box_update);
  s.read("use_ssga", m.decoder.use_ssga);
  s.read("box_conditioned_cross_attention", m.decoder.box_conditioned_cross_attention);
  s.read("text_dim", m.text.dim);
  s.read("text_seed", m.text.seed);
  s.read("text_compositional", m.text.compositional);
  s.read("text_label_weight", m.text.label_weight);
  s.finish();
}

void read_split(Section s, SplitConfig& split) {
  s.read("base_categories", split.base_categories);
  s.read("novel_categories", split.novel_categories);
  s.read("base_relations", split.base_relations);
  s.read("novel_relations", split.novel_relations);
  s.finish();
}

void read_train(Section s, TrainConfig& t) {
  s.read_enum("stage", t.stage, parse_stage);
  s.read_enum("candidates", t.candidates, parse_candidate_source);
  s.read("steps", t.steps);
  s.read("batch_size", t.batch_size);
  s.read_enum("optimizer", t.optimizer, parse_optimizer);
  s.read("learning_rate", t.learning_rate);
  s.read("momentum", t.momentum);
  s.read("adam_beta2", t.adam_beta2);
  s.read("adam_eps", t.adam_eps);
  s.read_enum("schedule", t.schedule, parse_lr_schedule);
  s.read("grad_clip", t.grad_clip);
  s.read("seed", t.seed);
  {
    Section l = s.child("lambdas");
    l.read("box", t.lambdas.box);
    l.read("object", t.lambdas.object);
    l.read("relation", t.lambdas.relation);
    l.read("cross_modal", t.lambdas.cross_modal);
    l.finish();
  }
  {
    Section m = s.child("match");
    m.read("box", t.match.box);
    m.read("cls", t.match.cls);
    m.read("iou", t.match.iou);
    m.read("box_scale", t.match.box_scale);
    m.finish();
  }
  s.read("per_block_matching", t.per_block_matching);
  s.read("use_prompt", t.use_prompt);
  s.finish();
}

}  // namespace

void DataConfig::validate() const {
  synth.validate();
  split.validate();
  if (train_samples < 0 || val_samples < 0) throw ConfigInvalid("sample counts must be >= 0");
}

TrainConfig RunConfig::default_train() {
  TrainConfig t;
  t.candidates = CandidateSource::kBase;
  t.steps = 10000;
  t.optimizer = OptimizerKind::kAdam;
  t.learning_rate = 1e-3;
  t.match.box_scale = 8.0;
  return t;
}

TrainConfig RunConfig::default_fixed_set() {
  TrainConfig t = default_train();
  t.stage = Stage::kFixedSet;
  return t;
}

void RunConfig::validate() const {
  model.validate();
  data.validate();
  train.validate();
  fixed_set.validate();
  if (fixed_set.stage != Stage::kFixedSet) throw ConfigInvalid("fixed_set.stage must be fixed_set");
  if (!(eval.iou_threshold > 0 && eval.iou_threshold <= 1)) throw ConfigInvalid("eval.iou_threshold must lie in (0, 1]");
  if (grad_check.trials < 1) throw ConfigInvalid("grad_check.trials must be >= 1");
  if (!(grad_check.op_tolerance > 0 && grad_check.model_tolerance > 0)) {
    throw ConfigInvalid("grad_check tolerances must be positive");
  }
}

RunConfig run_config_from_json(const json& j) {
  RunConfig c;
  Section root(j, "");
  root.read("seed", c.seed);
  c.train.seed = c.fixed_set.seed = c.seed;
  read_model(root.child("model"), c.model);
  {
    Section d = root.child("data");
    SynthConfig& y = c.data.synth;
    d.read("canvas", y.canvas);
    d.read("shapes", y.shapes);
    d.read("colors", y.colors);
    d.read("min_objects", y.min_objects);
    d.read("max_objects", y.max_objects);
    d.read("min_size", y.min_size);
    d.read("max_size", y.max_size);
    d.read("noise", y.noise);
    d.read("near_threshold", y.near_threshold);
    d.read("inside_probability", y.inside_probability);
    d.read("train_samples", c.data.train_samples);
    d.read("val_samples", c.data.val_samples);
    d.read("seed", c.data.seed);
    d.read("lexicon", c.data.lexicon_path);
    read_split(d.child("split"), c.data.split);
    d.finish();
  }
  read_train(root.child("train"), c.train);
  read_train(root.child("fixed_set"), c.fixed_set);
  {
    Section e = root.child("eval");
    e.read("iou_threshold", c.eval.iou_threshold);
    e.read("score_threshold", c.eval.score_threshold);
    e.read("use_prompt", c.eval.use_prompt);
    e.read("categories", c.eval.categories);
    e.read("relations", c.eval.relations);
    e.finish();
  }
  {
    Section i = root.child("infer");
    i.read("score_threshold", c.infer.score_threshold);
    i.read("use_prompt", c.infer.use_prompt);
    i.finish();
  }
  {
    Section g = root.child("grad_check");
    g.read("trials", c.grad_check.trials);
    g.read("op_tolerance", c.grad_check.op_tolerance);
    g.read("model_tolerance", c.grad_check.model_tolerance);
    g.read("ops", c.grad_check.ops);
    g.finish();
  }
  root.finish();
  c.validate();
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IOFailure("cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  json j;
  try {
    j = json::parse(ss.str());
  } catch (const json::parse_error& e) {
    throw ConfigInvalid("config is not valid JSON: " + std::string(e.what()));
  }
  return run_config_from_json(j);
}

ordered_json to_json(const ModelConfig& m) {
  ordered_json j;
  j["dim"] = m.decoder.dim;
  j["patch"] = m.encoder.patch;
  j["encoder_layers"] = m.encoder.layers;
  j["encoder_heads"] = m.encoder.heads;
  j["encoder_ffn"] = m.encoder.ffn_dim;
  j["num_queries"] = m.decoder.num_queries;
  j["decoder_blocks"] = m.decoder.blocks;
  j["decoder_heads"] = m.decoder.heads;
  j["decoder_ffn"] = m.decoder.ffn_dim;
  j["sgor_hidden"] = m.decoder.sgor_hidden;
  j["sgor_activation"] = m.decoder.sgor_activation == Activation::kRelu ? "relu" : "sigmoid";
  j["box_update"] = m.decoder.box_update == BoxUpdate::kLogit ? "logit" : "literal";
  j["use_ssga"] = m.decoder.use_ssga;
  j["box_conditioned_cross_attention"] = m.decoder.box_conditioned_cross_attention;
  j["text_dim"] = m.text.dim;
  j["text_seed"] = m.text.seed;
  j["text_compositional"] = m.text.compositional;
  j["text_label_weight"] = m.text.label_weight;
  return j;
}

ModelConfig model_config_from_json(const json& j) {
  ModelConfig m;
  read_model(Section(j, "model"), m);
  m.validate();
  return m;
}

ordered_json to_json(const TrainConfig& t) {
  ordered_json j;
  j["stage"] = to_string(t.stage);
  j["candidates"] = to_string(t.candidates);
  j["steps"] = t.steps;
  j["batch_size"] = t.batch_size;
  j["optimizer"] = to_string(t.optimizer);
  j["learning_rate"] = t.learning_rate;
  j["momentum"] = t.momentum;
  j["adam_beta2"] = t.adam_beta2;
  j["adam_eps"] = t.adam_eps;
  j["schedule"] = to_string(t.schedule);
  j["grad_clip"] = t.grad_clip;
  j["seed"] = t.seed;
  j["lambdas"] = {{"box", t.lambdas.box},
                  {"object", t.lambdas.object},
                  {"relation", t.lambdas.relation},
                  {"cross_modal", t.lambdas.cross_modal}};
  j["match"] = {{"box", t.match.box}, {"cls", t.match.cls}, {"iou", t.match.iou}, {"box_scale", t.match.box_scale}};
  j["per_block_matching"] = t.per_block_matching;
  j["use_prompt"] = t.use_prompt;
  return j;
}

TrainConfig train_config_from_json(const json& j, TrainConfig defaults) {
  read_train(Section(j, "train"), defaults);
  defaults.validate();
  return defaults;
}

ordered_json to_json(const SplitConfig& s) {
  ordered_json j;
  j["base_categories"] = s.base_categories;
  j["novel_categories"] = s.novel_categories;
  j["base_relations"] = s.base_relations;
  j["novel_relations"] = s.novel_relations;
  return j;
}

SplitConfig split_config_from_json(const json& j) {
  SplitConfig s;
  read_split(Section(j, "split"), s);
  s.validate();
  return s;
}

ordered_json to_json(const RunConfig& c) {
  ordered_json j;
  j["seed"] = c.seed;
  j["model"] = to_json(c.model);
  const SynthConfig& y = c.data.synth;
  ordered_json d;
  d["canvas"] = y.canvas;
  d["shapes"] = y.shapes;
  d["colors"] = y.colors;
  d["min_objects"] = y.min_objects;
  d["max_objects"] = y.max_objects;
  d["min_size"] = y.min_size;
  d["max_size"] = y.max_size;
  d["noise"] = y.noise;
  d["near_threshold"] = y.near_threshold;
  d["inside_probability"] = y.inside_probability;
  d["train_samples"] = c.data.train_samples;
  d["val_samples"] = c.data.val_samples;
  d["seed"] = c.data.seed;
  d["lexicon"] = c.data.lexicon_path;
  d["split"] = to_json(c.data.split);
  j["data"] = d;
  j["train"] = to_json(c.train);
  j["fixed_set"] = to_json(c.fixed_set);
  j["eval"] = {{"iou_threshold", c.eval.iou_threshold},
               {"score_threshold", c.eval.score_threshold},
               {"use_prompt", c.eval.use_prompt},
               {"categories", c.eval.categories},
               {"relations", c.eval.relations}};
  j["infer"] = {{"score_threshold", c.infer.score_threshold}, {"use_prompt", c.infer.use_prompt}};
  j["grad_check"] = {{"trials", c.grad_check.trials},
                     {"op_tolerance", c.grad_check.op_tolerance},
                     {"model_tolerance", c.grad_check.model_tolerance},
                     {"ops", c.grad_check.ops}};
  return j;
}

}  // namespace sgdn
