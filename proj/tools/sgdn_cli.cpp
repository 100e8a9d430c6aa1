// sgdn: generate data, train, evaluate, run inference and check gradients.
//
// Exit codes: 0 ok, 1 usage or invalid config, 2 check/eval failure
// (including divergence), 3 IO or schema errors.

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "sgdn/checkpoint.hpp"
#include "sgdn/config.hpp"
#include "sgdn/dataset_io.hpp"
#include "sgdn/errors.hpp"
#include "sgdn/grad_check.hpp"
#include "sgdn/metrics.hpp"
#include "sgdn/png_io.hpp"

namespace fs = std::filesystem;
using namespace sgdn;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitCheck = 2;
constexpr int kExitIo = 3;

struct Common {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out;
};

RunConfig load_config(const Common& c) {
  RunConfig cfg = c.config_path.empty() ? RunConfig{} : load_run_config(c.config_path);
  if (c.seed) {
    cfg.seed = *c.seed;
    cfg.train.seed = cfg.fixed_set.seed = *c.seed;
  }
  cfg.validate();
  return cfg;
}

fs::path data_root() {
  const char* env = std::getenv("SGDN_DATA_DIR");
  return env && *env ? fs::path(env) : fs::path("data");
}

// Positional dataset argument, else $SGDN_DATA_DIR/<part>, else data/<part>.
fs::path dataset_dir(const std::string& given, const char* part) {
  return given.empty() ? data_root() / part : fs::path(given);
}

RelationLexicon lexicon_for(const RunConfig& cfg) {
  return cfg.data.lexicon_path.empty() ? RelationLexicon::defaults() : RelationLexicon::from_file(cfg.data.lexicon_path);
}

int cmd_generate(const Common& common) {
  RunConfig cfg = load_config(common);
  if (common.seed) cfg.data.seed = *common.seed;
  const fs::path root = common.out.empty() ? data_root() : fs::path(common.out);
  const SplitConfig& split = cfg.data.split;

  Dataset train;
  train.part = "train";
  train.split = split;
  train.samples = generate_samples(static_cast<std::size_t>(cfg.data.train_samples), cfg.data.seed, cfg.data.synth,
                                   split.base_categories, split.base_relations);
  Dataset val;
  val.part = "val";
  val.split = split;
  val.samples = generate_samples(static_cast<std::size_t>(cfg.data.val_samples), cfg.data.seed + 1, cfg.data.synth,
                                 split.all_categories(), split.all_relations());
  save_dataset(train, root / "train");
  save_dataset(val, root / "val");
  std::printf("wrote %zu train and %zu val samples under %s\n", train.samples.size(), val.samples.size(),
              root.string().c_str());
  return 0;
}

int cmd_train(const Common& common, const std::string& dataset_arg, const std::string& stage_arg,
              const std::string& init_path, const std::string& log_arg) {
  const RunConfig cfg = load_config(common);
  const Dataset data = load_dataset(dataset_dir(dataset_arg, "train"));
  const fs::path out = common.out.empty() ? fs::path("model.ckpt.json") : fs::path(common.out);
  const fs::path log_path = log_arg.empty() ? fs::path(out.string() + ".log.jsonl") : fs::path(log_arg);

  SgdnModel model = init_path.empty() ? SgdnModel::create(cfg.model, cfg.seed)
                                      : model_from_checkpoint(load_checkpoint(init_path));
  std::vector<TrainConfig> stages;
  if (stage_arg == "grounding" || stage_arg == "both") {
    TrainConfig t = cfg.train;
    t.stage = Stage::kGrounding;
    stages.push_back(t);
  }
  if (stage_arg == "fixed_set" || stage_arg == "both") stages.push_back(cfg.fixed_set);

  std::ofstream log(log_path);
  if (!log) throw IOFailure("cannot write " + log_path.string());
  const RelationLexicon lexicon = lexicon_for(cfg);
  for (const TrainConfig& stage : stages) {
    Trainer trainer(model, stage, data.split, lexicon);
    try {
      trainer.run(data.samples, [&](const StepRecord& r) {
        log << "{\"stage\":\"" << to_string(stage.stage) << "\"," << to_json_line(r).substr(1) << "\n";
        if (r.step % 500 == 0 || r.step == stage.steps) {
          std::printf("[%s] step %d  loss %.5f (bb %.4f ocls %.4f pcls %.4f cml %.4f)\n", to_string(stage.stage).c_str(),
                      r.step, r.loss.total, r.loss.l_bb, r.loss.l_ocls, r.loss.l_pcls, r.loss.l_cml);
          std::fflush(stdout);
        }
      });
    } catch (const DivergenceDetected&) {
      save_checkpoint(make_checkpoint(model, &trainer), out);
      std::fprintf(stderr, "training diverged; last finite parameters saved to %s\n", out.string().c_str());
      throw;
    }
    save_checkpoint(make_checkpoint(model, &trainer), out);
  }
  std::printf("checkpoint: %s\nlog: %s\n", out.string().c_str(), log_path.string().c_str());
  return 0;
}

int cmd_eval(const Common& common, const std::string& ckpt_path, const std::string& dataset_arg,
             std::vector<std::string> categories, std::vector<std::string> relations) {
  const RunConfig cfg = load_config(common);
  const SgdnModel model = model_from_checkpoint(load_checkpoint(ckpt_path));
  const Dataset data = load_dataset(dataset_dir(dataset_arg, "val"));
  if (categories.empty()) categories = cfg.eval.categories;
  if (categories.empty()) categories = data.split.all_categories();
  if (relations.empty()) relations = cfg.eval.relations;
  if (relations.empty()) relations = data.split.all_relations();

  const InferenceOptions options{cfg.eval.use_prompt, cfg.eval.score_threshold};
  const auto predictions = predict_samples(model, data.samples, categories, relations, options);
  const MetricsReport report = evaluate(predictions, ground_truth_of(data.samples), data.split, cfg.eval.iou_threshold);

  const fs::path out = common.out.empty() ? fs::path("eval_out") : fs::path(common.out);
  fs::create_directories(out);
  write_text_file(out / "metrics.json", report.to_json());
  write_text_file(out / "metrics.txt", report.to_table());
  save_predictions(predictions, out / "predictions.json");
  std::printf("%s", report.to_table().c_str());
  return 0;
}

// Draws each predicted box as a 1-pixel outline on a 4x upscaled copy.
void write_overlay(const Image& image, const ImagePrediction& pred, const fs::path& path) {
  constexpr int kScale = 4;
  Image big(image.height * kScale, image.width * kScale);
  for (int y = 0; y < big.height; ++y) {
    for (int x = 0; x < big.width; ++x) {
      for (int c = 0; c < 3; ++c) big.at(y, x, c) = image.data[(static_cast<std::size_t>(y / kScale) * image.width + x / kScale) * 3 + c];
    }
  }
  static const Real palette[][3] = {{1, 1, 1}, {0, 0, 0}, {1, 0, 1}, {0, 1, 1}, {1, 0.5, 0}};
  for (std::size_t k = 0; k < pred.boxes.size(); ++k) {
    const BoundingBox& b = pred.boxes[k];
    const Real* col = palette[k % 5];
    const int x0 = std::clamp(static_cast<int>(b.x0() * big.width), 0, big.width - 1);
    const int x1 = std::clamp(static_cast<int>(b.x1() * big.width), 0, big.width - 1);
    const int y0 = std::clamp(static_cast<int>(b.y0() * big.height), 0, big.height - 1);
    const int y1 = std::clamp(static_cast<int>(b.y1() * big.height), 0, big.height - 1);
    for (int x = x0; x <= x1; ++x) {
      for (int c = 0; c < 3; ++c) big.at(y0, x, c) = big.at(y1, x, c) = col[c];
    }
    for (int y = y0; y <= y1; ++y) {
      for (int c = 0; c < 3; ++c) big.at(y, x0, c) = big.at(y, x1, c) = col[c];
    }
  }
  write_png(path, big);
}

int cmd_infer(const Common& common, const std::string& ckpt_path, const std::string& image_path,
              const std::vector<std::string>& categories, const std::vector<std::string>& relations,
              const std::string& overlay) {
  const RunConfig cfg = load_config(common);
  const SgdnModel model = model_from_checkpoint(load_checkpoint(ckpt_path));
  const Image image = read_png(image_path);
  if (categories.empty()) throw ConfigInvalid("infer needs at least one --categories entry");
  const InferenceOptions options{cfg.infer.use_prompt, cfg.infer.score_threshold};
  const ImagePrediction pred =
      predict(model, image, categories, relations, options, fs::path(image_path).stem().string());
  const std::string text = predictions_to_json({pred});
  if (common.out.empty()) {
    std::cout << text;
  } else {
    write_text_file(common.out, text);
  }
  if (!overlay.empty()) write_overlay(image, pred, overlay);
  return 0;
}

int cmd_grad_check(const Common& common) {
  const RunConfig cfg = load_config(common);
  const GradCheckConfig& g = cfg.grad_check;
  bool ok = true;
  std::ostringstream report;
  for (const auto& entry : grad_check_registry()) {
    if (!g.ops.empty() && std::find(g.ops.begin(), g.ops.end(), entry.id) == g.ops.end()) continue;
    const Real tol = entry.end_to_end ? g.model_tolerance : g.op_tolerance;
    char line[160];
    try {
      const GradCheckReport r = gradient_check(entry.id, g.trials, tol, cfg.seed + 7);
      std::snprintf(line, sizeof line, "PASS  %-24s max rel err %.3e  (tol %.0e)\n", entry.id.c_str(), r.max_rel_error, tol);
    } catch (const CheckFailed& e) {
      ok = false;
      std::snprintf(line, sizeof line, "FAIL  %-24s %s\n", entry.id.c_str(), e.what());
    }
    report << line;
  }
  std::cout << report.str();
  if (!common.out.empty()) write_text_file(common.out, report.str());
  return ok ? 0 : kExitCheck;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Scene-graph-based open-vocabulary detector on synthetic shapes"};
  app.require_subcommand(1);
  Common common;
  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", common.config_path, "JSON run configuration");
    cmd->add_option("--seed", common.seed, "Override the seed used by this command");
    cmd->add_option("--out", common.out, "Output path");
  };

  CLI::App* gen = app.add_subcommand("generate-data", "Render train (base split) and val (full) datasets");
  add_common(gen);

  std::string dataset, stage = "grounding", init, log_path;
  CLI::App* train = app.add_subcommand("train", "Train a model and write a checkpoint");
  add_common(train);
  train->add_option("dataset", dataset, "Dataset directory (default $SGDN_DATA_DIR/train)");
  train->add_option("--stage", stage, "grounding | fixed_set | both")
      ->check(CLI::IsMember({"grounding", "fixed_set", "both"}));
  train->add_option("--init", init, "Start from this checkpoint's parameters");
  train->add_option("--log", log_path, "Per-step JSONL loss log");

  std::string checkpoint;
  std::vector<std::string> categories, relations;
  CLI::App* eval = app.add_subcommand("eval", "Evaluate AP50 and SGDet recall on a dataset");
  add_common(eval);
  eval->add_option("checkpoint", checkpoint, "Checkpoint file")->required();
  eval->add_option("dataset", dataset, "Dataset directory (default $SGDN_DATA_DIR/val)");
  eval->add_option("--categories", categories, "Candidate categories (default: the split's full list)");
  eval->add_option("--relations", relations, "Candidate relations (default: the split's full list)");

  std::string image, overlay;
  CLI::App* infer = app.add_subcommand("infer", "Detect objects and relations in one PNG");
  add_common(infer);
  infer->add_option("checkpoint", checkpoint, "Checkpoint file")->required();
  infer->add_option("image", image, "PNG image")->required();
  infer->add_option("--categories", categories, "Candidate categories")->required();
  infer->add_option("--relations", relations, "Candidate relations");
  infer->add_option("--overlay", overlay, "Write a PNG with the detected boxes drawn");

  CLI::App* grad = app.add_subcommand("grad-check", "Finite-difference check of every registered op");
  add_common(grad);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (*gen) return cmd_generate(common);
    if (*train) return cmd_train(common, dataset, stage, init, log_path);
    if (*eval) return cmd_eval(common, checkpoint, dataset, categories, relations);
    if (*infer) return cmd_infer(common, checkpoint, image, categories, relations, overlay);
    if (*grad) return cmd_grad_check(common);
  } catch (const ConfigInvalid& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitUsage;
  } catch (const IOFailure& e) {
    std::fprintf(stderr, "io error: %s\n", e.what());
    return kExitIo;
  } catch (const SchemaViolation& e) {
    std::fprintf(stderr, "schema error: %s\n", e.what());
    return kExitIo;
  } catch (const std::filesystem::filesystem_error& e) {
    std::fprintf(stderr, "io error: %s\n", e.what());
    return kExitIo;
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitCheck;
  }
  return kExitUsage;
}
