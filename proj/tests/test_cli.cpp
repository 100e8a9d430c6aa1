#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include <json.hpp>

#include "sgdn/dataset_io.hpp"
#include "sgdn/png_io.hpp"

using namespace sgdn;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Workdir {
  fs::path path;
  explicit Workdir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~Workdir() { fs::remove_all(path); }
  std::string operator/(const std::string& rel) const { return (path / rel).string(); }
};

int run(const std::string& args) {
  const std::string cmd = std::string(SGDN_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

json small_config() {
  return json::parse(R"({
    "seed": 3,
    "model": {"dim": 16, "encoder_heads": 2, "decoder_heads": 2, "encoder_layers": 1,
              "encoder_ffn": 24, "decoder_ffn": 24, "num_queries": 5, "sgor_hidden": 16, "text_dim": 16},
    "data": {"train_samples": 6, "val_samples": 4, "canvas": 32},
    "train": {"steps": 4, "batch_size": 2},
    "fixed_set": {"steps": 2, "batch_size": 2},
    "grad_check": {"trials": 1}
  })");
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("usage errors exit with 1") {
  CHECK(run("") == 1);
  CHECK(run("frobnicate") == 1);
  CHECK(run("infer") == 1);
  Workdir w("sgdn_cli_usage");
  write_text_file(w / "bad.json", R"({"train": {"stepz": 1}})");
  CHECK(run("generate-data --config " + (w / "bad.json") + " --out " + (w / "data")) == 1);
}

TEST_CASE("missing files exit with 3") {
  Workdir w("sgdn_cli_io");
  CHECK(run("eval " + (w / "missing.json") + " " + (w / "nodata")) == 3);
  CHECK(run("train " + (w / "nodata") + " --out " + (w / "m.json")) == 3);
}

TEST_CASE("generate, train, evaluate and infer") {
  Workdir w("sgdn_cli_pipeline");
  write_text_file(w / "config.json", small_config().dump());
  const std::string cfg = " --config " + (w / "config.json");
  REQUIRE(run("generate-data" + cfg + " --out " + (w / "data")) == 0);
  const Dataset train = load_dataset(w / "data/train");
  CHECK(train.samples.size() == 6);
  CHECK(load_dataset(w / "data/val").samples.size() == 4);

  REQUIRE(run("train " + (w / "data/train") + cfg + " --stage both --out " + (w / "model.json") + " --log " +
              (w / "log.jsonl")) == 0);
  CHECK(fs::exists(w / "model.json"));
  {
    std::ifstream log(w / "log.jsonl");
    std::string line;
    int lines = 0;
    while (std::getline(log, line)) {
      const json j = json::parse(line);
      for (const char* key : {"stage", "step", "l_bb", "l_ocls", "l_pcls", "l_cml", "total"}) CHECK(j.contains(key));
      if (j["stage"] == "fixed_set") {
        CHECK(j["l_pcls"].get<double>() >= 0.0);
      }
      ++lines;
    }
    CHECK(lines == 6);
  }

  SUBCASE("label order does not change the metrics") {
    const SplitConfig split = train.split;
    std::string forward, backward;
    const auto cats = split.all_categories();
    for (const auto& c : cats) forward += " \"" + c + "\"";
    for (auto it = cats.rbegin(); it != cats.rend(); ++it) backward += " \"" + *it + "\"";
    REQUIRE(run("eval " + (w / "model.json") + " " + (w / "data/val") + cfg + " --out " + (w / "e1") +
                " --categories" + forward) == 0);
    REQUIRE(run("eval " + (w / "model.json") + " " + (w / "data/val") + cfg + " --out " + (w / "e2") +
                " --categories" + backward) == 0);
    const json a = json::parse(read_text_file(w / "e1/metrics.json"));
    const json b = json::parse(read_text_file(w / "e2/metrics.json"));
    for (const char* key : {"ap50_novel", "ap50_base", "ap50_all", "recall_at_50", "recall_at_100"}) {
      CHECK(a[key].get<double>() == doctest::Approx(b[key].get<double>()).epsilon(1e-12));
    }
    CHECK(fs::exists(w / "e1/metrics.txt"));
    CHECK(load_predictions(w / "e1/predictions.json").size() == 4);
  }

  SUBCASE("evaluation is reproducible") {
    REQUIRE(run("eval " + (w / "model.json") + " " + (w / "data/val") + cfg + " --out " + (w / "r1")) == 0);
    REQUIRE(run("eval " + (w / "model.json") + " " + (w / "data/val") + cfg + " --out " + (w / "r2")) == 0);
    CHECK(read_text_file(w / "r1/metrics.json") == read_text_file(w / "r2/metrics.json"));
    CHECK(read_text_file(w / "r1/predictions.json") == read_text_file(w / "r2/predictions.json"));
  }

  SUBCASE("inference writes predictions and an overlay") {
    REQUIRE(run("infer " + (w / "model.json") + " " + (w / "data/val/images/000000.png") + cfg +
                " --categories \"red circle\" \"blue square\" --out " + (w / "pred.json") + " --overlay " +
                (w / "overlay.png")) == 0);
    const auto preds = load_predictions(w / "pred.json");
    REQUIRE(preds.size() == 1);
    CHECK(preds[0].image_id == "000000");
    const Image overlay = read_png(w / "overlay.png");
    CHECK(overlay.height == 128);
  }
}

TEST_CASE("grad-check on a fresh configuration passes") {
  Workdir w("sgdn_cli_grad");
  write_text_file(w / "config.json", small_config().dump());
  CHECK(run("grad-check --config " + (w / "config.json") + " --out " + (w / "report.txt")) == 0);
  const std::string report = read_text_file(w / "report.txt");
  CHECK(report.find("FAIL") == std::string::npos);
  CHECK(report.find("full_model") != std::string::npos);
}

}  // TEST_SUITE
