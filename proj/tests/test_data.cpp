#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <map>

#include <json.hpp>

#include "sgdn/dataset_io.hpp"
#include "sgdn/errors.hpp"
#include "sgdn/png_io.hpp"
#include "sgdn/trainer.hpp"

using namespace sgdn;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

bool has(const std::vector<std::string>& v, const std::string& s) {
  return std::find(v.begin(), v.end(), s) != v.end();
}

}  // namespace

TEST_SUITE("data") {

TEST_CASE("fixed seed reproduces the sample") {
  const SplitConfig split = default_split();
  const GroundingSample a = generate_scene(42, SynthConfig{}, split.all_categories(), split.all_relations());
  const GroundingSample b = generate_scene(42, SynthConfig{}, split.all_categories(), split.all_relations());
  CHECK(a.image.data == b.image.data);
  CHECK(a.gt_boxes == b.gt_boxes);
  CHECK(a.gt_categories == b.gt_categories);
  CHECK(a.gt_triplets == b.gt_triplets);
  CHECK(a.expression == b.expression);
  const GroundingSample c = generate_scene(43, SynthConfig{}, split.all_categories(), split.all_relations());
  CHECK(c.image.data != a.image.data);
}

TEST_CASE("horizontal neighbours") {
  const auto rel = geometric_relations({0.2, 0.5, 0.1, 0.1}, {0.8, 0.5, 0.1, 0.1}, 0.25);
  CHECK(rel == std::vector<std::string>{"left of"});
  CHECK(geometric_relations({0.8, 0.5, 0.1, 0.1}, {0.2, 0.5, 0.1, 0.1}, 0.25) ==
        std::vector<std::string>{"right of"});
}

TEST_CASE("dominant axis, near and inside") {
  // Mostly vertical displacement, subject on top.
  CHECK(has(geometric_relations({0.45, 0.2, 0.1, 0.1}, {0.5, 0.7, 0.1, 0.1}, 0.25), "above"));
  CHECK(has(geometric_relations({0.5, 0.7, 0.1, 0.1}, {0.45, 0.2, 0.1, 0.1}, 0.25), "below"));
  CHECK(has(geometric_relations({0.5, 0.5, 0.1, 0.1}, {0.6, 0.55, 0.1, 0.1}, 0.25), "near"));
  CHECK_FALSE(has(geometric_relations({0.1, 0.5, 0.1, 0.1}, {0.6, 0.55, 0.1, 0.1}, 0.25), "near"));
  CHECK(has(geometric_relations({0.5, 0.52, 0.1, 0.1}, {0.5, 0.5, 0.4, 0.4}, 0.25), "inside"));
  CHECK_FALSE(has(geometric_relations({0.5, 0.5, 0.4, 0.4}, {0.5, 0.52, 0.1, 0.1}, 0.25), "inside"));
}

TEST_CASE("spatial labels are antisymmetric") {
  Rng rng(5);
  std::uniform_real_distribution<Real> u(0.05, 0.95);
  const std::map<std::string, std::string> inverse = {
      {"left of", "right of"}, {"right of", "left of"}, {"above", "below"}, {"below", "above"}, {"near", "near"}};
  for (int t = 0; t < 500; ++t) {
    const BoundingBox a{u(rng), u(rng), 0.1, 0.1}, b{u(rng), u(rng), 0.1, 0.1};
    if (a.cx == b.cx && a.cy == b.cy) continue;
    const auto ab = geometric_relations(a, b, 0.25);
    const auto ba = geometric_relations(b, a, 0.25);
    for (const auto& r : ab) {
      if (r == "inside") continue;
      CHECK(has(ba, inverse.at(r)));
    }
  }
}

TEST_CASE("generated samples are well formed") {
  const SplitConfig split = default_split();
  const SynthConfig cfg;
  const auto samples = generate_samples(200, 9, cfg, split.all_categories(), split.all_relations());
  for (const auto& s : samples) {
    CHECK(s.image.height == cfg.canvas);
    CHECK(s.gt_boxes.size() == s.gt_categories.size());
    CHECK(s.gt_boxes.size() >= static_cast<std::size_t>(cfg.min_objects));
    CHECK(s.gt_boxes.size() <= static_cast<std::size_t>(cfg.max_objects));
    for (const auto& b : s.gt_boxes) CHECK(b.valid());
    for (Real v : s.image.data) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
    for (const auto& t : s.gt_triplets) {
      CHECK(has(geometric_relations(s.gt_boxes[t.subject], s.gt_boxes[t.object], cfg.near_threshold), t.predicate));
    }
    const ParsedExpression p = parse_expression(s.expression);
    CHECK(p.nouns == s.gt_categories);
    CHECK(p.triplets == s.gt_triplets);
  }
}

TEST_CASE("base-only generation never uses novel labels") {
  const SplitConfig split = default_split();
  const auto samples = generate_samples(300, 10, SynthConfig{}, split.base_categories, split.base_relations);
  CHECK(split_violations(samples, split) == 0);
  const auto mixed = generate_samples(300, 10, SynthConfig{}, split.all_categories(), split.all_relations());
  CHECK(split_violations(mixed, split) > 0);
}

TEST_CASE("default split") {
  const SplitConfig split = default_split();
  CHECK(split.base_categories.size() == 8);
  CHECK(split.novel_categories.size() == 4);
  CHECK(split.base_relations.size() == 5);
  CHECK(split.novel_relations.size() == 1);
  CHECK_NOTHROW(split.validate());
  SplitConfig bad = split;
  bad.novel_categories.push_back(bad.base_categories.front());
  CHECK_THROWS_AS(bad.validate(), ConfigInvalid);
}

TEST_CASE("invalid generator config") {
  SynthConfig cfg;
  cfg.min_objects = 3;
  cfg.max_objects = 2;
  CHECK_THROWS_AS(generate_scene(1, cfg, {"red circle"}, {"near"}), ConfigInvalid);
  cfg = SynthConfig{};
  cfg.colors = {"mauve"};
  CHECK_THROWS_AS(cfg.validate(), ConfigInvalid);
  CHECK_THROWS_AS(generate_scene(1, SynthConfig{}, {}, {"near"}), ConfigInvalid);
}

TEST_CASE("dataset round trip") {
  TempDir dir("sgdn_data_roundtrip");
  const SplitConfig split = default_split();
  Dataset ds;
  ds.part = "val";
  ds.split = split;
  ds.samples = generate_samples(6, 4, SynthConfig{}, split.all_categories(), split.all_relations());
  save_dataset(ds, dir.path);
  CHECK(fs::exists(dir.path / "manifest.json"));
  const Dataset back = load_dataset(dir.path);
  CHECK(back.part == "val");
  CHECK(back.split == split);
  REQUIRE(back.samples.size() == ds.samples.size());
  for (std::size_t i = 0; i < ds.samples.size(); ++i) {
    const auto& a = ds.samples[i];
    const auto& b = back.samples[i];
    CHECK(a.gt_categories == b.gt_categories);
    CHECK(a.gt_triplets == b.gt_triplets);
    CHECK(a.expression == b.expression);
    REQUIRE(a.gt_boxes.size() == b.gt_boxes.size());
    for (std::size_t k = 0; k < a.gt_boxes.size(); ++k) CHECK(a.gt_boxes[k] == b.gt_boxes[k]);
    REQUIRE(a.image.data.size() == b.image.data.size());
    Real worst = 0.0;
    for (std::size_t k = 0; k < a.image.data.size(); ++k) worst = std::max(worst, std::abs(a.image.data[k] - b.image.data[k]));
    CHECK(worst <= 0.5 / 255.0 + 1e-12);
  }
}

TEST_CASE("empty dataset") {
  TempDir dir("sgdn_data_empty");
  Dataset ds;
  ds.split = default_split();
  save_dataset(ds, dir.path);
  const Dataset back = load_dataset(dir.path);
  CHECK(back.samples.empty());
}

TEST_CASE("damaged files") {
  TempDir dir("sgdn_data_damaged");
  const SplitConfig split = default_split();
  Dataset ds;
  ds.split = split;
  ds.samples = generate_samples(2, 4, SynthConfig{}, split.all_categories(), split.all_relations());
  save_dataset(ds, dir.path);
  const std::string manifest = read_text_file(dir.path / "manifest.json");

  SUBCASE("truncated manifest") {
    write_text_file(dir.path / "manifest.json", manifest.substr(0, manifest.size() / 2));
    CHECK_THROWS_AS(load_dataset(dir.path), SchemaViolation);
  }
  SUBCASE("truncated image") {
    const fs::path img = dir.path / "images" / (Dataset::image_id(1) + ".png");
    const auto size = fs::file_size(img);
    fs::resize_file(img, size / 2);
    CHECK_THROWS_AS(load_dataset(dir.path), SchemaViolation);
  }
  SUBCASE("missing field") {
    auto j = nlohmann::json::parse(manifest);
    j["samples"][0].erase("categories");
    write_text_file(dir.path / "manifest.json", j.dump());
    CHECK_THROWS_AS(load_dataset(dir.path), SchemaViolation);
  }
  SUBCASE("bad triplet index") {
    auto j = nlohmann::json::parse(manifest);
    j["samples"][0]["triplets"] = nlohmann::json::array({nlohmann::json::array({0, "near", 9})});
    write_text_file(dir.path / "manifest.json", j.dump());
    CHECK_THROWS_AS(load_dataset(dir.path), SchemaViolation);
  }
  SUBCASE("missing directory") {
    CHECK_THROWS_AS(load_dataset(dir.path / "nope"), IOFailure);
  }
}

TEST_CASE("png round trip") {
  TempDir dir("sgdn_png");
  Image img(5, 7);
  for (std::size_t i = 0; i < img.data.size(); ++i) img.data[i] = static_cast<Real>(i % 256) / 255.0;
  write_png(dir.path / "a.png", img);
  const Image back = read_png(dir.path / "a.png");
  CHECK(back.height == 5);
  CHECK(back.width == 7);
  for (std::size_t i = 0; i < img.data.size(); ++i) CHECK(std::abs(back.data[i] - img.data[i]) < 1e-12);
}

TEST_CASE("predictions round trip") {
  std::vector<ImagePrediction> p(2);
  p[0].image_id = "000000";
  p[0].boxes = {{0.5, 0.5, 0.2, 0.2}, {0.1, 0.2, 0.05, 0.1}};
  p[0].categories = {"red circle", "blue square"};
  p[0].scores = {0.9, 0.25};
  p[0].triplets = {{0, "left of", 1, 0.125}};
  p[1].image_id = "000001";
  const auto back = predictions_from_json(predictions_to_json(p));
  CHECK(back == p);
  CHECK_THROWS_AS(predictions_from_json("{\"not\": \"a list\"}"), SchemaViolation);
}

}  // TEST_SUITE
