#include "sgdn/dataset_io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "sgdn/errors.hpp"
#include "sgdn/png_io.hpp"

namespace sgdn {
namespace {

using nlohmann::json;

json split_to_json(const SplitConfig& s) {
  return {{"base_categories", s.base_categories},
          {"novel_categories", s.novel_categories},
          {"base_relations", s.base_relations},
          {"novel_relations", s.novel_relations}};
}

template <typename T>
T require(const json& j, const char* key) {
  if (!j.is_object() || !j.contains(key)) throw SchemaViolation(std::string("missing field \"") + key + "\"");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw SchemaViolation(std::string("bad field \"") + key + "\": " + e.what());
  }
}

SplitConfig split_from_json(const json& j) {
  SplitConfig s;
  s.base_categories = require<std::vector<std::string>>(j, "base_categories");
  s.novel_categories = require<std::vector<std::string>>(j, "novel_categories");
  s.base_relations = require<std::vector<std::string>>(j, "base_relations");
  s.novel_relations = require<std::vector<std::string>>(j, "novel_relations");
  return s;
}

json box_to_json(const BoundingBox& b) { return json::array({b.cx, b.cy, b.w, b.h}); }

BoundingBox box_from_json(const json& j) {
  if (!j.is_array() || j.size() != 4) throw SchemaViolation("box must be [cx, cy, w, h]");
  try {
    return {j[0].get<Real>(), j[1].get<Real>(), j[2].get<Real>(), j[3].get<Real>()};
  } catch (const json::exception& e) {
    throw SchemaViolation(std::string("box values must be numbers: ") + e.what());
  }
}

json parse_json(const std::string& text, const std::string& what) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw SchemaViolation(what + ": " + e.what());
  }
}

}  // namespace

std::string Dataset::image_id(std::size_t index) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%06zu", index);
  return buf;
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IOFailure("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IOFailure("cannot write " + path.string());
  out << text;
  if (!out) throw IOFailure("write failed: " + path.string());
}

void save_dataset(const Dataset& dataset, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir / "images", ec);
  if (ec) throw IOFailure("cannot create " + (dir / "images").string() + ": " + ec.message());
  json samples = json::array();
  for (std::size_t i = 0; i < dataset.samples.size(); ++i) {
    const GroundingSample& s = dataset.samples[i];
    const std::string id = Dataset::image_id(i);
    const std::string rel = "images/" + id + ".png";
    write_png(dir / rel, s.image);
    json boxes = json::array();
    for (const auto& b : s.gt_boxes) boxes.push_back(box_to_json(b));
    json triplets = json::array();
    for (const auto& t : s.gt_triplets) triplets.push_back(json::array({t.subject, t.predicate, t.object}));
    samples.push_back({{"image_id", id},
                       {"image", rel},
                       {"boxes", boxes},
                       {"categories", s.gt_categories},
                       {"triplets", triplets},
                       {"expression", s.expression}});
  }
  const json manifest = {{"version", kDatasetVersion},
                         {"part", dataset.part},
                         {"split", split_to_json(dataset.split)},
                         {"samples", samples}};
  write_text_file(dir / "manifest.json", manifest.dump(1));
}

Dataset load_dataset(const std::filesystem::path& dir) {
  const json manifest = parse_json(read_text_file(dir / "manifest.json"), "manifest.json");
  if (require<int>(manifest, "version") != kDatasetVersion) throw SchemaViolation("unsupported dataset version");
  Dataset ds;
  ds.part = require<std::string>(manifest, "part");
  ds.split = split_from_json(manifest.contains("split") ? manifest["split"] : json());
  const json& samples = manifest.contains("samples") ? manifest["samples"] : throw SchemaViolation("missing field \"samples\"");
  if (!samples.is_array()) throw SchemaViolation("\"samples\" must be a list");
  for (const json& js : samples) {
    GroundingSample s;
    const auto image_rel = require<std::string>(js, "image");
    s.expression = require<std::string>(js, "expression");
    s.gt_categories = require<std::vector<std::string>>(js, "categories");
    if (!js.contains("boxes") || !js["boxes"].is_array()) throw SchemaViolation("missing field \"boxes\"");
    for (const json& b : js["boxes"]) s.gt_boxes.push_back(box_from_json(b));
    if (s.gt_boxes.size() != s.gt_categories.size()) throw SchemaViolation("boxes and categories differ in length");
    if (!js.contains("triplets") || !js["triplets"].is_array()) throw SchemaViolation("missing field \"triplets\"");
    for (const json& t : js["triplets"]) {
      if (!t.is_array() || t.size() != 3 || !t[0].is_number_integer() || !t[1].is_string() ||
          !t[2].is_number_integer()) {
        throw SchemaViolation("triplet must be [subj, \"predicate\", obj]");
      }
      Triplet tr{t[0].get<int>(), t[1].get<std::string>(), t[2].get<int>()};
      const int n = static_cast<int>(s.gt_categories.size());
      if (tr.subject < 0 || tr.subject >= n || tr.object < 0 || tr.object >= n || tr.subject == tr.object) {
        throw SchemaViolation("triplet index out of range");
      }
      s.gt_triplets.push_back(std::move(tr));
    }
    s.image = read_png(dir / image_rel);
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

std::string predictions_to_json(const std::vector<ImagePrediction>& predictions) {
  json out = json::array();
  for (const auto& p : predictions) {
    json boxes = json::array();
    for (const auto& b : p.boxes) boxes.push_back(box_to_json(b));
    json triplets = json::array();
    for (const auto& t : p.triplets) {
      triplets.push_back({{"subj", t.subject}, {"predicate", t.predicate}, {"obj", t.object}, {"score", t.score}});
    }
    out.push_back({{"image_id", p.image_id},
                   {"boxes", boxes},
                   {"category", p.categories},
                   {"score", p.scores},
                   {"triplets", triplets}});
  }
  return out.dump(1);
}

std::vector<ImagePrediction> predictions_from_json(const std::string& text) {
  const json j = parse_json(text, "predictions");
  if (!j.is_array()) throw SchemaViolation("predictions must be a list");
  std::vector<ImagePrediction> out;
  for (const json& jp : j) {
    ImagePrediction p;
    p.image_id = require<std::string>(jp, "image_id");
    if (!jp.contains("boxes") || !jp["boxes"].is_array()) throw SchemaViolation("missing field \"boxes\"");
    for (const json& b : jp["boxes"]) p.boxes.push_back(box_from_json(b));
    p.categories = require<std::vector<std::string>>(jp, "category");
    p.scores = require<std::vector<Real>>(jp, "score");
    if (p.categories.size() != p.boxes.size() || p.scores.size() != p.boxes.size()) {
      throw SchemaViolation("boxes, category and score must have equal length");
    }
    if (jp.contains("triplets")) {
      for (const json& jt : jp["triplets"]) {
        PredictedTriplet t{require<int>(jt, "subj"), require<std::string>(jt, "predicate"), require<int>(jt, "obj"),
                           require<Real>(jt, "score")};
        const int n = static_cast<int>(p.boxes.size());
        if (t.subject < 0 || t.subject >= n || t.object < 0 || t.object >= n) {
          throw SchemaViolation("predicted triplet index out of range");
        }
        p.triplets.push_back(std::move(t));
      }
    }
    out.push_back(std::move(p));
  }
  return out;
}

void save_predictions(const std::vector<ImagePrediction>& predictions, const std::filesystem::path& path) {
  write_text_file(path, predictions_to_json(predictions));
}

std::vector<ImagePrediction> load_predictions(const std::filesystem::path& path) {
  return predictions_from_json(read_text_file(path));
}

}  // namespace sgdn
