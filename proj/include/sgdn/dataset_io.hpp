#pragma once

// On-disk formats.
//
// Dataset: a directory holding manifest.json and images/NNNNNN.png.
//   {"version": 1, "part": "train", "split": {...},
//    "samples": [{"image_id": "000000", "image": "images/000000.png",
//                 "boxes": [[cx, cy, w, h], ...], "categories": [...],
//                 "triplets": [[subj, "predicate", obj], ...],
//                 "expression": "..."}]}
//
// Predictions: JSON list, one record per image:
//   {"image_id", "boxes": [[cx,cy,w,h]...], "category": [...], "score": [...],
//    "triplets": [{"subj", "predicate", "obj", "score"}]}

#include <filesystem>
#include <string>
#include <vector>

#include "sgdn/data_synth.hpp"

namespace sgdn {

inline constexpr int kDatasetVersion = 1;

struct Dataset {
  std::string part = "train";
  SplitConfig split;
  std::vector<GroundingSample> samples;

  static std::string image_id(std::size_t index);
};

// Throws IOFailure.
void save_dataset(const Dataset& dataset, const std::filesystem::path& dir);
// Throws IOFailure or SchemaViolation.
Dataset load_dataset(const std::filesystem::path& dir);

struct PredictedTriplet {
  int subject = 0;
  std::string predicate;
  int object = 0;
  Real score = 0.0;

  bool operator==(const PredictedTriplet&) const = default;
};

struct ImagePrediction {
  std::string image_id;
  std::vector<BoundingBox> boxes;
  std::vector<std::string> categories;
  std::vector<Real> scores;
  std::vector<PredictedTriplet> triplets;

  bool operator==(const ImagePrediction&) const = default;
};

std::string predictions_to_json(const std::vector<ImagePrediction>& predictions);
std::vector<ImagePrediction> predictions_from_json(const std::string& text);
void save_predictions(const std::vector<ImagePrediction>& predictions, const std::filesystem::path& path);
std::vector<ImagePrediction> load_predictions(const std::filesystem::path& path);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace sgdn
