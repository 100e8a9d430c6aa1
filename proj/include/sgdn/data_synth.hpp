#pragma once

// Synthetic grounding scenes: flat colored shapes on a noisy background,
// geometric relations between them, and one template expression per scene
// that names every object.

#include <cstdint>
#include <string>
#include <vector>

#include "sgdn/boxes.hpp"
#include "sgdn/expr_parser.hpp"
#include "sgdn/image.hpp"

namespace sgdn {

struct GroundingSample {
  Image image;
  std::vector<BoundingBox> gt_boxes;
  std::vector<std::string> gt_categories;
  std::vector<Triplet> gt_triplets;
  std::string expression;
};

struct SplitConfig {
  std::vector<std::string> base_categories;
  std::vector<std::string> novel_categories;
  std::vector<std::string> base_relations;
  std::vector<std::string> novel_relations;

  std::vector<std::string> all_categories() const;
  std::vector<std::string> all_relations() const;
  bool is_novel_category(const std::string& c) const;
  // Throws ConfigInvalid when base and novel overlap.
  void validate() const;

  bool operator==(const SplitConfig&) const = default;
};

struct SynthConfig {
  int canvas = 64;
  std::vector<std::string> shapes = {"circle", "square", "triangle"};
  std::vector<std::string> colors = {"red", "green", "blue", "yellow"};
  int min_objects = 2;
  int max_objects = 5;
  Real min_size = 0.18;
  Real max_size = 0.32;
  Real noise = 0.05;
  Real near_threshold = 0.25;
  Real inside_probability = 0.1;

  // Throws ConfigInvalid.
  void validate() const;
  std::vector<std::string> categories() const;
};

// 3 shapes x 4 colors with one category per shape-color diagonal held out so
// every word still occurs in training; "inside" is the held-out relation.
SplitConfig default_split();

// Every relation that holds for (subject, object): exactly one of above /
// below / left of / right of by the dominant axis of the center
// displacement, plus "near" and "inside" when they apply.
std::vector<std::string> geometric_relations(const BoundingBox& subject, const BoundingBox& object,
                                             Real near_threshold);

// Objects draw from `categories`, expression relations from `relations`.
GroundingSample generate_scene(std::uint64_t seed, const SynthConfig& config,
                               const std::vector<std::string>& categories,
                               const std::vector<std::string>& relations);

std::vector<GroundingSample> generate_samples(std::size_t count, std::uint64_t seed, const SynthConfig& config,
                                              const std::vector<std::string>& categories,
                                              const std::vector<std::string>& relations);

}  // namespace sgdn
