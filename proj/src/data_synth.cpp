#include "sgdn/data_synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <random>

#include "sgdn/errors.hpp"

namespace sgdn {
namespace {

using Rgb = std::array<Real, 3>;

Rgb color_value(const std::string& name) {
  static const std::map<std::string, Rgb> table = {
      {"red", {0.90, 0.12, 0.10}},    {"green", {0.10, 0.75, 0.15}},   {"blue", {0.12, 0.25, 0.90}},
      {"yellow", {0.92, 0.88, 0.10}}, {"purple", {0.60, 0.15, 0.75}}, {"white", {0.97, 0.97, 0.97}},
      {"black", {0.05, 0.05, 0.05}},  {"orange", {0.95, 0.55, 0.10}}, {"cyan", {0.10, 0.85, 0.85}},
  };
  auto it = table.find(name);
  if (it == table.end()) throw ConfigInvalid("no palette entry for color \"" + name + "\"");
  return it->second;
}

bool covers(const std::string& shape, const BoundingBox& b, Real x, Real y) {
  if (x < b.x0() || x > b.x1() || y < b.y0() || y > b.y1()) return false;
  if (shape == "square") return true;
  if (shape == "circle") {
    const Real dx = (x - b.cx) / (b.w / 2), dy = (y - b.cy) / (b.h / 2);
    return dx * dx + dy * dy <= 1.0;
  }
  if (shape == "triangle") {
    // Apex at top center, base along the bottom edge.
    const Real t = (y - b.y0()) / b.h;
    return std::abs(x - b.cx) <= t * b.w / 2;
  }
  throw ConfigInvalid("unknown shape \"" + shape + "\"");
}

bool overlaps(const BoundingBox& a, const BoundingBox& b, Real margin) {
  return a.x0() < b.x1() + margin && b.x0() < a.x1() + margin && a.y0() < b.y1() + margin &&
         b.y0() < a.y1() + margin;
}

bool contained(const BoundingBox& inner, const BoundingBox& outer) {
  return inner.x0() >= outer.x0() && inner.x1() <= outer.x1() && inner.y0() >= outer.y0() &&
         inner.y1() <= outer.y1();
}

std::pair<std::string, std::string> split_category(const std::string& category) {
  const auto space = category.rfind(' ');
  if (space == std::string::npos) throw ConfigInvalid("category must be \"<color> <shape>\": " + category);
  return {category.substr(0, space), category.substr(space + 1)};
}

}  // namespace

std::vector<std::string> SplitConfig::all_categories() const {
  std::vector<std::string> out = base_categories;
  out.insert(out.end(), novel_categories.begin(), novel_categories.end());
  return out;
}

std::vector<std::string> SplitConfig::all_relations() const {
  std::vector<std::string> out = base_relations;
  out.insert(out.end(), novel_relations.begin(), novel_relations.end());
  return out;
}

bool SplitConfig::is_novel_category(const std::string& c) const {
  return std::find(novel_categories.begin(), novel_categories.end(), c) != novel_categories.end();
}

void SplitConfig::validate() const {
  for (const auto& c : novel_categories) {
    if (std::find(base_categories.begin(), base_categories.end(), c) != base_categories.end()) {
      throw ConfigInvalid("category is both base and novel: " + c);
    }
  }
  for (const auto& r : novel_relations) {
    if (std::find(base_relations.begin(), base_relations.end(), r) != base_relations.end()) {
      throw ConfigInvalid("relation is both base and novel: " + r);
    }
  }
}

void SynthConfig::validate() const {
  if (canvas <= 0) throw ConfigInvalid("canvas must be positive");
  if (min_objects < 1 || max_objects < min_objects) throw ConfigInvalid("bad object count range");
  if (!(min_size > 0 && max_size >= min_size && max_size < 0.5)) throw ConfigInvalid("bad object size range");
  if (shapes.empty() || colors.empty()) throw ConfigInvalid("need at least one shape and one color");
  for (const auto& c : colors) color_value(c);
  for (const auto& s : shapes) covers(s, {0.5, 0.5, 0.5, 0.5}, 0.5, 0.5);
}

std::vector<std::string> SynthConfig::categories() const {
  std::vector<std::string> out;
  for (const auto& s : shapes) {
    for (const auto& c : colors) out.push_back(c + " " + s);
  }
  return out;
}

SplitConfig default_split() {
  SplitConfig split;
  split.novel_categories = {"blue circle", "green square", "red triangle", "yellow triangle"};
  for (const auto& c : SynthConfig{}.categories()) {
    if (!split.is_novel_category(c)) split.base_categories.push_back(c);
  }
  split.base_relations = {"above", "below", "left of", "right of", "near"};
  split.novel_relations = {"inside"};
  return split;
}

std::vector<std::string> geometric_relations(const BoundingBox& subject, const BoundingBox& object,
                                             Real near_threshold) {
  std::vector<std::string> out;
  const Real dx = object.cx - subject.cx;
  const Real dy = object.cy - subject.cy;
  // Image y grows downwards: the subject is above when the object is lower.
  if (std::abs(dx) >= std::abs(dy)) {
    out.emplace_back(dx > 0 ? "left of" : "right of");
  } else {
    out.emplace_back(dy > 0 ? "above" : "below");
  }
  if (std::hypot(dx, dy) < near_threshold) out.emplace_back("near");
  if (contained(subject, object)) out.emplace_back("inside");
  return out;
}

GroundingSample generate_scene(std::uint64_t seed, const SynthConfig& config,
                               const std::vector<std::string>& categories,
                               const std::vector<std::string>& relations) {
  config.validate();
  if (categories.empty()) throw ConfigInvalid("no categories to draw from");
  Rng rng(seed);
  std::uniform_real_distribution<Real> unit(0.0, 1.0);
  std::uniform_int_distribution<int> count_dist(config.min_objects, config.max_objects);
  const int count = std::min<int>(count_dist(rng), static_cast<int>(categories.size()));

  // Distinct categories per scene.
  std::vector<std::string> pool = categories;
  std::shuffle(pool.begin(), pool.end(), rng);
  pool.resize(count);

  std::vector<BoundingBox> boxes;
  const bool nest = count >= 2 && unit(rng) < config.inside_probability;
  for (int k = 0; k < count; ++k) {
    BoundingBox b;
    if (nest && k == 0) {
      const Real s = 0.42;
      b = {s / 2 + unit(rng) * (1 - s), s / 2 + unit(rng) * (1 - s), s, s};
    } else if (nest && k == 1) {
      const BoundingBox& outer = boxes[0];
      const Real s = outer.w * 0.4;
      const Real slack = (outer.w - s) / 2 * 0.8;
      b = {outer.cx + (2 * unit(rng) - 1) * slack, outer.cy + (2 * unit(rng) - 1) * slack, s, s};
    } else {
      bool placed = false;
      for (int attempt = 0; attempt < 400 && !placed; ++attempt) {
        const Real shrink = attempt < 200 ? 1.0 : 0.7;
        const Real s = shrink * (config.min_size + unit(rng) * (config.max_size - config.min_size));
        b = {s / 2 + unit(rng) * (1 - s), s / 2 + unit(rng) * (1 - s), s, s};
        placed = std::none_of(boxes.begin(), boxes.end(),
                              [&](const BoundingBox& o) { return overlaps(b, o, 0.02); });
      }
      if (!placed) {
        pool.resize(boxes.size());
        break;
      }
    }
    boxes.push_back(b);
  }
  const int n = static_cast<int>(boxes.size());

  Image image(config.canvas, config.canvas);
  std::normal_distribution<Real> noise(0.0, config.noise);
  for (int y = 0; y < config.canvas; ++y) {
    for (int x = 0; x < config.canvas; ++x) {
      const Real px = (x + 0.5) / config.canvas, py = (y + 0.5) / config.canvas;
      Rgb rgb = {0.5, 0.5, 0.5};
      for (int k = 0; k < n; ++k) {
        const auto [color, shape] = split_category(pool[k]);
        if (covers(shape, boxes[k], px, py)) rgb = color_value(color);
      }
      for (int c = 0; c < 3; ++c) image.at(y, x, c) = std::clamp(rgb[c] + noise(rng), 0.0, 1.0);
    }
  }

  // Mention order is a random permutation; each adjacent pair gets one
  // relation that actually holds between them.
  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;
  std::shuffle(order.begin(), order.end(), rng);

  GroundingSample sample;
  sample.image = std::move(image);
  std::vector<std::string> phrases;
  std::vector<std::string> between;
  for (int m = 0; m < n; ++m) {
    const int k = order[m];
    sample.gt_boxes.push_back(boxes[k]);
    sample.gt_categories.push_back(pool[k]);
    phrases.push_back(std::string(unit(rng) < 0.5 ? "a " : "the ") + pool[k]);
    if (m + 1 < n) {
      std::vector<std::string> options;
      for (const auto& r : geometric_relations(boxes[k], boxes[order[m + 1]], config.near_threshold)) {
        if (std::find(relations.begin(), relations.end(), r) != relations.end()) options.push_back(r);
      }
      if (options.empty()) throw ConfigInvalid("no allowed relation holds for an adjacent object pair");
      const std::string rel = options[std::uniform_int_distribution<std::size_t>(0, options.size() - 1)(rng)];
      between.push_back(rel);
      sample.gt_triplets.push_back({m, rel, m + 1});
    }
  }
  sample.expression = render_expression(phrases, between);
  return sample;
}

std::vector<GroundingSample> generate_samples(std::size_t count, std::uint64_t seed, const SynthConfig& config,
                                              const std::vector<std::string>& categories,
                                              const std::vector<std::string>& relations) {
  std::vector<GroundingSample> out;
  out.reserve(count);
  std::vector<std::uint64_t> seeds(count);
  Rng master(seed);
  for (auto& s : seeds) s = master();
  for (std::size_t i = 0; i < count; ++i) out.push_back(generate_scene(seeds[i], config, categories, relations));
  return out;
}

}  // namespace sgdn
