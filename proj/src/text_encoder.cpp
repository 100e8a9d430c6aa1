#include "sgdn/text_encoder.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

#include "sgdn/errors.hpp"
#include "sgdn/expr_parser.hpp"

namespace sgdn {
namespace {

// splitmix64 step; the generator behind every hashed vector.
std::uint64_t next_u64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

Real next_unit(std::uint64_t& state) {
  // 53 random bits in (0, 1).
  return (static_cast<Real>(next_u64(state) >> 11) + 0.5) * 0x1.0p-53;
}

bool is_sentinel(std::string_view label) { return label == kNoObject || label == kNoRelation; }

}  // namespace

std::uint64_t stable_hash(std::string_view text) {
  // FNV-1a, 64-bit.
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

RowVector TextEncoder::hashed_vector(std::string_view text) const {
  std::uint64_t state = stable_hash(text) ^ config_.seed;
  RowVector v(config_.dim);
  // Box-Muller keeps the stream platform independent.
  for (Index i = 0; i < config_.dim; i += 2) {
    const Real u1 = next_unit(state);
    const Real u2 = next_unit(state);
    const Real r = std::sqrt(-2.0 * std::log(u1));
    v(i) = r * std::cos(2.0 * std::numbers::pi * u2);
    if (i + 1 < config_.dim) v(i + 1) = r * std::sin(2.0 * std::numbers::pi * u2);
  }
  return v;
}

RowVector TextEncoder::encode_one(std::string_view text) const {
  RowVector v;
  if (!config_.compositional) {
    v = hashed_vector(text);
  } else {
    v = config_.label_weight * hashed_vector(text);
    std::istringstream words{std::string(text)};
    std::string w;
    while (words >> w) v += hashed_vector("word:" + w);
  }
  return v / v.norm();
}

CategoryEmbeddings TextEncoder::encode(const std::vector<std::string>& labels, bool use_prompt) const {
  if (labels.empty()) throw EmptyLabelList("no category labels to encode");
  if (!is_sentinel(labels.back())) {
    throw EmptyLabelList("label list must end with \"no object\" or \"no relation\"");
  }
  if (config_.dim <= 0) throw ConfigInvalid("text embedding dimension must be positive");
  CategoryEmbeddings out;
  out.labels = labels;
  out.matrix.resize(static_cast<Index>(labels.size()), config_.dim);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const std::string& label = labels[i];
    const std::string text = (use_prompt && !is_sentinel(label)) ? "A photo of a " + label : label;
    out.matrix.row(static_cast<Index>(i)) = encode_one(text);
  }
  return out;
}

}  // namespace sgdn
