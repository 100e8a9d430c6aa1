#pragma once

// Deterministic stand-in for a pretrained text encoder. Each category string
// becomes one unit-norm row seeded from a stable 64-bit hash.
//
// In compositional mode (the default) the row is the normalized sum of one
// hashed vector per word plus a weighted hashed vector for the whole label,
// so "red square" shares directions with "red circle" and "blue square"
// while distinct labels still map to distinct rows.

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "sgdn/types.hpp"

namespace sgdn {

struct CategoryEmbeddings {
  Matrix matrix;  // (K+1) x D, unit rows
  std::vector<std::string> labels;

  Index dim() const { return matrix.cols(); }
};

struct TextEncoderConfig {
  Index dim = 32;
  std::uint64_t seed = 0x5eed5eedULL;
  bool compositional = true;
  // Weight of the whole-label hash next to the per-word hashes. Small values
  // let unseen color-shape pairs inherit from their words.
  Real label_weight = 0.2;
};

std::uint64_t stable_hash(std::string_view text);

class TextEncoder {
 public:
  TextEncoder() = default;
  explicit TextEncoder(TextEncoderConfig config) : config_(config) {}

  const TextEncoderConfig& config() const { return config_; }

  // labels must be non-empty and end with a sentinel ("no object" or
  // "no relation"). With use_prompt each non-sentinel label is encoded as
  // "A photo of a {label}".
  CategoryEmbeddings encode(const std::vector<std::string>& labels, bool use_prompt = false) const;
  RowVector encode_one(std::string_view text) const;

 private:
  RowVector hashed_vector(std::string_view text) const;

  TextEncoderConfig config_;
};

}  // namespace sgdn
