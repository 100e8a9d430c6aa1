#pragma once

// Patch embedding + fixed 2-D sinusoidal positions + a stack of standard
// post-norm transformer encoder layers. Produces the feature map V.

#include <string>
#include <vector>

#include "sgdn/image.hpp"
#include "sgdn/nn.hpp"

namespace sgdn {

struct ImageEncoderConfig {
  int patch = 8;
  Index dim = 32;
  int layers = 2;
  int heads = 4;
  Index ffn_dim = 64;
};

struct ImageFeatureMap {
  ad::Var features;  // N_v x D
  int grid_rows = 0;
  int grid_cols = 0;
};

// Sinusoidal code for a continuous grid position; the first half of the
// columns encode the row, the second half the column.
RowVector sinusoidal_point(Real row, Real col, Index dim);

// Fixed encoding; the first half of the columns encode the patch row, the
// second half the patch column.
Matrix sinusoidal_position_2d(int rows, int cols, Index dim);

// Encodes each box center (cx, cy in [0,1]) at its position on the patch
// grid, so it lines up with sinusoidal_position_2d.
Matrix box_position_encoding(const Matrix& boxes, int grid_rows, int grid_cols, Index dim);

// (rows*cols) x (P*P*3); row r*cols + c holds patch (r, c) in y, x, channel
// order. Throws BadShape when H or W is not a multiple of P.
Matrix patchify(const Image& image, int patch);

struct EncoderLayer {
  MultiHeadAttention attn;
  LayerNorm norm1;
  Mlp ffn;
  LayerNorm norm2;

  static EncoderLayer create(ParameterStore& store, const std::string& name, const ImageEncoderConfig& cfg,
                             Rng& rng);
  ad::Var operator()(ad::Tape& tape, const ad::Var& x) const;
};

class ImageEncoder {
 public:
  static ImageEncoder create(ParameterStore& store, const std::string& name, const ImageEncoderConfig& cfg,
                             Rng& rng);

  const ImageEncoderConfig& config() const { return config_; }

  // Linear patch projection plus positions, before any encoder layer.
  ad::Var embed_patches(ad::Tape& tape, const ad::Var& patches, int grid_rows, int grid_cols) const;
  ImageFeatureMap encode_patches(ad::Tape& tape, const ad::Var& patches, int grid_rows, int grid_cols) const;
  ImageFeatureMap encode(ad::Tape& tape, const Image& image) const;

 private:
  ImageEncoderConfig config_;
  Linear patch_proj_;
  std::vector<EncoderLayer> layers_;
};

}  // namespace sgdn
