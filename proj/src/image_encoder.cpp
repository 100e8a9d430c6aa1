#include "sgdn/image_encoder.hpp"

#include <cmath>

#include "sgdn/errors.hpp"

namespace sgdn {

RowVector sinusoidal_point(Real row, Real col, Index dim) {
  RowVector out(dim);
  const Index half = dim / 2;
  auto fill = [&](Index offset, Real pos, Index width) {
    for (Index i = 0; i < width; ++i) {
      const Real freq = std::pow(10000.0, -static_cast<Real>(2 * (i / 2)) / static_cast<Real>(width));
      out(offset + i) = (i % 2 == 0) ? std::sin(pos * freq) : std::cos(pos * freq);
    }
  };
  fill(0, row, half);
  fill(half, col, dim - half);
  return out;
}

Matrix sinusoidal_position_2d(int rows, int cols, Index dim) {
  Matrix pe(static_cast<Index>(rows) * cols, dim);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) pe.row(static_cast<Index>(r) * cols + c) = sinusoidal_point(r, c, dim);
  }
  return pe;
}

Matrix box_position_encoding(const Matrix& boxes, int grid_rows, int grid_cols, Index dim) {
  Matrix pe(boxes.rows(), dim);
  for (Index n = 0; n < boxes.rows(); ++n) {
    pe.row(n) = sinusoidal_point(boxes(n, 1) * grid_rows - 0.5, boxes(n, 0) * grid_cols - 0.5, dim);
  }
  return pe;
}

Matrix patchify(const Image& image, int patch) {
  if (patch <= 0 || image.height <= 0 || image.width <= 0 || image.height % patch != 0 ||
      image.width % patch != 0) {
    throw BadShape("image " + std::to_string(image.height) + "x" + std::to_string(image.width) +
                   " is not divisible into " + std::to_string(patch) + "-pixel patches");
  }
  const int rows = image.height / patch;
  const int cols = image.width / patch;
  Matrix out(static_cast<Index>(rows) * cols, static_cast<Index>(patch) * patch * 3);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      const Index row = static_cast<Index>(r) * cols + c;
      Index k = 0;
      for (int y = 0; y < patch; ++y) {
        for (int x = 0; x < patch; ++x) {
          for (int ch = 0; ch < 3; ++ch) out(row, k++) = image.at(r * patch + y, c * patch + x, ch);
        }
      }
    }
  }
  return out;
}

EncoderLayer EncoderLayer::create(ParameterStore& store, const std::string& name, const ImageEncoderConfig& cfg,
                                  Rng& rng) {
  EncoderLayer l;
  l.attn = MultiHeadAttention::create(store, name + ".attn", cfg.dim, cfg.heads, rng);
  l.norm1 = LayerNorm::create(store, name + ".norm1", cfg.dim);
  l.ffn = Mlp::create(store, name + ".ffn", cfg.dim, cfg.ffn_dim, cfg.dim, rng);
  l.norm2 = LayerNorm::create(store, name + ".norm2", cfg.dim);
  return l;
}

ad::Var EncoderLayer::operator()(ad::Tape& tape, const ad::Var& x) const {
  const ad::Var h = norm1(tape, x + attn(tape, x, x));
  return norm2(tape, h + ffn(tape, h));
}

ImageEncoder ImageEncoder::create(ParameterStore& store, const std::string& name, const ImageEncoderConfig& cfg,
                                  Rng& rng) {
  ImageEncoder enc;
  enc.config_ = cfg;
  enc.patch_proj_ = Linear::create(store, name + ".patch_proj", static_cast<Index>(cfg.patch) * cfg.patch * 3,
                                   cfg.dim, rng);
  for (int i = 0; i < cfg.layers; ++i) {
    enc.layers_.push_back(EncoderLayer::create(store, name + ".layer" + std::to_string(i), cfg, rng));
  }
  return enc;
}

ad::Var ImageEncoder::embed_patches(ad::Tape& tape, const ad::Var& patches, int grid_rows, int grid_cols) const {
  const ad::Var pos = tape.constant(sinusoidal_position_2d(grid_rows, grid_cols, config_.dim));
  return patch_proj_(tape, patches) + pos;
}

ImageFeatureMap ImageEncoder::encode_patches(ad::Tape& tape, const ad::Var& patches, int grid_rows,
                                             int grid_cols) const {
  ad::Var x = embed_patches(tape, patches, grid_rows, grid_cols);
  for (const EncoderLayer& layer : layers_) x = layer(tape, x);
  return {x, grid_rows, grid_cols};
}

ImageFeatureMap ImageEncoder::encode(ad::Tape& tape, const Image& image) const {
  Matrix patches = patchify(image, config_.patch);
  return encode_patches(tape, tape.constant(std::move(patches)), image.height / config_.patch,
                        image.width / config_.patch);
}

}  // namespace sgdn
