#pragma once

// The L-block scene-graph decoder. Each block runs self-attention over the
// object and predicate tokens, injects scene-graph context into the object
// tokens (SSGA), cross-attends to the image features and refines the boxes.

#include <string>
#include <vector>

#include "sgdn/image_encoder.hpp"
#include "sgdn/scene_graph.hpp"
#include "sgdn/sg_pred.hpp"

namespace sgdn {

struct SgDecoderConfig {
  Index dim = 32;
  int num_queries = 8;
  int blocks = 2;
  int heads = 4;
  Index ffn_dim = 64;
  Index sgor_hidden = 32;
  Activation sgor_activation = Activation::kRelu;
  BoxUpdate box_update = BoxUpdate::kLogit;
  bool use_ssga = true;
  // Cross-attention queries carry a learned code of the current box center
  // and keys carry the patch-grid positions.
  bool box_conditioned_cross_attention = true;
};

enum class SsgaMode { kSparse, kDenseMasked };

struct SelfAttentionLayer {
  MultiHeadAttention attn;
  LayerNorm norm;

  static SelfAttentionLayer create(ParameterStore& store, const std::string& name, Index dim, int heads, Rng& rng);
  TokenSet operator()(ad::Tape& tape, const TokenSet& tokens) const;
};

struct SsgaLayer {
  Linear graph_proj;  // 3D+8 -> D
  MultiHeadAttention attn;
  LayerNorm norm;

  static SsgaLayer create(ParameterStore& store, const std::string& name, Index dim, int heads, Rng& rng);
  // Returns updated object tokens; the predicate passes through untouched.
  // With a single object there is nothing to attend to and the objects are
  // returned unchanged.
  TokenSet operator()(ad::Tape& tape, const TokenSet& tokens, const ad::Var& graph,
                      SsgaMode mode = SsgaMode::kSparse) const;
};

struct CrossAttentionLayer {
  MultiHeadAttention attn;
  LayerNorm norm1;
  Mlp ffn;
  LayerNorm norm2;
  Linear box_pos;  // unused (-1) without box conditioning

  static CrossAttentionLayer create(ParameterStore& store, const std::string& name, Index dim, int heads,
                                    Index ffn_dim, bool box_conditioned, Rng& rng);
  // boxes: current N x 4 boxes, read only when box_pos is present.
  TokenSet operator()(ad::Tape& tape, const TokenSet& tokens, const ImageFeatureMap& features,
                      const Matrix& boxes = {}) const;
};

struct DecoderBlock {
  SelfAttentionLayer self_attn;
  SsgaLayer ssga;
  CrossAttentionLayer cross_attn;
  SgorHead sgor;
};

struct DecoderState {
  TokenSet tokens;
  ad::Var boxes;  // refined boxes b_{l+1}, N x 4
  int block_index = 0;
};

struct DecodeResult {
  std::vector<DecoderState> per_block;
  TokenSet final_tokens;
  ad::Var final_boxes;
};

class SgDecoder {
 public:
  static SgDecoder create(ParameterStore& store, const std::string& name, const SgDecoderConfig& cfg, Rng& rng);

  const SgDecoderConfig& config() const { return config_; }
  const std::vector<DecoderBlock>& blocks() const { return blocks_; }
  const BoxInit& box_init() const { return box_init_; }
  int query_param() const { return queries_; }
  int predicate_param() const { return predicate_; }

  // Learned object queries and predicate token.
  TokenSet initial_tokens(ad::Tape& tape) const;
  ad::Var initial_boxes(ad::Tape& tape, const TokenSet& tokens) const;

  DecodeResult decode(ad::Tape& tape, const ImageFeatureMap& features, const TokenSet& tokens,
                      const ad::Var& init_boxes, SsgaMode mode = SsgaMode::kSparse) const;
  DecodeResult decode(ad::Tape& tape, const ImageFeatureMap& features, SsgaMode mode = SsgaMode::kSparse) const;

 private:
  SgDecoderConfig config_;
  int queries_ = -1;
  int predicate_ = -1;
  BoxInit box_init_;
  std::vector<DecoderBlock> blocks_;
};

}  // namespace sgdn
