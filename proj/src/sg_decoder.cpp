#include "sgdn/sg_decoder.hpp"

#include <limits>

#include "sgdn/errors.hpp"

namespace sgdn {

std::vector<std::pair<int, int>> scene_graph_pairs(int n) {
  std::vector<std::pair<int, int>> pairs;
  if (n < 2) return pairs;
  pairs.reserve(static_cast<std::size_t>(n) * (n - 1));
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (i != j) pairs.emplace_back(i, j);
    }
  }
  return pairs;
}

std::vector<std::vector<int>> incident_rows(int n) {
  std::vector<std::vector<int>> rows(static_cast<std::size_t>(std::max(n, 0)));
  for (int k = 0; k < n; ++k) {
    for (int j = 0; j < n; ++j) {
      if (j != k) rows[k].push_back(scene_graph_row(k, j, n));
    }
    for (int j = 0; j < n; ++j) {
      if (j != k) rows[k].push_back(scene_graph_row(j, k, n));
    }
  }
  return rows;
}

ad::Var build_scene_graph_matrix(ad::Tape& tape, const ad::Var& objects, const ad::Var& predicate,
                                 const Matrix& boxes) {
  const int n = static_cast<int>(objects.rows());
  if (boxes.rows() != n || boxes.cols() != 4) throw DimensionMismatch("scene graph: need one box per object");
  if (predicate.rows() != 1 || predicate.cols() != objects.cols()) {
    throw DimensionMismatch("scene graph: predicate token width");
  }
  const auto pairs = scene_graph_pairs(n);
  std::vector<int> subj, obj;
  subj.reserve(pairs.size());
  obj.reserve(pairs.size());
  for (const auto& [i, j] : pairs) {
    subj.push_back(i);
    obj.push_back(j);
  }
  const std::vector<int> zeros(pairs.size(), 0);
  const ad::Var box_const = tape.constant(boxes);
  const ad::Var parts[] = {
      ad::gather_rows(objects, subj), ad::gather_rows(box_const, subj), ad::gather_rows(predicate, zeros),
      ad::gather_rows(objects, obj),  ad::gather_rows(box_const, obj),
  };
  return ad::concat_cols(parts);
}

SelfAttentionLayer SelfAttentionLayer::create(ParameterStore& store, const std::string& name, Index dim, int heads,
                                              Rng& rng) {
  return {MultiHeadAttention::create(store, name + ".attn", dim, heads, rng),
          LayerNorm::create(store, name + ".norm", dim)};
}

TokenSet SelfAttentionLayer::operator()(ad::Tape& tape, const TokenSet& tokens) const {
  const ad::Var parts[] = {tokens.objects, tokens.predicate};
  const ad::Var all = ad::concat_rows(parts);
  const ad::Var updated = norm(tape, all + attn(tape, all, all));
  const Index n = tokens.count();
  return {ad::slice_rows(updated, 0, n), ad::slice_rows(updated, n, 1)};
}

SsgaLayer SsgaLayer::create(ParameterStore& store, const std::string& name, Index dim, int heads, Rng& rng) {
  return {Linear::create(store, name + ".graph_proj", scene_graph_width(dim), dim, rng),
          MultiHeadAttention::create(store, name + ".attn", dim, heads, rng),
          LayerNorm::create(store, name + ".norm", dim)};
}

TokenSet SsgaLayer::operator()(ad::Tape& tape, const TokenSet& tokens, const ad::Var& graph, SsgaMode mode) const {
  const int n = static_cast<int>(tokens.count());
  if (graph.rows() != static_cast<Index>(n) * (n - 1)) throw DimensionMismatch("ssga: graph rows");
  if (n < 2) return tokens;
  const ad::Var keys = graph_proj(tape, graph);
  ad::Var context;
  if (mode == SsgaMode::kSparse) {
    context = attn.sparse(tape, tokens.objects, keys, incident_rows(n));
  } else {
    Matrix mask = Matrix::Constant(n, graph.rows(), -std::numeric_limits<Real>::infinity());
    const auto incident = incident_rows(n);
    for (int k = 0; k < n; ++k) {
      for (int r : incident[k]) mask(k, r) = 0.0;
    }
    context = attn(tape, tokens.objects, keys, &mask);
  }
  return {norm(tape, tokens.objects + context), tokens.predicate};
}

CrossAttentionLayer CrossAttentionLayer::create(ParameterStore& store, const std::string& name, Index dim,
                                                int heads, Index ffn_dim, bool box_conditioned, Rng& rng) {
  CrossAttentionLayer layer{MultiHeadAttention::create(store, name + ".attn", dim, heads, rng),
                            LayerNorm::create(store, name + ".norm1", dim),
                            Mlp::create(store, name + ".ffn", dim, ffn_dim, dim, rng),
                            LayerNorm::create(store, name + ".norm2", dim), Linear{}};
  if (box_conditioned) layer.box_pos = Linear::create(store, name + ".box_pos", dim, dim, rng);
  return layer;
}

TokenSet CrossAttentionLayer::operator()(ad::Tape& tape, const TokenSet& tokens, const ImageFeatureMap& features,
                                         const Matrix& boxes) const {
  const ad::Var parts[] = {tokens.objects, tokens.predicate};
  const ad::Var all = ad::concat_rows(parts);
  ad::Var attended;
  if (box_pos.weight < 0) {
    attended = attn(tape, all, features.features);
  } else {
    if (boxes.rows() != tokens.count() || boxes.cols() != 4) {
      throw DimensionMismatch("cross-attention: need one box per object token");
    }
    const Index dim = features.features.cols();
    const ad::Var code =
        box_pos(tape, tape.constant(box_position_encoding(boxes, features.grid_rows, features.grid_cols, dim)));
    const ad::Var query_parts[] = {tokens.objects + code, tokens.predicate};
    const ad::Var grid = tape.constant(sinusoidal_position_2d(features.grid_rows, features.grid_cols, dim));
    attended = attn.attend(tape, ad::concat_rows(query_parts), features.features + grid, features.features);
  }
  const ad::Var h = norm1(tape, all + attended);
  const ad::Var out = norm2(tape, h + ffn(tape, h));
  const Index n = tokens.count();
  return {ad::slice_rows(out, 0, n), ad::slice_rows(out, n, 1)};
}

SgDecoder SgDecoder::create(ParameterStore& store, const std::string& name, const SgDecoderConfig& cfg, Rng& rng) {
  if (cfg.num_queries < 1) throw ConfigInvalid("decoder needs at least one object query");
  if (cfg.blocks < 1) throw ConfigInvalid("decoder needs at least one block");
  SgDecoder dec;
  dec.config_ = cfg;
  dec.queries_ = store.add(name + ".object_queries", normal_matrix(cfg.num_queries, cfg.dim, 1.0, rng));
  dec.predicate_ = store.add(name + ".predicate_token", normal_matrix(1, cfg.dim, 1.0, rng));
  dec.box_init_ = BoxInit::create(store, name + ".box_init", cfg.dim, rng);
  for (int l = 0; l < cfg.blocks; ++l) {
    const std::string prefix = name + ".block" + std::to_string(l);
    DecoderBlock b;
    b.self_attn = SelfAttentionLayer::create(store, prefix + ".self_attn", cfg.dim, cfg.heads, rng);
    b.ssga = SsgaLayer::create(store, prefix + ".ssga", cfg.dim, cfg.heads, rng);
    b.cross_attn = CrossAttentionLayer::create(store, prefix + ".cross_attn", cfg.dim, cfg.heads, cfg.ffn_dim,
                                               cfg.box_conditioned_cross_attention, rng);
    b.sgor = SgorHead::create(store, prefix + ".sgor", cfg.dim, cfg.sgor_hidden, cfg.sgor_activation,
                              cfg.box_update, rng);
    dec.blocks_.push_back(std::move(b));
  }
  return dec;
}

TokenSet SgDecoder::initial_tokens(ad::Tape& tape) const {
  return {tape.param(queries_), tape.param(predicate_)};
}

ad::Var SgDecoder::initial_boxes(ad::Tape& tape, const TokenSet& tokens) const {
  return box_init_(tape, tokens.objects);
}

DecodeResult SgDecoder::decode(ad::Tape& tape, const ImageFeatureMap& features, const TokenSet& tokens,
                               const ad::Var& init_boxes, SsgaMode mode) const {
  if (init_boxes.rows() != tokens.count() || init_boxes.cols() != 4) {
    throw DimensionMismatch("decode: need one initial box per object token");
  }
  DecodeResult result;
  TokenSet state = tokens;
  // The first block refines the initial boxes with gradient; later blocks
  // start from detached boxes.
  ad::Var boxes = init_boxes;
  for (std::size_t l = 0; l < blocks_.size(); ++l) {
    const DecoderBlock& block = blocks_[l];
    const Matrix box_values = boxes.value();
    state = block.self_attn(tape, state);
    if (config_.use_ssga) {
      const ad::Var graph = build_scene_graph_matrix(tape, state, box_values);
      state = block.ssga(tape, state, graph, mode);
    }
    state = block.cross_attn(tape, state, features, box_values);
    const ad::Var offsets = block.sgor.predict_offset(tape, state.objects, box_values);
    const ad::Var refined = block.sgor.refine(tape, l == 0 ? boxes : tape.constant(box_values), offsets);
    result.per_block.push_back({state, refined, static_cast<int>(l)});
    boxes = refined;
  }
  result.final_tokens = state;
  result.final_boxes = boxes;
  return result;
}

DecodeResult SgDecoder::decode(ad::Tape& tape, const ImageFeatureMap& features, SsgaMode mode) const {
  const TokenSet tokens = initial_tokens(tape);
  return decode(tape, features, tokens, initial_boxes(tape, tokens), mode);
}

}  // namespace sgdn
