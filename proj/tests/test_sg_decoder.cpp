#include <doctest.h>

#include <algorithm>
#include <limits>
#include <numeric>

#include "sgdn/errors.hpp"
#include "sgdn/grad_check.hpp"
#include "sgdn/sg_decoder.hpp"

using namespace sgdn;

namespace {

Real max_abs(const Matrix& a, const Matrix& b) {
  REQUIRE(a.rows() == b.rows());
  REQUIRE(a.cols() == b.cols());
  return a.size() == 0 ? 0.0 : (a - b).cwiseAbs().maxCoeff();
}

Matrix random_boxes(Index n, Rng& rng) {
  std::uniform_real_distribution<Real> c(0.2, 0.8), s(0.1, 0.4);
  Matrix b(n, 4);
  for (Index i = 0; i < n; ++i) b.row(i) << c(rng), c(rng), s(rng), s(rng);
  return b;
}

Matrix permute_rows(const Matrix& m, const std::vector<int>& perm) {
  Matrix out(m.rows(), m.cols());
  for (Index i = 0; i < m.rows(); ++i) out.row(i) = m.row(perm[i]);
  return out;
}

SgDecoderConfig small_config(int n, int blocks) {
  SgDecoderConfig cfg;
  cfg.dim = 8;
  cfg.heads = 2;
  cfg.ffn_dim = 16;
  cfg.sgor_hidden = 8;
  cfg.num_queries = n;
  cfg.blocks = blocks;
  return cfg;
}

// Features on a 4x4 grid.
ImageFeatureMap random_features(ad::Tape& tape, Index dim, Rng& rng) {
  return {tape.constant(normal_matrix(16, dim, 1.0, rng)), 4, 4};
}

}  // namespace

TEST_SUITE("sg_decoder") {

TEST_CASE("scene graph matrix shape and layout") {
  Rng rng(1);
  ad::Tape tape;
  SUBCASE("N=2, D=4") {
    const Matrix o = normal_matrix(2, 4, 1.0, rng);
    const Matrix p = normal_matrix(1, 4, 1.0, rng);
    const Matrix b = random_boxes(2, rng);
    const Matrix g = build_scene_graph_matrix(tape, tape.leaf(o), tape.leaf(p), b).value();
    CHECK(g.rows() == 2);
    CHECK(g.cols() == 20);
    // row (1, 0)
    CHECK(g.block(1, 0, 1, 4) == o.row(1));
    CHECK(g.block(1, 4, 1, 4) == b.row(1));
    CHECK(g.block(1, 8, 1, 4) == p);
    CHECK(g.block(1, 12, 1, 4) == o.row(0));
    CHECK(g.block(1, 16, 1, 4) == b.row(0));
  }
  SUBCASE("N=100, D=512") {
    const Matrix g = build_scene_graph_matrix(tape, tape.leaf(normal_matrix(100, 512, 1.0, rng)),
                                              tape.leaf(normal_matrix(1, 512, 1.0, rng)), random_boxes(100, rng))
                         .value();
    CHECK(g.rows() == 9900);
    CHECK(g.cols() == 1544);
  }
  SUBCASE("N=1 is empty") {
    const Matrix g = build_scene_graph_matrix(tape, tape.leaf(normal_matrix(1, 8, 1.0, rng)),
                                              tape.leaf(normal_matrix(1, 8, 1.0, rng)), random_boxes(1, rng))
                         .value();
    CHECK(g.rows() == 0);
    CHECK(g.cols() == scene_graph_width(8));
  }
  CHECK_THROWS_AS(build_scene_graph_matrix(tape, tape.leaf(Matrix::Zero(3, 4)), tape.leaf(Matrix::Zero(1, 4)),
                                           Matrix::Zero(2, 4)),
                  DimensionMismatch);
}

TEST_CASE("row index formula agrees with the lexicographic pair list") {
  for (int n = 1; n <= 7; ++n) {
    const auto pairs = scene_graph_pairs(n);
    REQUIRE(pairs.size() == static_cast<std::size_t>(n * (n - 1)));
    CHECK(std::is_sorted(pairs.begin(), pairs.end()));
    for (std::size_t r = 0; r < pairs.size(); ++r) {
      CHECK(scene_graph_row(pairs[r].first, pairs[r].second, n) == static_cast<int>(r));
    }
    const auto inc = incident_rows(n);
    for (int k = 0; k < n; ++k) {
      CHECK(inc[k].size() == static_cast<std::size_t>(2 * (n - 1)));
      for (int r : inc[k]) CHECK((pairs[r].first == k || pairs[r].second == k));
    }
  }
}

TEST_CASE("boxes enter the scene graph without gradient") {
  Rng rng(2);
  ad::Tape tape;
  const ad::Var o = tape.leaf(normal_matrix(3, 4, 1.0, rng));
  const ad::Var p = tape.leaf(normal_matrix(1, 4, 1.0, rng));
  const ad::Var b = tape.leaf(random_boxes(3, rng));
  const ad::Var g = build_scene_graph_matrix(tape, o, p, b.value());
  tape.backward(ad::sum(g));
  CHECK_FALSE(tape.has_grad(b));
  CHECK(tape.grad(o).cwiseAbs().minCoeff() == doctest::Approx(4.0));  // each object is in 4 rows
  CHECK(tape.grad(p).cwiseAbs().minCoeff() == doctest::Approx(6.0));
}

TEST_CASE("self-attention shapes, symmetry and permutation") {
  Rng rng(3);
  ParameterStore store;
  const SelfAttentionLayer layer = SelfAttentionLayer::create(store, "sa", 8, 2, rng);
  SUBCASE("one object plus the predicate") {
    ad::Tape tape(store);
    const TokenSet out =
        layer(tape, {tape.leaf(normal_matrix(1, 8, 1.0, rng)), tape.leaf(normal_matrix(1, 8, 1.0, rng))});
    CHECK(out.objects.rows() == 1);
    CHECK(out.objects.cols() == 8);
    CHECK(out.predicate.rows() == 1);
  }
  SUBCASE("identical tokens give identical attention output") {
    ad::Tape tape(store);
    const Matrix row = normal_matrix(1, 8, 1.0, rng);
    const ad::Var all = tape.leaf(row.replicate(4, 1));
    const Matrix att = layer.attn(tape, all, all).value();
    for (Index r = 1; r < 4; ++r) CHECK(max_abs(att.row(r), att.row(0)) < 1e-12);
  }
  SUBCASE("permuting objects permutes outputs") {
    const Matrix o = normal_matrix(5, 8, 1.0, rng);
    const Matrix p = normal_matrix(1, 8, 1.0, rng);
    const std::vector<int> perm = {3, 0, 4, 1, 2};
    ad::Tape t1(store), t2(store);
    const TokenSet a = layer(t1, {t1.leaf(o), t1.leaf(p)});
    const TokenSet b = layer(t2, {t2.leaf(permute_rows(o, perm)), t2.leaf(p)});
    CHECK(max_abs(permute_rows(a.objects.value(), perm), b.objects.value()) < 1e-12);
    CHECK(max_abs(a.predicate.value(), b.predicate.value()) < 1e-12);
  }
}

TEST_CASE("SSGA sparse equals masked dense") {
  Rng rng(4);
  for (int n : {2, 3, 5, 8}) {
    ParameterStore store;
    const SsgaLayer layer = SsgaLayer::create(store, "ssga", 8, 2, rng);
    ad::Tape tape(store);
    const TokenSet tokens{tape.leaf(normal_matrix(n, 8, 1.0, rng)), tape.leaf(normal_matrix(1, 8, 1.0, rng))};
    const ad::Var g = build_scene_graph_matrix(tape, tokens, random_boxes(n, rng));
    const TokenSet sparse = layer(tape, tokens, g, SsgaMode::kSparse);
    const TokenSet dense = layer(tape, tokens, g, SsgaMode::kDenseMasked);
    CHECK(max_abs(sparse.objects.value(), dense.objects.value()) < 1e-6);
    CHECK(sparse.predicate.value() == tokens.predicate.value());
  }
}

TEST_CASE("SSGA with two objects attends to both rows") {
  Rng rng(5);
  ParameterStore store;
  const SsgaLayer layer = SsgaLayer::create(store, "ssga", 8, 2, rng);
  ad::Tape tape(store);
  const TokenSet tokens{tape.leaf(normal_matrix(2, 8, 1.0, rng)), tape.leaf(normal_matrix(1, 8, 1.0, rng))};
  const ad::Var g = build_scene_graph_matrix(tape, tokens, random_boxes(2, rng));
  const Matrix keys = layer.graph_proj(tape, g).value();
  // Unmasked dense attention over the two rows is the oracle.
  const Matrix dense = layer.attn(tape, tokens.objects, tape.leaf(keys)).value();
  const Matrix expected = layer.norm(tape, tokens.objects + tape.leaf(dense)).value();
  CHECK(max_abs(layer(tape, tokens, g).objects.value(), expected) < 1e-12);
}

TEST_CASE("SSGA with one object is the identity") {
  Rng rng(6);
  ParameterStore store;
  const SsgaLayer layer = SsgaLayer::create(store, "ssga", 8, 2, rng);
  ad::Tape tape(store);
  const TokenSet tokens{tape.leaf(normal_matrix(1, 8, 1.0, rng)), tape.leaf(normal_matrix(1, 8, 1.0, rng))};
  const ad::Var g = build_scene_graph_matrix(tape, tokens, random_boxes(1, rng));
  const TokenSet out = layer(tape, tokens, g);
  CHECK(out.objects.value() == tokens.objects.value());
  CHECK(out.predicate.value() == tokens.predicate.value());
}

TEST_CASE("cross-attention over a single feature row") {
  Rng rng(7);
  for (bool box_conditioned : {false, true}) {
    ParameterStore store;
    const CrossAttentionLayer layer = CrossAttentionLayer::create(store, "ca", 8, 2, 16, box_conditioned, rng);
    ad::Tape tape(store);
    const TokenSet tokens{tape.leaf(normal_matrix(3, 8, 1.0, rng)), tape.leaf(normal_matrix(1, 8, 1.0, rng))};
    const ImageFeatureMap v{tape.leaf(normal_matrix(1, 8, 1.0, rng)), 1, 1};
    const Matrix projected = layer.attn.output(tape, layer.attn.value(tape, v.features)).value();
    const Matrix boxes = random_boxes(3, rng);
    // With one key the softmax weight is 1 whatever the query, so every
    // token receives the projected value row.
    const ad::Var all = ad::concat_rows(std::vector<ad::Var>{tokens.objects, tokens.predicate});
    const ad::Var h = layer.norm1(tape, all + tape.constant(projected.replicate(4, 1)));
    const Matrix expected = layer.norm2(tape, h + layer.ffn(tape, h)).value();
    const TokenSet out = layer(tape, tokens, v, boxes);
    CHECK(max_abs(out.objects.value(), expected.topRows(3)) < 1e-12);
    CHECK(max_abs(out.predicate.value(), expected.bottomRows(1)) < 1e-12);
    CHECK(out.objects.rows() == 3);
    CHECK(out.objects.cols() == 8);
    CHECK(out.predicate.rows() == 1);
  }
}

TEST_CASE("cross-attention gradient") {
  const GradCheckReport r = gradient_check("cross_attention_layer", 3, 1e-4);
  CHECK(r.passed);
}

TEST_CASE("decode: block count and box validity") {
  Rng rng(8);
  for (int blocks : {1, 3}) {
    ParameterStore store;
    const SgDecoder dec = SgDecoder::create(store, "dec", small_config(4, blocks), rng);
    ad::Tape tape(store);
    const DecodeResult r = dec.decode(tape, random_features(tape, 8, rng));
    CHECK(r.per_block.size() == static_cast<std::size_t>(blocks));
    for (const DecoderState& s : r.per_block) {
      const Matrix& b = s.boxes.value();
      CHECK(b.rows() == 4);
      CHECK(b.minCoeff() > 0.0);
      CHECK(b.maxCoeff() < 1.0);
    }
    CHECK(r.final_boxes.value() == r.per_block.back().boxes.value());
  }
}

TEST_CASE("decode: sparse and dense SSGA agree at every block") {
  Rng rng(9);
  ParameterStore store;
  const SgDecoder dec = SgDecoder::create(store, "dec", small_config(6, 3), rng);
  ad::Tape tape(store);
  const ImageFeatureMap v = random_features(tape, 8, rng);
  const DecodeResult a = dec.decode(tape, v, SsgaMode::kSparse);
  const DecodeResult b = dec.decode(tape, v, SsgaMode::kDenseMasked);
  for (std::size_t l = 0; l < a.per_block.size(); ++l) {
    CHECK(max_abs(a.per_block[l].tokens.objects.value(), b.per_block[l].tokens.objects.value()) < 1e-6);
    CHECK(max_abs(a.per_block[l].boxes.value(), b.per_block[l].boxes.value()) < 1e-6);
  }
}

TEST_CASE("decode is permutation equivariant") {
  Rng rng(10);
  for (bool ssga : {true, false}) {
    ParameterStore store;
    SgDecoderConfig cfg = small_config(5, 2);
    cfg.use_ssga = ssga;
    const SgDecoder dec = SgDecoder::create(store, "dec", cfg, rng);
    const Matrix v = normal_matrix(16, 8, 1.0, rng);
    const Matrix queries = store.value(dec.query_param());
    const Matrix pred = store.value(dec.predicate_param());
    const Matrix boxes = random_boxes(5, rng);
    const std::vector<int> perm = {2, 4, 0, 1, 3};

    ad::Tape t1(store), t2(store);
    const DecodeResult a = dec.decode(t1, {t1.constant(v), 4, 4}, {t1.leaf(queries), t1.leaf(pred)}, t1.leaf(boxes));
    const DecodeResult b = dec.decode(t2, {t2.constant(v), 4, 4},
                                      {t2.leaf(permute_rows(queries, perm)), t2.leaf(pred)},
                                      t2.leaf(permute_rows(boxes, perm)));
    CHECK(max_abs(permute_rows(a.final_tokens.objects.value(), perm), b.final_tokens.objects.value()) < 1e-10);
    CHECK(max_abs(permute_rows(a.final_boxes.value(), perm), b.final_boxes.value()) < 1e-10);
    CHECK(max_abs(a.final_tokens.predicate.value(), b.final_tokens.predicate.value()) < 1e-10);
  }
}

TEST_CASE("ablated decoder equals a plain refinement decoder built from the same sublayers") {
  Rng rng(11);
  ParameterStore store;
  SgDecoderConfig cfg = small_config(4, 2);
  cfg.use_ssga = false;
  const SgDecoder dec = SgDecoder::create(store, "dec", cfg, rng);
  ad::Tape tape(store);
  const ImageFeatureMap v = random_features(tape, 8, rng);
  const DecodeResult r = dec.decode(tape, v);

  TokenSet state = dec.initial_tokens(tape);
  Matrix boxes = dec.initial_boxes(tape, state).value();
  for (const DecoderBlock& block : dec.blocks()) {
    state = block.self_attn(tape, state);
    state = block.cross_attn(tape, state, v, boxes);
    const Matrix offsets = block.sgor.predict_offset(tape, state.objects, boxes).value();
    for (Index n = 0; n < boxes.rows(); ++n) {
      const BoundingBox b = refine_box(BoundingBox{boxes(n, 0), boxes(n, 1), boxes(n, 2), boxes(n, 3)},
                                       {offsets(n, 0), offsets(n, 1), offsets(n, 2), offsets(n, 3)});
      boxes.row(n) << b.cx, b.cy, b.w, b.h;
    }
  }
  CHECK(max_abs(r.final_tokens.objects.value(), state.objects.value()) < 1e-12);
  CHECK(max_abs(r.final_boxes.value(), boxes) < 1e-12);
}

TEST_CASE("decoder block gradient") {
  CHECK(gradient_check("decoder_block", 3, 1e-4).passed);
}

}  // TEST_SUITE
