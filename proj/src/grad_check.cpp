#include "sgdn/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "sgdn/errors.hpp"
#include "sgdn/matching.hpp"
#include "sgdn/model.hpp"
#include "sgdn/scene_graph.hpp"
#include "sgdn/sg_decoder.hpp"
#include "sgdn/sg_pred.hpp"

namespace sgdn {

namespace {

using Inputs = std::span<const ad::Var>;

Matrix uniform(Index rows, Index cols, Real lo, Real hi, Rng& rng) {
  std::uniform_real_distribution<Real> d(lo, hi);
  Matrix m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = d(rng);
  return m;
}

Matrix randn(Index rows, Index cols, Rng& rng) { return normal_matrix(rows, cols, 1.0, rng); }

// Reduces any output to a scalar with fixed random weights so every output
// entry contributes.
ad::Var weighted_sum(ad::Tape& tape, const ad::Var& out, const Matrix& w) {
  return ad::sum(ad::cmul(out, tape.constant(w)));
}

// One-output op applied to the inputs, scalarized.
CheckCase unary_case(std::vector<Matrix> inputs, Index out_rows, Index out_cols,
                     std::function<ad::Var(ad::Tape&, Inputs)> op, Rng& rng) {
  const Matrix w = randn(out_rows, out_cols, rng);
  return {std::move(inputs), nullptr, [op, w](ad::Tape& t, Inputs in) { return weighted_sum(t, op(t, in), w); }};
}

// Replaces every parameter with N(0, stddev^2) draws so zero-initialized
// layers still produce informative gradients. Deep stacks need a smaller
// spread, or saturated softmaxes leave gradients at round-off level.
void randomize(ParameterStore& store, Rng& rng, Real stddev = 0.5) {
  for (Index i = 0; i < store.size(); ++i) {
    Matrix& v = store.value(static_cast<int>(i));
    v = normal_matrix(v.rows(), v.cols(), stddev, rng);
  }
}

CheckCase layer_case(std::shared_ptr<ParameterStore> store, std::vector<Matrix> inputs, Index out_rows,
                     Index out_cols, std::function<ad::Var(ad::Tape&, Inputs)> op, Rng& rng) {
  randomize(*store, rng);
  CheckCase c = unary_case(std::move(inputs), out_rows, out_cols, std::move(op), rng);
  c.params = std::move(store);
  return c;
}

std::vector<std::vector<int>> random_neighbors(int nq, int nk, Rng& rng) {
  std::vector<std::vector<int>> nb(nq);
  std::bernoulli_distribution keep(0.5);
  for (auto& list : nb) {
    for (int k = 0; k < nk; ++k) {
      if (keep(rng)) list.push_back(k);
    }
  }
  nb[0].clear();  // exercise the empty-row path
  if (nq > 1 && nb[1].empty()) nb[1].push_back(0);
  return nb;
}

Matrix random_boxes(Index n, Rng& rng) {
  Matrix b(n, 4);
  b.leftCols(2) = uniform(n, 2, 0.2, 0.8, rng);
  b.rightCols(2) = uniform(n, 2, 0.1, 0.4, rng);
  return b;
}

std::vector<RegisteredCheck> build_registry() {
  std::vector<RegisteredCheck> r;
  auto add = [&](std::string id, CaseBuilder b, bool e2e = false) { r.push_back({std::move(id), e2e, std::move(b)}); };

  add("add", [](Rng& g) {
    return unary_case({randn(3, 4, g), randn(3, 4, g)}, 3, 4, [](ad::Tape&, Inputs in) { return in[0] + in[1]; }, g);
  });
  add("sub", [](Rng& g) {
    return unary_case({randn(3, 4, g), randn(3, 4, g)}, 3, 4, [](ad::Tape&, Inputs in) { return in[0] - in[1]; }, g);
  });
  add("cmul", [](Rng& g) {
    return unary_case({randn(3, 4, g), randn(3, 4, g)}, 3, 4, [](ad::Tape&, Inputs in) { return ad::cmul(in[0], in[1]); }, g);
  });
  add("scale", [](Rng& g) {
    return unary_case({randn(3, 4, g)}, 3, 4, [](ad::Tape&, Inputs in) { return ad::scale(in[0], -1.7); }, g);
  });
  add("matmul", [](Rng& g) {
    return unary_case({randn(3, 5, g), randn(5, 2, g)}, 3, 2, [](ad::Tape&, Inputs in) { return ad::matmul(in[0], in[1]); }, g);
  });
  add("matmul_nt", [](Rng& g) {
    return unary_case({randn(3, 5, g), randn(4, 5, g)}, 3, 4, [](ad::Tape&, Inputs in) { return ad::matmul_nt(in[0], in[1]); }, g);
  });
  add("add_row", [](Rng& g) {
    return unary_case({randn(3, 4, g), randn(1, 4, g)}, 3, 4, [](ad::Tape&, Inputs in) { return ad::add_row(in[0], in[1]); }, g);
  });
  add("relu", [](Rng& g) {
    return unary_case({randn(4, 5, g)}, 4, 5, [](ad::Tape&, Inputs in) { return ad::relu(in[0]); }, g);
  });
  add("sigmoid", [](Rng& g) {
    return unary_case({randn(4, 5, g)}, 4, 5, [](ad::Tape&, Inputs in) { return ad::sigmoid(in[0]); }, g);
  });
  add("clamp", [](Rng& g) {
    return unary_case({uniform(4, 5, -1, 1, g)}, 4, 5, [](ad::Tape&, Inputs in) { return ad::clamp(in[0], -0.5, 0.5); }, g);
  });
  add("concat_cols", [](Rng& g) {
    return unary_case({randn(3, 2, g), randn(3, 4, g)}, 3, 6, [](ad::Tape&, Inputs in) { return ad::concat_cols(in); }, g);
  });
  add("concat_rows", [](Rng& g) {
    return unary_case({randn(2, 3, g), randn(4, 3, g)}, 6, 3, [](ad::Tape&, Inputs in) { return ad::concat_rows(in); }, g);
  });
  add("slice_rows", [](Rng& g) {
    return unary_case({randn(5, 3, g)}, 2, 3, [](ad::Tape&, Inputs in) { return ad::slice_rows(in[0], 1, 2); }, g);
  });
  add("slice_cols", [](Rng& g) {
    return unary_case({randn(3, 5, g)}, 3, 3, [](ad::Tape&, Inputs in) { return ad::slice_cols(in[0], 2, 3); }, g);
  });
  add("gather_rows", [](Rng& g) {
    return unary_case({randn(4, 3, g)}, 5, 3, [](ad::Tape&, Inputs in) {
      static const int idx[] = {2, 0, 2, 3, 2};
      return ad::gather_rows(in[0], idx);
    }, g);
  });
  add("sum", [](Rng& g) {
    return unary_case({randn(3, 4, g)}, 1, 1, [](ad::Tape&, Inputs in) { return ad::sum(in[0]); }, g);
  });
  add("mean", [](Rng& g) {
    return unary_case({randn(3, 4, g)}, 1, 1, [](ad::Tape&, Inputs in) { return ad::mean(in[0]); }, g);
  });
  add("layer_norm", [](Rng& g) {
    return unary_case({randn(4, 6, g), randn(1, 6, g), randn(1, 6, g)}, 4, 6,
                      [](ad::Tape&, Inputs in) { return ad::layer_norm(in[0], in[1], in[2]); }, g);
  });
  add("attention", [](Rng& g) {
    return unary_case({randn(3, 8, g), randn(5, 8, g), randn(5, 8, g)}, 3, 8,
                      [](ad::Tape&, Inputs in) { return ad::attention(in[0], in[1], in[2], 2); }, g);
  });
  add("attention_masked", [](Rng& g) {
    Matrix mask = Matrix::Zero(3, 5);
    mask(0, 1) = mask(0, 4) = mask(2, 0) = -std::numeric_limits<Real>::infinity();
    mask(1, 2) = -0.7;
    return unary_case({randn(3, 8, g), randn(5, 8, g), randn(5, 8, g)}, 3, 8,
                      [mask](ad::Tape&, Inputs in) { return ad::attention(in[0], in[1], in[2], 2, &mask); }, g);
  });
  add("sparse_attention", [](Rng& g) {
    const auto nb = random_neighbors(4, 6, g);
    return unary_case({randn(4, 8, g), randn(6, 8, g), randn(6, 8, g)}, 4, 8,
                      [nb](ad::Tape&, Inputs in) { return ad::sparse_attention(in[0], in[1], in[2], 2, nb); }, g);
  });
  add("bce_with_logits", [](Rng& g) {
    Matrix t = uniform(4, 3, 0, 1, g).unaryExpr([](Real v) { return v < 0.4 ? 1.0 : 0.0; });
    Vector mask(4);
    mask << 1, 0, 1, 1;
    return CheckCase{{randn(4, 3, g) * 3.0}, nullptr,
                     [t, mask](ad::Tape&, Inputs in) { return ad::bce_with_logits(in[0], t, mask); }};
  });
  add("smooth_l1", [](Rng& g) {
    const Matrix target = randn(3, 4, g);
    return CheckCase{{randn(3, 4, g) * 1.5}, nullptr,
                     [target](ad::Tape&, Inputs in) { return ad::smooth_l1(in[0], target); }};
  });
  add("refine_box", [](Rng& g) {
    return unary_case({uniform(3, 4, 0.05, 0.95, g), randn(3, 4, g)}, 3, 4,
                      [](ad::Tape&, Inputs in) { return ad::refine_box(in[0], in[1]); }, g);
  });

  add("linear", [](Rng& g) {
    auto store = std::make_shared<ParameterStore>();
    const Linear lin = Linear::create(*store, "lin", 5, 3, g);
    return layer_case(store, {randn(4, 5, g)}, 4, 3, [lin](ad::Tape& t, Inputs in) { return lin(t, in[0]); }, g);
  });
  add("mlp", [](Rng& g) {
    auto store = std::make_shared<ParameterStore>();
    const Mlp mlp = Mlp::create(*store, "mlp", 5, 7, 3, g, Activation::kSigmoid);
    return layer_case(store, {randn(4, 5, g)}, 4, 3, [mlp](ad::Tape& t, Inputs in) { return mlp(t, in[0]); }, g);
  });
  add("multi_head_attention", [](Rng& g) {
    auto store = std::make_shared<ParameterStore>();
    const MultiHeadAttention mha = MultiHeadAttention::create(*store, "mha", 8, 2, g);
    return layer_case(store, {randn(3, 8, g), randn(5, 8, g)}, 3, 8,
                      [mha](ad::Tape& t, Inputs in) { return mha(t, in[0], in[1]); }, g);
  });
  add("scene_graph_matrix", [](Rng& g) {
    const Matrix boxes = random_boxes(3, g);
    return unary_case({randn(3, 8, g), randn(1, 8, g)}, 6, scene_graph_width(8),
                      [boxes](ad::Tape& t, Inputs in) { return build_scene_graph_matrix(t, in[0], in[1], boxes); }, g);
  });
  add("ssga_layer", [](Rng& g) {
    auto store = std::make_shared<ParameterStore>();
    const SsgaLayer layer = SsgaLayer::create(*store, "ssga", 8, 2, g);
    const Matrix boxes = random_boxes(3, g);
    return layer_case(store, {randn(3, 8, g), randn(1, 8, g)}, 3, 8, [layer, boxes](ad::Tape& t, Inputs in) {
      const TokenSet tokens{in[0], in[1]};
      return layer(t, tokens, build_scene_graph_matrix(t, tokens, boxes)).objects;
    }, g);
  });
  add("cross_attention_layer", [](Rng& g) {
    auto store = std::make_shared<ParameterStore>();
    const CrossAttentionLayer layer = CrossAttentionLayer::create(*store, "cross", 8, 2, 12, true, g);
    const Matrix boxes = random_boxes(3, g);
    return layer_case(store, {randn(3, 8, g), randn(1, 8, g), randn(4, 8, g)}, 4, 8,
                      [layer, boxes](ad::Tape& t, Inputs in) {
                        const TokenSet out = layer(t, {in[0], in[1]}, {in[2], 2, 2}, boxes);
                        const ad::Var parts[] = {out.objects, out.predicate};
                        return ad::concat_rows(parts);
                      }, g);
  });
  add("encoder_layer", [](Rng& g) {
    auto store = std::make_shared<ParameterStore>();
    ImageEncoderConfig cfg;
    cfg.dim = 8;
    cfg.heads = 2;
    cfg.ffn_dim = 12;
    const EncoderLayer layer = EncoderLayer::create(*store, "enc", cfg, g);
    return layer_case(store, {randn(4, 8, g)}, 4, 8, [layer](ad::Tape& t, Inputs in) { return layer(t, in[0]); }, g);
  });
  add("sgor_refine", [](Rng& g) {
    auto store = std::make_shared<ParameterStore>();
    const SgorHead head = SgorHead::create(*store, "sgor", 8, 6, Activation::kRelu, BoxUpdate::kLogit, g);
    return layer_case(store, {randn(3, 8, g), random_boxes(3, g)}, 3, 4, [head](ad::Tape& t, Inputs in) {
      return head.refine(t, in[1], head.predict_offset(t, in[0], in[1].value()));
    }, g);
  });
  add("decoder_block", [](Rng& g) {
    auto store = std::make_shared<ParameterStore>();
    SgDecoderConfig cfg;
    cfg.dim = 8;
    cfg.num_queries = 3;
    cfg.blocks = 1;
    cfg.heads = 2;
    cfg.ffn_dim = 12;
    cfg.sgor_hidden = 8;
    const SgDecoder dec = SgDecoder::create(*store, "dec", cfg, g);
    const Matrix w_tokens = randn(4, 8, g);
    const Matrix w_boxes = randn(3, 4, g);
    randomize(*store, g);
    return CheckCase{{randn(3, 8, g), randn(1, 8, g), random_boxes(3, g), randn(4, 8, g)}, store,
                     [dec, w_tokens, w_boxes](ad::Tape& t, Inputs in) {
                       const DecodeResult r = dec.decode(t, {in[3], 2, 2}, {in[0], in[1]}, in[2]);
                       const ad::Var parts[] = {r.final_tokens.objects, r.final_tokens.predicate};
                       return weighted_sum(t, ad::concat_rows(parts), w_tokens) +
                              weighted_sum(t, r.final_boxes, w_boxes);
                     }};
  });
  add("object_head", [](Rng& g) {
    auto store = std::make_shared<ParameterStore>();
    const ObjectHead head = ObjectHead::create(*store, "obj", 8, g);
    return layer_case(store, {randn(3, 8, g), randn(4, 8, g)}, 3, 4,
                      [head](ad::Tape& t, Inputs in) { return head.scores(t, in[0], in[1]); }, g);
  });
  add("relation_head", [](Rng& g) {
    auto store = std::make_shared<ParameterStore>();
    const RelationHead head = RelationHead::create(*store, "rel", 8, g);
    const Matrix boxes = random_boxes(3, g);
    return layer_case(store, {randn(3, 8, g), randn(1, 8, g), randn(3, 8, g)}, 6, 3,
                      [head, boxes](ad::Tape& t, Inputs in) { return head.scores(t, {in[0], in[1]}, boxes, in[2]); }, g);
  });
  add("cross_modal_scores", [](Rng& g) {
    auto store = std::make_shared<ParameterStore>();
    const RelationHead head = RelationHead::create(*store, "rel", 8, g);
    const Matrix boxes = random_boxes(3, g);
    return layer_case(store, {randn(3, 8, g), randn(1, 8, g), randn(4, 8, g), randn(3, 8, g)}, 6, 3,
                      [head, boxes](ad::Tape& t, Inputs in) {
                        return cross_modal_scores(t, head, {in[0], in[1]}, boxes, {2, -1, 0}, in[2], in[3]).scores;
                      }, g);
  });
  add("box_loss", [](Rng& g) {
    const std::vector<BoundingBox> gt = matrix_to_boxes(random_boxes(2, g));
    Assignment a;
    a.pairs = {{0, 1}, {2, 0}};
    a.unmatched_proposals = {1};
    return CheckCase{{random_boxes(3, g), random_boxes(3, g)}, nullptr, [gt, a](ad::Tape&, Inputs in) {
                       return box_loss(in, gt, a, 8.0);
                     }};
  });

  add("full_model", [](Rng& g) {
    ModelConfig cfg;
    cfg.encoder.dim = cfg.decoder.dim = 8;
    cfg.encoder.heads = cfg.decoder.heads = 2;
    cfg.encoder.ffn_dim = cfg.decoder.ffn_dim = 12;
    cfg.encoder.layers = 1;
    cfg.decoder.num_queries = 3;
    cfg.decoder.blocks = 2;
    cfg.decoder.sgor_hidden = 8;
    cfg.text.dim = 6;
    auto model = std::make_shared<SgdnModel>(SgdnModel::create(cfg, g()));
    randomize(model->params(), g, 0.2);
    const std::vector<std::string> objects = {"red circle", "blue square", "green triangle", std::string(kNoObject)};
    const std::vector<std::string> relations = {"left of", "above", std::string(kNoRelation)};
    const CategoryEmbeddings obj = model->text_encoder().encode(objects);
    const CategoryEmbeddings rel = model->text_encoder().encode(relations);
    SampleTargets targets;
    targets.boxes = matrix_to_boxes(random_boxes(2, g));
    targets.classes = {0, 2};
    targets.relations = {{0, 1, 1}};
    LossConfig loss_config;
    loss_config.match.box_scale = 8.0;
    // A 16 x 16 image gives a 2 x 2 patch grid.
    const Matrix patches = uniform(4, 8 * 8 * 3, 0, 1, g);
    // The model lives in the shared store; keep it alive with the case.
    std::shared_ptr<ParameterStore> store(model, &model->params());
    return CheckCase{{patches}, store, [model, obj, rel, targets, loss_config](ad::Tape& t, Inputs in) {
                       const ImageFeatureMap features = model->image_encoder().encode_patches(t, in[0], 2, 2);
                       const ModelOutput out = model->forward(t, features, obj, rel, true);
                       return model->loss(t, out, targets, loss_config).total;
                     }};
  }, true);
  return r;
}

}  // namespace

const std::vector<RegisteredCheck>& grad_check_registry() {
  static const std::vector<RegisteredCheck> registry = build_registry();
  return registry;
}

CheckCase corrupted_case(Rng& rng) {
  const Matrix w = randn(3, 4, rng);
  return {{randn(3, 4, rng)}, nullptr, [w](ad::Tape& t, Inputs in) {
            const ad::Var x = in[0];
            const ad::Var y = t.push(x.value() * 2.0, {x}, [x](ad::Tape& tt, const Matrix& g) {
              tt.accumulate(x, g * 2.2);
            });
            return weighted_sum(t, y, w);
          }};
}

Real relative_error(const Matrix& analytic, const Matrix& numeric) {
  const Real diff = (analytic - numeric).norm();
  return diff / std::max(analytic.norm() + numeric.norm(), kRelativeErrorFloor);
}

Real max_relative_error(const CheckCase& c, Rng& rng, const GradCheckOptions& options) {
  static const ParameterStore kEmptyStore;
  const ParameterStore& store = c.params ? *c.params : kEmptyStore;
  std::vector<Matrix> inputs = c.inputs;
  std::vector<Matrix> recorded;

  auto evaluate = [&](bool record, std::vector<Matrix>* input_grads, std::vector<Matrix>* param_grads) {
    ad::Tape tape(store);
    if (record) {
      tape.record_constants(&recorded);
    } else {
      tape.replay_constants(&recorded);
    }
    std::vector<ad::Var> leaves;
    for (const auto& m : inputs) leaves.push_back(tape.leaf(m));
    const ad::Var loss = c.loss(tape, leaves);
    if (loss.rows() != 1 || loss.cols() != 1) throw DimensionMismatch("check case must return a scalar");
    const Real value = loss.value()(0, 0);
    if (input_grads) {
      tape.backward(loss);
      for (const auto& leaf : leaves) input_grads->push_back(tape.grad(leaf));
      *param_grads = store.zero_grads();
      tape.collect_param_grads(*param_grads);
    }
    return value;
  };

  std::vector<Matrix> input_grads, param_grads;
  evaluate(true, &input_grads, &param_grads);

  // Each target is one tensor: an input or a parameter.
  struct Target {
    Matrix* value;
    const Matrix* analytic;
  };
  std::vector<Target> targets;
  for (std::size_t i = 0; i < inputs.size(); ++i) targets.push_back({&inputs[i], &input_grads[i]});
  auto& mutable_store = const_cast<ParameterStore&>(store);
  for (Index p = 0; p < store.size(); ++p) targets.push_back({&mutable_store.value(static_cast<int>(p)), &param_grads[p]});

  Real worst = 0.0;
  for (const Target& target : targets) {
    const Index size = target.value->size();
    if (size == 0) continue;
    std::vector<Index> entries(static_cast<std::size_t>(size));
    std::iota(entries.begin(), entries.end(), 0);
    if (size > options.max_entries_per_tensor) {
      std::shuffle(entries.begin(), entries.end(), rng);
      entries.resize(options.max_entries_per_tensor);
    }
    Vector analytic(static_cast<Index>(entries.size())), numeric(static_cast<Index>(entries.size()));
    for (std::size_t e = 0; e < entries.size(); ++e) {
      Real& x = target.value->data()[entries[e]];
      const Real saved = x;
      x = saved + options.epsilon;
      const Real plus = evaluate(false, nullptr, nullptr);
      x = saved - options.epsilon;
      const Real minus = evaluate(false, nullptr, nullptr);
      x = saved;
      numeric(static_cast<Index>(e)) = (plus - minus) / (2 * options.epsilon);
      analytic(static_cast<Index>(e)) = target.analytic->data()[entries[e]];
    }
    worst = std::max(worst, relative_error(analytic, numeric));
  }
  return worst;
}

GradCheckReport gradient_check(std::string_view label, const CaseBuilder& build, int trials, Real tolerance,
                               std::uint64_t seed, const GradCheckOptions& options) {
  Rng rng(seed);
  GradCheckReport report;
  report.op = std::string(label);
  report.trials = trials;
  report.tolerance = tolerance;
  for (int t = 0; t < trials; ++t) {
    const CheckCase c = build(rng);
    report.max_rel_error = std::max(report.max_rel_error, max_relative_error(c, rng, options));
  }
  report.passed = report.max_rel_error <= tolerance;
  if (!report.passed) {
    throw CheckFailed("gradient check failed for " + report.op + ": relative error " +
                      std::to_string(report.max_rel_error) + " > " + std::to_string(tolerance));
  }
  return report;
}

GradCheckReport gradient_check(std::string_view op_id, int trials, Real tolerance, std::uint64_t seed,
                               const GradCheckOptions& options) {
  for (const auto& entry : grad_check_registry()) {
    if (entry.id == op_id) return gradient_check(op_id, entry.build, trials, tolerance, seed, options);
  }
  throw ConfigInvalid("no registered gradient check named " + std::string(op_id));
}

}  // namespace sgdn
