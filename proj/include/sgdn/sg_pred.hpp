#pragma once

// Prediction heads: box initialization, offset regression with iterative
// refinement, and vision-language similarity scoring for objects,
// relations and the cross-modal relation path.

#include <array>
#include <string>
#include <vector>

#include "sgdn/boxes.hpp"
#include "sgdn/nn.hpp"
#include "sgdn/scene_graph.hpp"
#include "sgdn/text_encoder.hpp"

namespace sgdn {

// kLogit: b' = sigmoid(logit(b) + delta). kLiteral: b' = clamp(b + sigmoid(delta)).
enum class BoxUpdate { kLogit, kLiteral };

BoxUpdate parse_box_update(std::string_view name);

inline constexpr Real kBoxClamp = 1e-4;

// Scalar reference for one box.
template <typename Scalar>
BasicBox<Scalar> refine_box(const BasicBox<Scalar>& b, const std::array<Scalar, 4>& delta) {
  auto step = [](Scalar v, Scalar d) {
    const Scalar c = std::clamp(v, Scalar(kBoxClamp), Scalar(1 - kBoxClamp));
    return logistic(std::clamp(logit(c) + d, Scalar(-30), Scalar(30)));
  };
  return {step(b.cx, delta[0]), step(b.cy, delta[1]), step(b.w, delta[2]), step(b.h, delta[3])};
}

struct BoxInit {
  Linear proj;

  static BoxInit create(ParameterStore& store, const std::string& name, Index dim, Rng& rng);
  // N x 4 boxes in [0,1], logistic of a linear map of each query.
  ad::Var operator()(ad::Tape& tape, const ad::Var& object_queries) const;
};

struct SgorHead {
  Mlp mlp;
  BoxUpdate update = BoxUpdate::kLogit;

  // The final layer starts at zero so initial offsets are zero.
  static SgorHead create(ParameterStore& store, const std::string& name, Index dim, Index hidden, Activation act,
                         BoxUpdate update, Rng& rng);
  // MLP([o, b]) -> N x 4 offsets. boxes enter as constants.
  ad::Var predict_offset(ad::Tape& tape, const ad::Var& objects, const Matrix& boxes) const;
  ad::Var refine(ad::Tape& tape, const ad::Var& boxes, const ad::Var& offsets) const;
};

// Linear map applied on top of the frozen text embeddings.
struct TextProjection {
  Linear proj;

  static TextProjection create(ParameterStore& store, const std::string& name, Index text_dim, Index dim,
                               Rng& rng);
  ad::Var operator()(ad::Tape& tape, const CategoryEmbeddings& emb) const;
};

struct ObjectHead {
  Mlp mlp;

  static ObjectHead create(ParameterStore& store, const std::string& name, Index dim, Rng& rng);
  // S^o = MLP(O) F_o^T, N x (C+1) logits.
  ad::Var scores(ad::Tape& tape, const ad::Var& objects, const ad::Var& category_embeddings) const;
};

struct RelationHead {
  Mlp mlp;

  static RelationHead create(ParameterStore& store, const std::string& name, Index dim, Rng& rng);
  // S = MLP(G) F_p^T, rows follow the scene-graph order.
  ad::Var scores_from_graph(ad::Tape& tape, const ad::Var& graph, const ad::Var& relation_embeddings) const;
  ad::Var scores(ad::Tape& tape, const TokenSet& final_tokens, const Matrix& final_boxes,
                 const ad::Var& relation_embeddings) const;
};

struct CrossModalScores {
  ad::Var scores;   // N(N-1) x (M+1)
  Vector row_mask;  // 1 where both endpoints are matched
};

// Replaces every matched object's slot in the scene graph with the
// embedding of its ground-truth category, then scores with the same
// relation head. proposal_category[n] is the category row for proposal n or
// -1 when unmatched.
CrossModalScores cross_modal_scores(ad::Tape& tape, const RelationHead& head, const TokenSet& final_tokens,
                                    const Matrix& final_boxes, const std::vector<int>& proposal_category,
                                    const ad::Var& object_embeddings, const ad::Var& relation_embeddings);

}  // namespace sgdn
