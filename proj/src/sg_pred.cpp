#include "sgdn/sg_pred.hpp"

#include "sgdn/errors.hpp"

namespace sgdn {

BoxUpdate parse_box_update(std::string_view name) {
  if (name == "logit") return BoxUpdate::kLogit;
  if (name == "literal") return BoxUpdate::kLiteral;
  throw ConfigInvalid("unknown box update: " + std::string(name));
}

BoxInit BoxInit::create(ParameterStore& store, const std::string& name, Index dim, Rng& rng) {
  return {Linear::create(store, name, dim, 4, rng)};
}

ad::Var BoxInit::operator()(ad::Tape& tape, const ad::Var& object_queries) const {
  return ad::sigmoid(proj(tape, object_queries));
}

SgorHead SgorHead::create(ParameterStore& store, const std::string& name, Index dim, Index hidden, Activation act,
                          BoxUpdate update, Rng& rng) {
  SgorHead head;
  head.mlp = Mlp::create(store, name, dim + 4, hidden, 4, rng, act);
  store.value(head.mlp.second.weight).setZero();
  head.update = update;
  return head;
}

ad::Var SgorHead::predict_offset(ad::Tape& tape, const ad::Var& objects, const Matrix& boxes) const {
  if (boxes.rows() != objects.rows() || boxes.cols() != 4) throw DimensionMismatch("sgor: one box per object");
  const ad::Var parts[] = {objects, tape.constant(boxes)};
  return mlp(tape, ad::concat_cols(parts));
}

ad::Var SgorHead::refine(ad::Tape& /*tape*/, const ad::Var& boxes, const ad::Var& offsets) const {
  if (update == BoxUpdate::kLogit) return ad::refine_box(boxes, offsets, kBoxClamp);
  return ad::clamp(boxes + ad::sigmoid(offsets), kBoxClamp, 1.0 - kBoxClamp);
}

TextProjection TextProjection::create(ParameterStore& store, const std::string& name, Index text_dim, Index dim,
                                      Rng& rng) {
  return {Linear::create(store, name, text_dim, dim, rng)};
}

ad::Var TextProjection::operator()(ad::Tape& tape, const CategoryEmbeddings& emb) const {
  if (emb.matrix.cols() != tape.param(proj.weight).rows()) {
    throw DimensionMismatch("text projection: embedding width");
  }
  return proj(tape, tape.constant(emb.matrix));
}

ObjectHead ObjectHead::create(ParameterStore& store, const std::string& name, Index dim, Rng& rng) {
  return {Mlp::create(store, name, dim, dim, dim, rng)};
}

ad::Var ObjectHead::scores(ad::Tape& tape, const ad::Var& objects, const ad::Var& category_embeddings) const {
  if (category_embeddings.cols() != objects.cols()) {
    throw DimensionMismatch("object scores: category embeddings must have width D");
  }
  return ad::matmul_nt(mlp(tape, objects), category_embeddings);
}

RelationHead RelationHead::create(ParameterStore& store, const std::string& name, Index dim, Rng& rng) {
  return {Mlp::create(store, name, scene_graph_width(dim), dim, dim, rng)};
}

ad::Var RelationHead::scores_from_graph(ad::Tape& tape, const ad::Var& graph,
                                        const ad::Var& relation_embeddings) const {
  if (relation_embeddings.cols() * 3 + 8 != graph.cols()) {
    throw DimensionMismatch("relation scores: relation embeddings must have width D");
  }
  if (graph.rows() == 0) {
    return tape.constant(Matrix::Zero(0, relation_embeddings.rows()));
  }
  return ad::matmul_nt(mlp(tape, graph), relation_embeddings);
}

ad::Var RelationHead::scores(ad::Tape& tape, const TokenSet& final_tokens, const Matrix& final_boxes,
                             const ad::Var& relation_embeddings) const {
  return scores_from_graph(tape, build_scene_graph_matrix(tape, final_tokens, final_boxes), relation_embeddings);
}

CrossModalScores cross_modal_scores(ad::Tape& tape, const RelationHead& head, const TokenSet& final_tokens,
                                    const Matrix& final_boxes, const std::vector<int>& proposal_category,
                                    const ad::Var& object_embeddings, const ad::Var& relation_embeddings) {
  const int n = static_cast<int>(final_tokens.count());
  if (static_cast<int>(proposal_category.size()) != n) throw DimensionMismatch("cross-modal: one entry per proposal");
  if (object_embeddings.cols() != final_tokens.dim()) throw DimensionMismatch("cross-modal: embedding width");
  // Row n of `replaced` is F_o[category] for matched proposals, o_n otherwise.
  std::vector<int> index(n);
  for (int i = 0; i < n; ++i) {
    const int c = proposal_category[i];
    if (c >= object_embeddings.rows()) throw DimensionMismatch("cross-modal: category index out of range");
    index[i] = c >= 0 ? n + c : i;
  }
  const ad::Var pool_parts[] = {final_tokens.objects, object_embeddings};
  const ad::Var replaced = ad::gather_rows(ad::concat_rows(pool_parts), index);
  const ad::Var graph = build_scene_graph_matrix(tape, replaced, final_tokens.predicate, final_boxes);

  CrossModalScores out;
  out.scores = head.scores_from_graph(tape, graph, relation_embeddings);
  out.row_mask = Vector::Zero(graph.rows());
  const auto pairs = scene_graph_pairs(n);
  for (std::size_t r = 0; r < pairs.size(); ++r) {
    if (proposal_category[pairs[r].first] >= 0 && proposal_category[pairs[r].second] >= 0) {
      out.row_mask(static_cast<Index>(r)) = 1.0;
    }
  }
  return out;
}

}  // namespace sgdn
