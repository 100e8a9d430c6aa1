#include "sgdn/model.hpp"

#include <algorithm>

#include "sgdn/errors.hpp"

namespace sgdn {

void ModelConfig::validate() const {
  if (encoder.dim != decoder.dim) throw ConfigInvalid("encoder and decoder widths must match");
  if (decoder.dim % decoder.heads != 0 || encoder.dim % encoder.heads != 0) {
    throw ConfigInvalid("model width must be divisible by the head count");
  }
  if (encoder.patch <= 0) throw ConfigInvalid("patch size must be positive");
  if (text.dim <= 0) throw ConfigInvalid("text width must be positive");
  if (decoder.num_queries < 1 || decoder.blocks < 1) throw ConfigInvalid("need >= 1 query and >= 1 block");
}

SampleTargets make_targets(const GroundingSample& sample, const std::vector<std::string>& object_vocab,
                           const std::vector<std::string>& relation_vocab) {
  auto index_of = [](const std::vector<std::string>& vocab, const std::string& label) {
    const auto it = std::find(vocab.begin(), vocab.end(), label);
    if (it == vocab.end()) throw UnknownCategory("label not in vocabulary: " + label);
    return static_cast<int>(it - vocab.begin());
  };
  SampleTargets t;
  t.boxes = sample.gt_boxes;
  for (const auto& c : sample.gt_categories) t.classes.push_back(index_of(object_vocab, c));
  for (const auto& tr : sample.gt_triplets) {
    const auto it = std::find(relation_vocab.begin(), relation_vocab.end(), tr.predicate);
    if (it == relation_vocab.end()) continue;
    t.relations.push_back({tr.subject, static_cast<int>(it - relation_vocab.begin()), tr.object});
  }
  return t;
}

SgdnModel SgdnModel::create(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  SgdnModel m;
  m.config_ = config;
  m.text_encoder_ = TextEncoder(config.text);
  Rng rng(seed);
  m.image_encoder_ = ImageEncoder::create(m.params_, "encoder", config.encoder, rng);
  m.decoder_ = SgDecoder::create(m.params_, "decoder", config.decoder, rng);
  m.object_head_ = ObjectHead::create(m.params_, "object_head", config.dim(), rng);
  m.relation_head_ = RelationHead::create(m.params_, "relation_head", config.dim(), rng);
  m.text_proj_ = TextProjection::create(m.params_, "text_proj", config.text.dim, config.dim(), rng);
  return m;
}

std::vector<int> SgdnModel::relation_parameter_ids() const {
  const std::string prefixes[] = {"decoder.predicate_token", "relation_head."};
  return params_.with_prefix(prefixes);
}

ModelOutput SgdnModel::forward(ad::Tape& tape, const Image& image, const CategoryEmbeddings& objects,
                               const CategoryEmbeddings& relations, bool with_relations, SsgaMode mode) const {
  return forward(tape, image_encoder_.encode(tape, image), objects, relations, with_relations, mode);
}

ModelOutput SgdnModel::forward(ad::Tape& tape, const ImageFeatureMap& features, const CategoryEmbeddings& objects,
                               const CategoryEmbeddings& relations, bool with_relations, SsgaMode mode) const {
  ModelOutput out;
  out.decoded = decoder_.decode(tape, features, mode);
  out.object_embeddings = text_proj_(tape, objects);
  out.object_scores = object_head_.scores(tape, out.decoded.final_tokens.objects, out.object_embeddings);
  if (with_relations) {
    out.relation_embeddings = text_proj_(tape, relations);
    out.relation_scores = relation_head_.scores(tape, out.decoded.final_tokens, out.decoded.final_boxes.value(),
                                                out.relation_embeddings);
  }
  return out;
}

TrainingLoss SgdnModel::loss(ad::Tape& tape, const ModelOutput& out, const SampleTargets& targets,
                             const LossConfig& config) const {
  const int n = static_cast<int>(out.object_scores.rows());
  const int columns = static_cast<int>(out.object_scores.cols());
  TrainingLoss result;

  const Matrix cost = matching_cost(matrix_to_boxes(out.decoded.final_boxes.value()), out.object_scores.value(),
                                    targets.boxes, targets.classes, config.match);
  result.assignment = hungarian_match(cost);

  std::vector<ad::Var> block_boxes;
  for (const auto& state : out.decoded.per_block) block_boxes.push_back(state.boxes);
  ad::Var l_bb;
  if (!config.per_block_matching) {
    l_bb = box_loss(block_boxes, targets.boxes, result.assignment, config.match.box_scale);
  } else {
    for (const auto& boxes : block_boxes) {
      const Matrix c = matching_cost(matrix_to_boxes(boxes.value()), out.object_scores.value(), targets.boxes,
                                     targets.classes, config.match);
      const ad::Var single[] = {boxes};
      const ad::Var term = box_loss(single, targets.boxes, hungarian_match(c), config.match.box_scale);
      l_bb = l_bb.valid() ? l_bb + term : term;
    }
  }

  const Matrix obj_targets = object_targets(n, columns, result.assignment, targets.classes);
  const ad::Var l_ocls = bce_matrix_loss(out.object_scores, obj_targets, Vector::Ones(n));

  const ad::Var zero = tape.constant(Matrix::Zero(1, 1));
  ad::Var l_pcls = zero;
  ad::Var l_cml = zero;
  if (config.relations_enabled() && out.relation_scores.valid() && !targets.relations.empty() && n >= 2) {
    const int rel_columns = static_cast<int>(out.relation_scores.cols());
    const RelationTargets rel = relation_targets(n, rel_columns, result.assignment, targets.relations);
    if (config.lambdas.relation != 0.0) l_pcls = bce_matrix_loss(out.relation_scores, rel.targets, rel.row_mask);
    if (config.lambdas.cross_modal != 0.0) {
      std::vector<int> proposal_category(n, -1);
      for (const auto& [prop, gt] : result.assignment.pairs) proposal_category[prop] = targets.classes[gt];
      const CrossModalScores cm =
          cross_modal_scores(tape, relation_head_, out.decoded.final_tokens, out.decoded.final_boxes.value(),
                             proposal_category, out.object_embeddings, out.relation_embeddings);
      l_cml = bce_matrix_loss(cm.scores, rel.targets, cm.row_mask);
    }
  }

  const LossLambdas& lam = config.lambdas;
  result.total = ad::scale(l_bb, lam.box) + ad::scale(l_ocls, lam.object) + ad::scale(l_pcls, lam.relation) +
                 ad::scale(l_cml, lam.cross_modal);
  result.parts = total_loss(l_bb.value()(0, 0), l_ocls.value()(0, 0), l_pcls.value()(0, 0), l_cml.value()(0, 0), lam);
  return result;
}

std::vector<std::string> with_sentinel(std::vector<std::string> labels, std::string_view sentinel) {
  labels.erase(std::remove(labels.begin(), labels.end(), std::string(sentinel)), labels.end());
  labels.emplace_back(sentinel);
  return labels;
}

ImagePrediction predict(const SgdnModel& model, const Image& image, const std::vector<std::string>& categories,
                        const std::vector<std::string>& relations, const InferenceOptions& options,
                        const std::string& image_id) {
  const auto obj_labels = with_sentinel(categories, kNoObject);
  const auto rel_labels = with_sentinel(relations, kNoRelation);
  const CategoryEmbeddings obj = model.text_encoder().encode(obj_labels, options.use_prompt);
  const CategoryEmbeddings rel = model.text_encoder().encode(rel_labels, options.use_prompt);
  ad::Tape tape(model.params());
  const ModelOutput out = model.forward(tape, image, obj, rel, true);

  const Matrix& so = out.object_scores.value();
  const Matrix& sp = out.relation_scores.value();
  const auto boxes = matrix_to_boxes(out.decoded.final_boxes.value());
  const int n = static_cast<int>(so.rows());
  const Index no_object = so.cols() - 1;
  const Index no_relation = sp.cols() - 1;

  ImagePrediction pred;
  pred.image_id = image_id;
  std::vector<int> kept_index(n, -1);
  for (int i = 0; i < n; ++i) {
    Index best = 0;
    so.row(i).maxCoeff(&best);
    if (best == no_object) continue;
    const Real score = logistic(so(i, best));
    if (score < options.score_threshold) continue;
    kept_index[i] = static_cast<int>(pred.boxes.size());
    pred.boxes.push_back(boxes[i]);
    pred.categories.push_back(obj_labels[best]);
    pred.scores.push_back(score);
  }
  for (const auto& [i, j] : scene_graph_pairs(n)) {
    if (kept_index[i] < 0 || kept_index[j] < 0) continue;
    const int r = scene_graph_row(i, j, n);
    Index best = 0;
    sp.row(r).maxCoeff(&best);
    if (best == no_relation) continue;
    const Real score = logistic(sp(r, best)) * pred.scores[kept_index[i]] * pred.scores[kept_index[j]];
    pred.triplets.push_back({kept_index[i], rel_labels[best], kept_index[j], score});
  }
  return pred;
}

std::vector<ImagePrediction> predict_samples(const SgdnModel& model, const std::vector<GroundingSample>& samples,
                                             const std::vector<std::string>& categories,
                                             const std::vector<std::string>& relations,
                                             const InferenceOptions& options) {
  std::vector<ImagePrediction> out;
  out.reserve(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    out.push_back(predict(model, samples[i].image, categories, relations, options, Dataset::image_id(i)));
  }
  return out;
}

}  // namespace sgdn
