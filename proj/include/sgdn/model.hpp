#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sgdn/data_synth.hpp"
#include "sgdn/dataset_io.hpp"
#include "sgdn/image_encoder.hpp"
#include "sgdn/matching.hpp"
#include "sgdn/sg_decoder.hpp"
#include "sgdn/text_encoder.hpp"

namespace sgdn {

struct ModelConfig {
  ImageEncoderConfig encoder;
  SgDecoderConfig decoder;
  TextEncoderConfig text;

  Index dim() const { return decoder.dim; }
  // Throws ConfigInvalid.
  void validate() const;
};

struct ModelOutput {
  DecodeResult decoded;
  ad::Var object_scores;        // S^o, N x (C+1)
  ad::Var relation_scores;      // S^p, N(N-1) x (M+1); invalid when relations were skipped
  ad::Var object_embeddings;    // projected F^o
  ad::Var relation_embeddings;  // projected F^p
};

struct SampleTargets {
  std::vector<BoundingBox> boxes;
  std::vector<int> classes;  // column in the object vocabulary
  std::vector<GtRelation> relations;
};

// Throws UnknownCategory when a GT label is missing from a vocabulary.
SampleTargets make_targets(const GroundingSample& sample, const std::vector<std::string>& object_vocab,
                           const std::vector<std::string>& relation_vocab);

struct LossConfig {
  LossLambdas lambdas;
  MatchCostWeights match;
  bool per_block_matching = false;

  bool relations_enabled() const { return lambdas.relation != 0.0 || lambdas.cross_modal != 0.0; }
};

struct TrainingLoss {
  ad::Var total;
  LossBreakdown parts;
  Assignment assignment;
};

class SgdnModel {
 public:
  static SgdnModel create(const ModelConfig& config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  ParameterStore& params() { return params_; }
  const ParameterStore& params() const { return params_; }
  const TextEncoder& text_encoder() const { return text_encoder_; }
  const ImageEncoder& image_encoder() const { return image_encoder_; }
  const SgDecoder& decoder() const { return decoder_; }
  const ObjectHead& object_head() const { return object_head_; }
  const RelationHead& relation_head() const { return relation_head_; }
  const TextProjection& text_projection() const { return text_proj_; }

  // Parameters held fixed during fixed-set training: the predicate token and
  // the relation head.
  std::vector<int> relation_parameter_ids() const;

  ModelOutput forward(ad::Tape& tape, const Image& image, const CategoryEmbeddings& objects,
                      const CategoryEmbeddings& relations, bool with_relations = true,
                      SsgaMode mode = SsgaMode::kSparse) const;
  ModelOutput forward(ad::Tape& tape, const ImageFeatureMap& features, const CategoryEmbeddings& objects,
                      const CategoryEmbeddings& relations, bool with_relations = true,
                      SsgaMode mode = SsgaMode::kSparse) const;

  TrainingLoss loss(ad::Tape& tape, const ModelOutput& out, const SampleTargets& targets,
                    const LossConfig& config) const;

 private:
  ModelConfig config_;
  ParameterStore params_;
  TextEncoder text_encoder_;
  ImageEncoder image_encoder_;
  SgDecoder decoder_;
  ObjectHead object_head_;
  RelationHead relation_head_;
  TextProjection text_proj_;
};

struct InferenceOptions {
  bool use_prompt = false;
  Real score_threshold = 0.0;
};

// Row-wise argmax over S^o; proposals whose argmax is "no object" or whose
// score falls below the threshold are dropped. Triplets are emitted for
// every ordered pair of kept detections whose S^p argmax is a real
// relation, scored by the product of the three logistic scores.
ImagePrediction predict(const SgdnModel& model, const Image& image, const std::vector<std::string>& categories,
                        const std::vector<std::string>& relations, const InferenceOptions& options,
                        const std::string& image_id = "");

// One prediction per sample, image ids from Dataset::image_id.
std::vector<ImagePrediction> predict_samples(const SgdnModel& model, const std::vector<GroundingSample>& samples,
                                             const std::vector<std::string>& categories,
                                             const std::vector<std::string>& relations,
                                             const InferenceOptions& options);

// Appends the sentinel when absent.
std::vector<std::string> with_sentinel(std::vector<std::string> labels, std::string_view sentinel);

}  // namespace sgdn
