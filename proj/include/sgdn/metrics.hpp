#pragma once

// Detection AP50 over base/novel/all category groups and scene-graph
// detection Recall@K. Predictions and ground truth are paired by position.

#include <string>
#include <utility>
#include <vector>

#include "sgdn/data_synth.hpp"
#include "sgdn/dataset_io.hpp"

namespace sgdn {

struct GroundTruth {
  std::vector<BoundingBox> boxes;
  std::vector<std::string> categories;
  std::vector<Triplet> triplets;
};

GroundTruth ground_truth_of(const GroundingSample& sample);
std::vector<GroundTruth> ground_truth_of(const std::vector<GroundingSample>& samples);

struct CategoryAp {
  std::string category;
  bool novel = false;
  int gt_count = 0;
  int prediction_count = 0;
  Real ap = 0.0;
};

struct MetricsReport {
  Real ap50_novel = 0.0;
  Real ap50_base = 0.0;
  Real ap50_all = 0.0;
  Real recall_at_50 = 0.0;
  Real recall_at_100 = 0.0;
  std::vector<CategoryAp> per_category;

  std::string to_json() const;
  std::string to_table() const;
};

// All-point interpolated area under the precision/recall curve. `hits` holds
// (score, is_true_positive) for every prediction of one category; ties keep
// input order.
Real average_precision(std::vector<std::pair<Real, bool>> hits, int num_gt);

// Group AP is the mean of per-category AP over the categories of the group
// that have at least one ground-truth instance; 0 when there are none.
// Throws UnknownCategory for labels outside the split, DimensionMismatch
// when the list lengths differ.
MetricsReport evaluate_detection(const std::vector<ImagePrediction>& predictions,
                                 const std::vector<GroundTruth>& ground_truth, const SplitConfig& split,
                                 Real iou_threshold = 0.5);

struct SgdetRecall {
  Real at_50 = 0.0;
  Real at_100 = 0.0;
};

// Images without ground-truth triplets are left out of the average.
Real recall_at_k(const std::vector<ImagePrediction>& predictions, const std::vector<GroundTruth>& ground_truth,
                 int k, Real iou_threshold = 0.5);
SgdetRecall evaluate_sgdet(const std::vector<ImagePrediction>& predictions,
                           const std::vector<GroundTruth>& ground_truth, Real iou_threshold = 0.5);

MetricsReport evaluate(const std::vector<ImagePrediction>& predictions, const std::vector<GroundTruth>& ground_truth,
                       const SplitConfig& split, Real iou_threshold = 0.5);

}  // namespace sgdn
