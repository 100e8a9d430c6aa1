#pragma once

// Bipartite assignment between proposals and ground truth, target
// construction, and the four-term training objective.

#include <string>
#include <utility>
#include <vector>

#include "sgdn/autodiff.hpp"
#include "sgdn/boxes.hpp"

namespace sgdn {

struct Assignment {
  std::vector<std::pair<int, int>> pairs;  // (proposal, gt), sorted by proposal
  std::vector<int> unmatched_proposals;

  // gt index per proposal, -1 when unmatched.
  std::vector<int> gt_of_proposal(int num_proposals) const;
};

// Minimum-total-cost one-to-one assignment of the rows (proposals) to the
// columns (ground truths) of an N x K matrix, min(N, K) pairs. Ties go to
// the lexicographically smallest (proposal, gt) pair list. Throws
// NonFiniteCost.
Assignment hungarian_match(const Matrix& cost);

struct MatchCostWeights {
  Real box = 1.0;
  Real cls = 1.0;
  Real iou = 1.0;
  // Box coordinates are multiplied by this before the smooth-L1 term.
  Real box_scale = 1.0;
};

// cost(n, k) = box * smooth_l1(box_scale * b_n, box_scale * gt_k) + cls * (1 - sigmoid(S^o[n, class_k]))
//            + iou * (1 - IoU(b_n, gt_k))
Matrix matching_cost(const std::vector<BoundingBox>& predicted, const Matrix& object_logits,
                     const std::vector<BoundingBox>& gt_boxes, const std::vector<int>& gt_classes,
                     const MatchCostWeights& weights = {});

// Sum over blocks of the mean (over matched pairs) smooth-L1 box error.
// Coordinates are multiplied by coordinate_scale first, so with a scale of
// the canvas size the error is measured in pixels.
ad::Var box_loss(std::span<const ad::Var> per_block_boxes, const std::vector<BoundingBox>& gt_boxes,
                 const Assignment& assignment, Real coordinate_scale = 1.0);

inline ad::Var bce_matrix_loss(const ad::Var& scores, const Matrix& targets, const Vector& row_mask) {
  return ad::bce_with_logits(scores, targets, row_mask);
}

// Matched proposals get their gt category, the rest "no object" (last column).
Matrix object_targets(int num_proposals, int num_columns, const Assignment& assignment,
                      const std::vector<int>& gt_classes);

struct GtRelation {
  int subject_gt = 0;
  int relation = 0;  // column in the relation vocabulary
  int object_gt = 0;
};

struct RelationTargets {
  Matrix targets;
  Vector row_mask;
  int positive_rows = 0;
};

// Row (i, j) is supervised only if both proposals are matched: the GT
// predicates between their ground truths, otherwise "no relation".
RelationTargets relation_targets(int num_proposals, int num_columns, const Assignment& assignment,
                                 const std::vector<GtRelation>& gt_relations);

struct LossLambdas {
  Real box = 1.5;
  Real object = 1.5;
  Real relation = 1.0;
  Real cross_modal = 1.0;

  bool operator==(const LossLambdas&) const = default;
};

struct LossBreakdown {
  Real l_bb = 0.0;
  Real l_ocls = 0.0;
  Real l_pcls = 0.0;
  Real l_cml = 0.0;
  Real total = 0.0;
  LossLambdas lambdas;
};

LossBreakdown total_loss(Real l_bb, Real l_ocls, Real l_pcls, Real l_cml, const LossLambdas& lambdas);

}  // namespace sgdn
