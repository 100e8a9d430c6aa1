#include "sgdn/matching.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "sgdn/errors.hpp"

namespace sgdn {
namespace {

// Shortest augmenting path with potentials; rows <= cols. Returns the
// column assigned to each row.
std::vector<int> solve_rows_le_cols(const Matrix& a) {
  const int n = static_cast<int>(a.rows());
  const int m = static_cast<int>(a.cols());
  const Real inf = std::numeric_limits<Real>::infinity();
  std::vector<Real> u(n + 1, 0.0), v(m + 1, 0.0);
  std::vector<int> p(m + 1, 0), way(m + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<Real> minv(m + 1, inf);
    std::vector<char> used(m + 1, 0);
    do {
      used[j0] = 1;
      const int i0 = p[j0];
      Real delta = inf;
      int j1 = 0;
      for (int j = 1; j <= m; ++j) {
        if (used[j]) continue;
        const Real cur = a(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= m; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int> row_to_col(n, -1);
  for (int j = 1; j <= m; ++j) {
    if (p[j] != 0) row_to_col[p[j] - 1] = j - 1;
  }
  return row_to_col;
}

// Cost of the best matching that covers min(rows, cols) entries.
Real min_matching_cost(const Matrix& a) {
  if (a.rows() == 0 || a.cols() == 0) return 0.0;
  const bool flip = a.rows() > a.cols();
  const Matrix m = flip ? Matrix(a.transpose()) : a;
  const std::vector<int> col_of = solve_rows_le_cols(m);
  Real total = 0.0;
  for (std::size_t r = 0; r < col_of.size(); ++r) total += m(static_cast<Index>(r), col_of[r]);
  return total;
}

}  // namespace

std::vector<int> Assignment::gt_of_proposal(int num_proposals) const {
  std::vector<int> out(num_proposals, -1);
  for (const auto& [prop, gt] : pairs) out[prop] = gt;
  return out;
}

Assignment hungarian_match(const Matrix& cost) {
  if (!cost.allFinite()) throw NonFiniteCost("matching cost contains NaN or infinity");
  const int n = static_cast<int>(cost.rows());
  const int k = static_cast<int>(cost.cols());
  Assignment out;
  if (n == 0 || k == 0) {
    for (int i = 0; i < n; ++i) out.unmatched_proposals.push_back(i);
    return out;
  }

  // Among optimal assignments pick the lexicographically smallest pair list:
  // walk the proposals in order and give each the smallest GT index that
  // still allows the optimum. That costs O(N*K) extra solves, which is fine
  // for the handful of queries used here.
  const Real optimum = min_matching_cost(cost);
  const Real tol = 1e-9 * (1.0 + std::abs(optimum));
  std::vector<int> rows_left(n);
  for (int i = 0; i < n; ++i) rows_left[i] = i;
  std::vector<int> cols_left(k);
  for (int j = 0; j < k; ++j) cols_left[j] = j;
  Real spent = 0.0;
  for (int i = 0; i < n; ++i) {
    rows_left.erase(rows_left.begin());
    bool matched = false;
    for (std::size_t c = 0; c < cols_left.size() && !matched; ++c) {
      std::vector<int> cols = cols_left;
      cols.erase(cols.begin() + static_cast<std::ptrdiff_t>(c));
      // Every proposal is matched when N <= K, every GT otherwise.
      if (n > k && rows_left.size() < cols.size()) continue;
      const Real total = spent + cost(i, cols_left[c]) + min_matching_cost(cost(rows_left, cols));
      if (total <= optimum + tol) {
        out.pairs.emplace_back(i, cols_left[c]);
        spent += cost(i, cols_left[c]);
        cols_left = std::move(cols);
        matched = true;
      }
    }
    if (!matched) out.unmatched_proposals.push_back(i);
  }
  return out;
}

Matrix matching_cost(const std::vector<BoundingBox>& predicted, const Matrix& object_logits,
                     const std::vector<BoundingBox>& gt_boxes, const std::vector<int>& gt_classes,
                     const MatchCostWeights& weights) {
  if (gt_boxes.size() != gt_classes.size()) throw DimensionMismatch("matching cost: gt boxes vs classes");
  if (object_logits.rows() != static_cast<Index>(predicted.size())) {
    throw DimensionMismatch("matching cost: one logit row per proposal");
  }
  Matrix cost(static_cast<Index>(predicted.size()), static_cast<Index>(gt_boxes.size()));
  for (std::size_t n = 0; n < predicted.size(); ++n) {
    for (std::size_t k = 0; k < gt_boxes.size(); ++k) {
      const Real prob = logistic(object_logits(static_cast<Index>(n), gt_classes[k]));
      const BoundingBox& p = predicted[n];
      const BoundingBox& g = gt_boxes[k];
      const Real u = weights.box_scale;
      const BasicBox<Real> pu{u * p.cx, u * p.cy, u * p.w, u * p.h};
      const BasicBox<Real> gu{u * g.cx, u * g.cy, u * g.w, u * g.h};
      cost(static_cast<Index>(n), static_cast<Index>(k)) = weights.box * smooth_l1(pu, gu) +
                                                           weights.cls * (1.0 - prob) +
                                                           weights.iou * (1.0 - iou(predicted[n], gt_boxes[k]));
    }
  }
  return cost;
}

ad::Var box_loss(std::span<const ad::Var> per_block_boxes, const std::vector<BoundingBox>& gt_boxes,
                 const Assignment& assignment, Real coordinate_scale) {
  if (per_block_boxes.empty()) throw DimensionMismatch("box loss: no blocks");
  ad::Tape& tape = *per_block_boxes[0].tape();
  if (assignment.pairs.empty()) return tape.constant(Matrix::Zero(1, 1));
  std::vector<int> props;
  Matrix target(static_cast<Index>(assignment.pairs.size()), 4);
  for (std::size_t r = 0; r < assignment.pairs.size(); ++r) {
    const auto& [prop, gt] = assignment.pairs[r];
    props.push_back(prop);
    const BoundingBox& b = gt_boxes[gt];
    target.row(static_cast<Index>(r)) << b.cx, b.cy, b.w, b.h;
    target.row(static_cast<Index>(r)) *= coordinate_scale;
  }
  const Real inv = 1.0 / static_cast<Real>(assignment.pairs.size());
  ad::Var total;
  for (const ad::Var& boxes : per_block_boxes) {
    const ad::Var term = ad::scale(
        ad::smooth_l1(ad::scale(ad::gather_rows(boxes, props), coordinate_scale), target), inv);
    total = total.valid() ? total + term : term;
  }
  return total;
}

Matrix object_targets(int num_proposals, int num_columns, const Assignment& assignment,
                      const std::vector<int>& gt_classes) {
  Matrix t = Matrix::Zero(num_proposals, num_columns);
  for (int i = 0; i < num_proposals; ++i) t(i, num_columns - 1) = 1.0;
  for (const auto& [prop, gt] : assignment.pairs) {
    t(prop, num_columns - 1) = 0.0;
    t(prop, gt_classes[gt]) = 1.0;
  }
  return t;
}

RelationTargets relation_targets(int num_proposals, int num_columns, const Assignment& assignment,
                                 const std::vector<GtRelation>& gt_relations) {
  const int rows = num_proposals * std::max(num_proposals - 1, 0);
  RelationTargets out{Matrix::Zero(rows, num_columns), Vector::Zero(rows), 0};
  const std::vector<int> gt_of = assignment.gt_of_proposal(num_proposals);
  for (int i = 0; i < num_proposals; ++i) {
    for (int j = 0; j < num_proposals; ++j) {
      if (i == j || gt_of[i] < 0 || gt_of[j] < 0) continue;
      const int r = i * (num_proposals - 1) + (j - (j > i ? 1 : 0));
      out.row_mask(r) = 1.0;
      bool positive = false;
      for (const GtRelation& rel : gt_relations) {
        if (rel.subject_gt == gt_of[i] && rel.object_gt == gt_of[j]) {
          out.targets(r, rel.relation) = 1.0;
          positive = true;
        }
      }
      if (positive) {
        ++out.positive_rows;
      } else {
        out.targets(r, num_columns - 1) = 1.0;
      }
    }
  }
  return out;
}

LossBreakdown total_loss(Real l_bb, Real l_ocls, Real l_pcls, Real l_cml, const LossLambdas& lambdas) {
  LossBreakdown b;
  b.l_bb = l_bb;
  b.l_ocls = l_ocls;
  b.l_pcls = l_pcls;
  b.l_cml = l_cml;
  b.lambdas = lambdas;
  b.total = lambdas.box * l_bb + lambdas.object * l_ocls + lambdas.relation * l_pcls + lambdas.cross_modal * l_cml;
  return b;
}

}  // namespace sgdn
