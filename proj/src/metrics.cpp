#include "sgdn/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <map>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "sgdn/errors.hpp"

namespace sgdn {

GroundTruth ground_truth_of(const GroundingSample& sample) {
  return {sample.gt_boxes, sample.gt_categories, sample.gt_triplets};
}

std::vector<GroundTruth> ground_truth_of(const std::vector<GroundingSample>& samples) {
  std::vector<GroundTruth> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(ground_truth_of(s));
  return out;
}

Real average_precision(std::vector<std::pair<Real, bool>> hits, int num_gt) {
  if (num_gt <= 0 || hits.empty()) return 0.0;
  std::stable_sort(hits.begin(), hits.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  const std::size_t n = hits.size();
  std::vector<Real> precision(n), recall(n);
  int tp = 0;
  for (std::size_t i = 0; i < n; ++i) {
    tp += hits[i].second ? 1 : 0;
    precision[i] = static_cast<Real>(tp) / static_cast<Real>(i + 1);
    recall[i] = static_cast<Real>(tp) / num_gt;
  }
  for (std::size_t i = n - 1; i > 0; --i) precision[i - 1] = std::max(precision[i - 1], precision[i]);
  Real ap = 0.0;
  Real prev_recall = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    ap += (recall[i] - prev_recall) * precision[i];
    prev_recall = recall[i];
  }
  return ap;
}

namespace {

void check_lengths(std::size_t a, std::size_t b) {
  if (a != b) throw DimensionMismatch("predictions and ground truth cover different image counts");
}

// Score-ordered greedy matching within one image and one category. Returns
// (score, hit) per prediction.
std::vector<std::pair<Real, bool>> match_image(const std::vector<std::pair<Real, BoundingBox>>& preds,
                                               const std::vector<BoundingBox>& gts, Real iou_threshold) {
  std::vector<std::size_t> order(preds.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return preds[a].first > preds[b].first; });
  std::vector<bool> taken(gts.size(), false);
  std::vector<std::pair<Real, bool>> out;
  for (std::size_t idx : order) {
    int best = -1;
    Real best_iou = 0.0;
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (taken[g]) continue;
      const Real v = iou(preds[idx].second, gts[g]);
      if (v >= iou_threshold && (best < 0 || v > best_iou)) {
        best = static_cast<int>(g);
        best_iou = v;
      }
    }
    if (best >= 0) taken[best] = true;
    out.emplace_back(preds[idx].first, best >= 0);
  }
  return out;
}

}  // namespace

MetricsReport evaluate_detection(const std::vector<ImagePrediction>& predictions,
                                 const std::vector<GroundTruth>& ground_truth, const SplitConfig& split,
                                 Real iou_threshold) {
  check_lengths(predictions.size(), ground_truth.size());
  const std::vector<std::string> categories = split.all_categories();
  std::map<std::string, std::size_t> slot;
  for (std::size_t c = 0; c < categories.size(); ++c) slot[categories[c]] = c;
  auto slot_of = [&](const std::string& label) {
    const auto it = slot.find(label);
    if (it == slot.end()) throw UnknownCategory("category not in split: " + label);
    return it->second;
  };

  const std::size_t c_count = categories.size();
  std::vector<std::vector<std::pair<Real, bool>>> hits(c_count);
  std::vector<int> gt_count(c_count, 0);
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const ImagePrediction& p = predictions[i];
    const GroundTruth& g = ground_truth[i];
    if (p.boxes.size() != p.categories.size() || p.boxes.size() != p.scores.size()) {
      throw SchemaViolation("prediction lists differ in length for image " + p.image_id);
    }
    std::vector<std::vector<std::pair<Real, BoundingBox>>> preds_by(c_count);
    std::vector<std::vector<BoundingBox>> gts_by(c_count);
    for (std::size_t k = 0; k < p.boxes.size(); ++k) preds_by[slot_of(p.categories[k])].emplace_back(p.scores[k], p.boxes[k]);
    for (std::size_t k = 0; k < g.boxes.size(); ++k) gts_by[slot_of(g.categories[k])].push_back(g.boxes[k]);
    for (std::size_t c = 0; c < c_count; ++c) {
      gt_count[c] += static_cast<int>(gts_by[c].size());
      if (preds_by[c].empty()) continue;
      const auto matched = match_image(preds_by[c], gts_by[c], iou_threshold);
      hits[c].insert(hits[c].end(), matched.begin(), matched.end());
    }
  }

  MetricsReport report;
  Real sum_all = 0, sum_novel = 0, sum_base = 0;
  int n_all = 0, n_novel = 0, n_base = 0;
  for (std::size_t c = 0; c < c_count; ++c) {
    CategoryAp row;
    row.category = categories[c];
    row.novel = split.is_novel_category(categories[c]);
    row.gt_count = gt_count[c];
    row.prediction_count = static_cast<int>(hits[c].size());
    row.ap = average_precision(hits[c], gt_count[c]);
    if (row.gt_count > 0) {
      sum_all += row.ap;
      ++n_all;
      if (row.novel) {
        sum_novel += row.ap;
        ++n_novel;
      } else {
        sum_base += row.ap;
        ++n_base;
      }
    }
    report.per_category.push_back(row);
  }
  report.ap50_all = n_all ? sum_all / n_all : 0.0;
  report.ap50_novel = n_novel ? sum_novel / n_novel : 0.0;
  report.ap50_base = n_base ? sum_base / n_base : 0.0;
  return report;
}

Real recall_at_k(const std::vector<ImagePrediction>& predictions, const std::vector<GroundTruth>& ground_truth,
                 int k, Real iou_threshold) {
  check_lengths(predictions.size(), ground_truth.size());
  Real total = 0.0;
  int images = 0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const ImagePrediction& p = predictions[i];
    const GroundTruth& g = ground_truth[i];
    if (g.triplets.empty()) continue;
    ++images;
    std::vector<std::size_t> order(p.triplets.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return p.triplets[a].score > p.triplets[b].score; });
    if (order.size() > static_cast<std::size_t>(k)) order.resize(k);

    auto same_object = [&](int pred_index, int gt_index) {
      if (pred_index < 0 || pred_index >= static_cast<int>(p.boxes.size())) {
        throw SchemaViolation("triplet refers to a missing box in image " + p.image_id);
      }
      return p.categories[pred_index] == g.categories[gt_index] &&
             iou(p.boxes[pred_index], g.boxes[gt_index]) >= iou_threshold;
    };
    int recalled = 0;
    for (const Triplet& t : g.triplets) {
      const bool found = std::any_of(order.begin(), order.end(), [&](std::size_t idx) {
        const PredictedTriplet& pt = p.triplets[idx];
        return pt.predicate == t.predicate && same_object(pt.subject, t.subject) && same_object(pt.object, t.object);
      });
      recalled += found ? 1 : 0;
    }
    total += static_cast<Real>(recalled) / static_cast<Real>(g.triplets.size());
  }
  return images ? total / images : 0.0;
}

SgdetRecall evaluate_sgdet(const std::vector<ImagePrediction>& predictions,
                           const std::vector<GroundTruth>& ground_truth, Real iou_threshold) {
  return {recall_at_k(predictions, ground_truth, 50, iou_threshold),
          recall_at_k(predictions, ground_truth, 100, iou_threshold)};
}

MetricsReport evaluate(const std::vector<ImagePrediction>& predictions, const std::vector<GroundTruth>& ground_truth,
                       const SplitConfig& split, Real iou_threshold) {
  MetricsReport report = evaluate_detection(predictions, ground_truth, split, iou_threshold);
  const SgdetRecall r = evaluate_sgdet(predictions, ground_truth, iou_threshold);
  report.recall_at_50 = r.at_50;
  report.recall_at_100 = r.at_100;
  return report;
}

std::string MetricsReport::to_json() const {
  nlohmann::ordered_json j;
  j["ap50_novel"] = ap50_novel;
  j["ap50_base"] = ap50_base;
  j["ap50_all"] = ap50_all;
  j["recall_at_50"] = recall_at_50;
  j["recall_at_100"] = recall_at_100;
  j["per_category"] = nlohmann::ordered_json::array();
  for (const auto& row : per_category) {
    j["per_category"].push_back({{"category", row.category},
                                 {"novel", row.novel},
                                 {"gt_count", row.gt_count},
                                 {"prediction_count", row.prediction_count},
                                 {"ap50", row.ap}});
  }
  return j.dump(2) + "\n";
}

std::string MetricsReport::to_table() const {
  std::ostringstream os;
  char line[160];
  std::snprintf(line, sizeof line, "%-20s %-6s %6s %6s %8s\n", "category", "split", "gt", "preds", "AP50");
  os << line;
  for (const auto& row : per_category) {
    std::snprintf(line, sizeof line, "%-20s %-6s %6d %6d %8.4f\n", row.category.c_str(), row.novel ? "novel" : "base",
                  row.gt_count, row.prediction_count, row.ap);
    os << line;
  }
  std::snprintf(line, sizeof line, "\nAP50 novel %.4f  base %.4f  all %.4f\nR@50 %.4f  R@100 %.4f\n", ap50_novel,
                ap50_base, ap50_all, recall_at_50, recall_at_100);
  os << line;
  return os.str();
}

}  // namespace sgdn
