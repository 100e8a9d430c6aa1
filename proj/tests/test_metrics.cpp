#include <doctest.h>

#include "sgdet_cases.hpp"
#include "sgdn/errors.hpp"
#include "sgdn/metrics.hpp"

using namespace sgdn;

namespace {

SplitConfig tiny_split() {
  SplitConfig s;
  s.base_categories = {"red circle", "blue square"};
  s.novel_categories = {"green triangle"};
  s.base_relations = {"left of"};
  return s;
}

ImagePrediction pred(std::vector<BoundingBox> boxes, std::vector<std::string> cats, std::vector<Real> scores) {
  ImagePrediction p;
  p.boxes = std::move(boxes);
  p.categories = std::move(cats);
  p.scores = std::move(scores);
  return p;
}

// All-point interpolated AP from an explicit precision/recall list, written
// out independently of the library: for each recall step, the best
// precision at that recall or beyond.
Real pr_area(const std::vector<Real>& precision, const std::vector<Real>& recall) {
  Real area = 0.0, prev = 0.0;
  for (std::size_t i = 0; i < recall.size(); ++i) {
    Real best = 0.0;
    for (std::size_t j = i; j < recall.size(); ++j) best = std::max(best, precision[j]);
    area += (recall[i] - prev) * best;
    prev = recall[i];
  }
  return area;
}

}  // namespace

TEST_SUITE("metrics") {

TEST_CASE("IoU examples") {
  const BoundingBox a{0.5, 0.5, 0.2, 0.2};
  CHECK(iou(a, a) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(iou(a, BoundingBox{0.1, 0.1, 0.1, 0.1}) == 0.0);
  CHECK(iou(a, BoundingBox{0.6, 0.5, 0.2, 0.2}) == doctest::Approx(0.02 / 0.06));
}

TEST_CASE("single exact prediction") {
  const BoundingBox b{0.5, 0.5, 0.2, 0.2};
  const MetricsReport r =
      evaluate_detection({pred({b}, {"red circle"}, {0.7})}, {GroundTruth{{b}, {"red circle"}, {}}}, tiny_split());
  CHECK(r.ap50_base == 1.0);
  CHECK(r.ap50_all == 1.0);
  CHECK(r.ap50_novel == 0.0);  // no novel ground truth
}

TEST_CASE("three predictions against two ground truths") {
  // Scores 0.9 (hit), 0.8 (miss), 0.7 (hit): precision 1, 1/2, 2/3 at
  // recall 1/2, 1/2, 1.
  const BoundingBox g1{0.2, 0.2, 0.2, 0.2}, g2{0.7, 0.7, 0.2, 0.2};
  const BoundingBox miss{0.45, 0.2, 0.1, 0.1};
  const auto p = pred({g1, miss, g2}, {"red circle", "red circle", "red circle"}, {0.9, 0.8, 0.7});
  const MetricsReport r = evaluate_detection({p}, {GroundTruth{{g1, g2}, {"red circle", "red circle"}, {}}}, tiny_split());
  const Real expected = pr_area({1.0, 0.5, 2.0 / 3.0}, {0.5, 0.5, 1.0});
  CHECK(expected == doctest::Approx(5.0 / 6.0));
  CHECK(r.per_category[0].ap == doctest::Approx(expected).epsilon(1e-12));
  CHECK(average_precision({{0.9, true}, {0.8, false}, {0.7, true}}, 2) == doctest::Approx(5.0 / 6.0));
}

TEST_CASE("duplicate detections count once") {
  const BoundingBox g{0.5, 0.5, 0.2, 0.2};
  const auto p = pred({g, g}, {"red circle", "red circle"}, {0.9, 0.8});
  const MetricsReport r = evaluate_detection({p}, {GroundTruth{{g}, {"red circle"}, {}}}, tiny_split());
  CHECK(r.per_category[0].ap == 1.0);  // the duplicate comes after full recall
  CHECK(average_precision({{0.9, false}, {0.8, true}}, 1) == doctest::Approx(0.5));
}

TEST_CASE("group means cover categories with ground truth") {
  const BoundingBox a{0.2, 0.2, 0.2, 0.2}, b{0.7, 0.7, 0.2, 0.2};
  const GroundTruth gt{{a, b}, {"red circle", "green triangle"}, {}};
  const auto p = pred({a, b}, {"red circle", "blue square"}, {0.9, 0.9});
  const MetricsReport r = evaluate_detection({p}, {gt}, tiny_split());
  CHECK(r.ap50_base == 1.0);  // blue square has no GT and is left out
  CHECK(r.ap50_novel == 0.0);
  CHECK(r.ap50_all == 0.5);
  for (const auto& c : r.per_category) {
    CHECK(c.ap >= 0.0);
    CHECK(c.ap <= 1.0);
  }
}

TEST_CASE("label errors") {
  const BoundingBox a{0.2, 0.2, 0.2, 0.2};
  CHECK_THROWS_AS(evaluate_detection({pred({a}, {"purple hexagon"}, {0.5})}, {GroundTruth{}}, tiny_split()),
                  UnknownCategory);
  CHECK_THROWS_AS(evaluate_detection({}, {GroundTruth{}}, tiny_split()), DimensionMismatch);
}

TEST_CASE("metrics are pure") {
  const BoundingBox g1{0.2, 0.2, 0.2, 0.2}, g2{0.7, 0.7, 0.2, 0.2};
  const auto p = pred({g1, g2}, {"red circle", "green triangle"}, {0.4, 0.6});
  const std::vector<GroundTruth> gt = {GroundTruth{{g1, g2}, {"red circle", "blue square"}, {}}};
  const MetricsReport a = evaluate({p}, gt, tiny_split());
  const MetricsReport b = evaluate({p}, gt, tiny_split());
  CHECK(a.to_json() == b.to_json());
  CHECK(a.to_table() == b.to_table());
}

TEST_CASE("recall: identical predictions") {
  const BoundingBox a{0.2, 0.5, 0.2, 0.2}, b{0.8, 0.5, 0.2, 0.2};
  ImagePrediction p = pred({a, b}, {"red circle", "blue square"}, {0.3, 0.2});
  p.triplets = {{0, "left of", 1, 0.01}};
  const std::vector<GroundTruth> gt = {GroundTruth{{a, b}, {"red circle", "blue square"}, {{0, "left of", 1}}}};
  CHECK(recall_at_k({p}, gt, 50) == 1.0);
  p.triplets.clear();
  CHECK(recall_at_k({p}, gt, 50) == 0.0);
}

TEST_CASE("crafted recall cases") {
  const auto cases = sgdet_cases::load(std::filesystem::path(SGDN_TEST_DATA_DIR) / "sgdet");
  REQUIRE(cases.size() == 5);
  for (const auto& c : cases) {
    CAPTURE(c.name);
    const SgdetRecall r = evaluate_sgdet(c.predictions, c.ground_truth);
    CHECK(r.at_50 == doctest::Approx(c.expected_r50).epsilon(1e-15));
    CHECK(r.at_100 == doctest::Approx(c.expected_r100).epsilon(1e-15));
  }
}

TEST_CASE("triplet pointing at a missing box") {
  ImagePrediction p = pred({{0.5, 0.5, 0.2, 0.2}}, {"red circle"}, {0.9});
  p.triplets = {{0, "left of", 3, 0.5}};
  const std::vector<GroundTruth> gt = {
      GroundTruth{{{0.5, 0.5, 0.2, 0.2}, {0.1, 0.1, 0.1, 0.1}}, {"red circle", "red circle"}, {{0, "left of", 1}}}};
  CHECK_THROWS_AS(recall_at_k({p}, gt, 50), SchemaViolation);
}

}  // TEST_SUITE
