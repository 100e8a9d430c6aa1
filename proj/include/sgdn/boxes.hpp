#pragma once

// Normalized (cx, cy, w, h) boxes and the geometry shared by the loss,
// matching and evaluation code.

#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

#include "sgdn/types.hpp"

namespace sgdn {

template <typename Scalar>
struct BasicBox {
  Scalar cx = 0.5;
  Scalar cy = 0.5;
  Scalar w = 0.0;
  Scalar h = 0.0;

  Scalar x0() const { return cx - w / 2; }
  Scalar y0() const { return cy - h / 2; }
  Scalar x1() const { return cx + w / 2; }
  Scalar y1() const { return cy + h / 2; }
  Scalar area() const { return w * h; }

  bool valid() const {
    auto in01 = [](Scalar v) { return v >= Scalar(0) && v <= Scalar(1); };
    return in01(cx) && in01(cy) && in01(w) && in01(h);
  }

  std::array<Scalar, 4> as_array() const { return {cx, cy, w, h}; }
  bool operator==(const BasicBox&) const = default;
};

using BoundingBox = BasicBox<Real>;

template <typename Scalar>
Scalar iou(const BasicBox<Scalar>& a, const BasicBox<Scalar>& b) {
  const Scalar iw = std::max(Scalar(0), std::min(a.x1(), b.x1()) - std::max(a.x0(), b.x0()));
  const Scalar ih = std::max(Scalar(0), std::min(a.y1(), b.y1()) - std::max(a.y0(), b.y0()));
  const Scalar inter = iw * ih;
  const Scalar uni = a.area() + b.area() - inter;
  return uni > Scalar(0) ? inter / uni : Scalar(0);
}

template <typename Scalar>
Scalar smooth_l1(Scalar x) {
  const Scalar ax = std::abs(x);
  return ax < Scalar(1) ? Scalar(0.5) * x * x : ax - Scalar(0.5);
}

template <typename Scalar>
Scalar smooth_l1(const BasicBox<Scalar>& a, const BasicBox<Scalar>& b) {
  return smooth_l1(a.cx - b.cx) + smooth_l1(a.cy - b.cy) + smooth_l1(a.w - b.w) + smooth_l1(a.h - b.h);
}

template <typename Scalar>
Scalar logistic(Scalar x) {
  return Scalar(1) / (Scalar(1) + std::exp(-x));
}

template <typename Scalar>
Scalar logit(Scalar p) {
  return std::log(p / (Scalar(1) - p));
}

// N x 4 matrix, one box per row.
template <typename Scalar>
MatrixX<Scalar> boxes_to_matrix(const std::vector<BasicBox<Scalar>>& boxes) {
  MatrixX<Scalar> m(static_cast<Index>(boxes.size()), 4);
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    m.row(static_cast<Index>(i)) << boxes[i].cx, boxes[i].cy, boxes[i].w, boxes[i].h;
  }
  return m;
}

template <typename Derived>
std::vector<BasicBox<typename Derived::Scalar>> matrix_to_boxes(const Eigen::MatrixBase<Derived>& m) {
  std::vector<BasicBox<typename Derived::Scalar>> out;
  out.reserve(static_cast<std::size_t>(m.rows()));
  for (Index r = 0; r < m.rows(); ++r) out.push_back({m(r, 0), m(r, 1), m(r, 2), m(r, 3)});
  return out;
}

}  // namespace sgdn
