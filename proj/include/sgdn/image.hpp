#pragma once

#include <vector>

#include "sgdn/types.hpp"

namespace sgdn {

// H x W x 3, channel-interleaved, values in [0, 1].
struct Image {
  int height = 0;
  int width = 0;
  std::vector<Real> data;

  Image() = default;
  Image(int h, int w, Real fill = 0.0) : height(h), width(w), data(static_cast<std::size_t>(h) * w * 3, fill) {}

  Real& at(int y, int x, int c) { return data[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
  Real at(int y, int x, int c) const { return data[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
};

}  // namespace sgdn
