#pragma once

// Independent reference implementations shared by the unit and acceptance
// tests.

#include <algorithm>
#include <limits>
#include <numeric>
#include <utility>
#include <vector>

#include "sgdn/types.hpp"

namespace oracle {

struct BruteAssignment {
  double total = std::numeric_limits<double>::infinity();
  std::vector<std::pair<int, int>> pairs;  // sorted by proposal
};

// Enumerates every injective map of the smaller side into the larger one and
// keeps the cheapest; among equal totals (within tol) the lexicographically
// smallest pair list wins.
inline BruteAssignment brute_force_match(const sgdn::Matrix& cost, double tol = 1e-12) {
  const int n = static_cast<int>(cost.rows());
  const int k = static_cast<int>(cost.cols());
  const bool flip = n > k;
  const int small = flip ? k : n;
  const int large = flip ? n : k;
  std::vector<int> perm(large);
  std::iota(perm.begin(), perm.end(), 0);
  BruteAssignment best;
  do {
    double total = 0.0;
    std::vector<std::pair<int, int>> pairs;
    for (int s = 0; s < small; ++s) {
      const int prop = flip ? perm[s] : s;
      const int gt = flip ? s : perm[s];
      total += cost(prop, gt);
      pairs.emplace_back(prop, gt);
    }
    std::sort(pairs.begin(), pairs.end());
    if (total < best.total - tol || (std::abs(total - best.total) <= tol && pairs < best.pairs)) {
      best.total = total;
      best.pairs = std::move(pairs);
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

}  // namespace oracle
