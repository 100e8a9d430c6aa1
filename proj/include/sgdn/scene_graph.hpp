#pragma once

// Scene-graph matrix: one row per ordered object pair (i, j), i != j,
// sorted lexicographically, row(i, j) = [o_i, b_i, p, o_j, b_j].

#include <utility>
#include <vector>

#include "sgdn/autodiff.hpp"

namespace sgdn {

struct TokenSet {
  ad::Var objects;    // N x D
  ad::Var predicate;  // 1 x D

  Index count() const { return objects.rows(); }
  Index dim() const { return objects.cols(); }
};

constexpr Index scene_graph_width(Index dim) { return 3 * dim + 8; }

constexpr int scene_graph_row(int i, int j, int n) { return i * (n - 1) + (j - (j > i ? 1 : 0)); }

std::vector<std::pair<int, int>> scene_graph_pairs(int n);

// For each object n, the rows where it is subject or object: all g(n, j)
// followed by all g(j, n), each in increasing j.
std::vector<std::vector<int>> incident_rows(int n);

// boxes is N x 4 and enters as a constant.
ad::Var build_scene_graph_matrix(ad::Tape& tape, const ad::Var& objects, const ad::Var& predicate,
                                 const Matrix& boxes);
inline ad::Var build_scene_graph_matrix(ad::Tape& tape, const TokenSet& tokens, const Matrix& boxes) {
  return build_scene_graph_matrix(tape, tokens.objects, tokens.predicate, boxes);
}

}  // namespace sgdn
