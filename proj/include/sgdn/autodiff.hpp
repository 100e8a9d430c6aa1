#pragma once

// Tape-based reverse-mode differentiation over dense Eigen matrices.
//
// Every value on the tape is a matrix. Scalars are 1x1 matrices. A Tape is
// single-use: build the graph with the free functions below, call
// backward() once on a 1x1 root, then read gradients.

#include <deque>
#include <functional>
#include <span>
#include <unordered_map>
#include <vector>

#include "sgdn/types.hpp"

namespace sgdn {

class ParameterStore;

namespace ad {

class Tape;

class Var {
 public:
  Var() = default;

  const Matrix& value() const;
  Index rows() const { return value().rows(); }
  Index cols() const { return value().cols(); }
  bool requires_grad() const;
  Tape* tape() const { return tape_; }
  int id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  int id_ = -1;
};

// Receives the gradient of the node's output and pushes contributions to its
// inputs through Tape::accumulate.
using BackwardFn = std::function<void(Tape&, const Matrix& grad_out)>;

class Tape {
 public:
  Tape() = default;
  explicit Tape(const ParameterStore& params) : params_(&params) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value);

  // Finite-difference support. While recording, every constant() value is
  // appended to the sink; while replaying, constant() returns the stored
  // values in order instead, so stop-gradient inputs stay at the point they
  // had in the recorded pass.
  void record_constants(std::vector<Matrix>* sink) { record_ = sink; }
  void replay_constants(const std::vector<Matrix>* source) {
    replay_ = source;
    replay_pos_ = 0;
  }
  Var leaf(Matrix value);
  // One node per parameter per tape; repeated calls return the same Var.
  Var param(int param_id);

  Var push(Matrix value, std::initializer_list<Var> inputs, BackwardFn fn);
  Var push(Matrix value, std::span<const Var> inputs, BackwardFn fn);

  void accumulate(const Var& v, const Matrix& g);
  template <typename Derived>
  void accumulate(const Var& v, const Eigen::MatrixBase<Derived>& g) {
    accumulate(v, Matrix(g));
  }

  void backward(const Var& root);

  // Zero matrix when the node received no gradient.
  Matrix grad(const Var& v) const;
  bool has_grad(const Var& v) const;

  // Adds every parameter gradient into grads[param_id]; grads must be shaped
  // like the store (see ParameterStore::zero_grads()).
  void collect_param_grads(std::vector<Matrix>& grads) const;

  const Matrix& value(int id) const { return nodes_[id].value; }
  bool requires_grad(int id) const { return nodes_[id].requires_grad; }
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    bool grad_set = false;
    int param_id = -1;
    BackwardFn backward;
  };

  Var add_node(Node node);

  const ParameterStore* params_ = nullptr;
  std::deque<Node> nodes_;
  std::unordered_map<int, int> param_nodes_;
  std::vector<Matrix>* record_ = nullptr;
  const std::vector<Matrix>* replay_ = nullptr;
  std::size_t replay_pos_ = 0;
};

// ---- elementwise and linear algebra -------------------------------------

Var operator+(const Var& a, const Var& b);
Var operator-(const Var& a, const Var& b);
Var cmul(const Var& a, const Var& b);
Var scale(const Var& a, Real s);
Var matmul(const Var& a, const Var& b);
// a * b^T
Var matmul_nt(const Var& a, const Var& b);
// Adds a 1xC row to every row of a.
Var add_row(const Var& a, const Var& row);
Var relu(const Var& a);
Var sigmoid(const Var& a);
// Gradient passes only where lo < a < hi.
Var clamp(const Var& a, Real lo, Real hi);

// ---- structural ----------------------------------------------------------

Var concat_cols(std::span<const Var> parts);
Var concat_rows(std::span<const Var> parts);
Var slice_rows(const Var& a, Index start, Index count);
Var slice_cols(const Var& a, Index start, Index count);
// out.row(r) = a.row(index[r]); backward scatter-adds.
Var gather_rows(const Var& a, std::span<const int> index);
Var detach(const Var& a);

// ---- reductions ----------------------------------------------------------

Var sum(const Var& a);
Var mean(const Var& a);

// ---- fused layers --------------------------------------------------------

// Row-wise layer normalization with learned gamma/beta (1xD rows).
Var layer_norm(const Var& x, const Var& gamma, const Var& beta, Real eps = 1e-5);

// Scaled dot-product attention split over `heads` equal column blocks.
// q: Nq x D, k/v: Nk x D. additive_mask, when non-null, is Nq x Nk and is
// added to the logits before the softmax (use -infinity to exclude a key).
Var attention(const Var& q, const Var& k, const Var& v, int heads,
              const Matrix* additive_mask = nullptr);

// Attention where query row n only sees key rows neighbors[n]. A query with
// no neighbors produces a zero output row.
Var sparse_attention(const Var& q, const Var& k, const Var& v, int heads,
                     const std::vector<std::vector<int>>& neighbors);

// Mean over unmasked elements of the logistic binary cross-entropy, using
// the stable form max(s,0) - s*t + log(1 + exp(-|s|)). row_mask has one
// entry per row of s; zero rows are excluded. Returns 0 when nothing is
// unmasked.
Var bce_with_logits(const Var& s, const Matrix& targets, const Vector& row_mask);

// Sum over all elements of smooth-L1(a - target).
Var smooth_l1(const Var& a, const Matrix& target);

// sigmoid(logit(clamp(b, lo, 1 - lo)) + delta), element-wise, with the
// logit argument capped at +-30 so the result stays strictly inside (0, 1).
Var refine_box(const Var& boxes, const Var& delta, Real lo = 1e-4);

}  // namespace ad
}  // namespace sgdn
