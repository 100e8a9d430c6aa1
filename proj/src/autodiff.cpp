#include "sgdn/autodiff.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <limits>

#include "sgdn/errors.hpp"
#include "sgdn/nn.hpp"

namespace sgdn::ad {

const Matrix& Var::value() const { return tape_->value(id_); }
bool Var::requires_grad() const { return tape_->requires_grad(id_); }

Var Tape::add_node(Node node) {
  nodes_.push_back(std::move(node));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::constant(Matrix value) {
  Node n;
  if (replay_) {
    if (replay_pos_ >= replay_->size()) throw DimensionMismatch("constant replay ran past the recording");
    const Matrix& stored = (*replay_)[replay_pos_++];
    if (stored.rows() != value.rows() || stored.cols() != value.cols()) {
      throw DimensionMismatch("constant replay shape changed");
    }
    value = stored;
  } else if (record_) {
    record_->push_back(value);
  }
  n.value = std::move(value);
  return add_node(std::move(n));
}

Var Tape::leaf(Matrix value) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = true;
  return add_node(std::move(n));
}

Var Tape::param(int param_id) {
  if (params_ == nullptr) throw Error("tape has no parameter store");
  auto it = param_nodes_.find(param_id);
  if (it != param_nodes_.end()) return Var(this, it->second);
  Node n;
  n.value = params_->value(param_id);
  n.requires_grad = true;
  n.param_id = param_id;
  Var v = add_node(std::move(n));
  param_nodes_.emplace(param_id, v.id());
  return v;
}

Var Tape::push(Matrix value, std::initializer_list<Var> inputs, BackwardFn fn) {
  return push(std::move(value), std::span<const Var>(inputs.begin(), inputs.size()),
              std::move(fn));
}

Var Tape::push(Matrix value, std::span<const Var> inputs, BackwardFn fn) {
  Node n;
  n.value = std::move(value);
  for (const Var& in : inputs) {
    assert(in.tape() == this);
    if (nodes_[in.id()].requires_grad) {
      n.requires_grad = true;
      break;
    }
  }
  if (n.requires_grad) n.backward = std::move(fn);
  return add_node(std::move(n));
}

void Tape::accumulate(const Var& v, const Matrix& g) {
  Node& n = nodes_[v.id()];
  if (!n.requires_grad) return;
  if (!n.grad_set) {
    n.grad = g;
    n.grad_set = true;
  } else {
    n.grad += g;
  }
}

void Tape::backward(const Var& root) {
  if (root.rows() != 1 || root.cols() != 1) {
    throw DimensionMismatch("backward() needs a 1x1 root");
  }
  accumulate(root, Matrix::Ones(1, 1));
  for (int i = root.id(); i >= 0; --i) {
    Node& n = nodes_[i];
    if (!n.grad_set || !n.backward) continue;
    // Copy: the callback may append to the deque's tail, never to node i.
    const Matrix g = n.grad;
    n.backward(*this, g);
  }
}

Matrix Tape::grad(const Var& v) const {
  const Node& n = nodes_[v.id()];
  if (!n.grad_set) return Matrix::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

bool Tape::has_grad(const Var& v) const { return nodes_[v.id()].grad_set; }

void Tape::collect_param_grads(std::vector<Matrix>& grads) const {
  for (const auto& [pid, nid] : param_nodes_) {
    const Node& n = nodes_[nid];
    if (n.grad_set) grads[pid] += n.grad;
  }
}

namespace {

Tape& tape_of(const Var& a) { return *a.tape(); }

void check_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DimensionMismatch(std::string(op) + ": shape mismatch");
  }
}

}  // namespace

Var operator+(const Var& a, const Var& b) {
  check_same_shape(a, b, "add");
  return tape_of(a).push(a.value() + b.value(), {a, b},
                         [a, b](Tape& t, const Matrix& g) {
                           t.accumulate(a, g);
                           t.accumulate(b, g);
                         });
}

Var operator-(const Var& a, const Var& b) {
  check_same_shape(a, b, "sub");
  return tape_of(a).push(a.value() - b.value(), {a, b},
                         [a, b](Tape& t, const Matrix& g) {
                           t.accumulate(a, g);
                           t.accumulate(b, Matrix(-g));
                         });
}

Var cmul(const Var& a, const Var& b) {
  check_same_shape(a, b, "cmul");
  return tape_of(a).push(a.value().cwiseProduct(b.value()), {a, b},
                         [a, b](Tape& t, const Matrix& g) {
                           t.accumulate(a, g.cwiseProduct(b.value()));
                           t.accumulate(b, g.cwiseProduct(a.value()));
                         });
}

Var scale(const Var& a, Real s) {
  return tape_of(a).push(a.value() * s, {a},
                         [a, s](Tape& t, const Matrix& g) { t.accumulate(a, g * s); });
}

Var matmul(const Var& a, const Var& b) {
  if (a.cols() != b.rows()) throw DimensionMismatch("matmul: inner dimensions differ");
  return tape_of(a).push(a.value() * b.value(), {a, b},
                         [a, b](Tape& t, const Matrix& g) {
                           if (a.requires_grad()) t.accumulate(a, g * b.value().transpose());
                           if (b.requires_grad()) t.accumulate(b, a.value().transpose() * g);
                         });
}

Var matmul_nt(const Var& a, const Var& b) {
  if (a.cols() != b.cols()) throw DimensionMismatch("matmul_nt: inner dimensions differ");
  return tape_of(a).push(a.value() * b.value().transpose(), {a, b},
                         [a, b](Tape& t, const Matrix& g) {
                           if (a.requires_grad()) t.accumulate(a, g * b.value());
                           if (b.requires_grad()) t.accumulate(b, g.transpose() * a.value());
                         });
}

Var add_row(const Var& a, const Var& row) {
  if (row.rows() != 1 || row.cols() != a.cols()) {
    throw DimensionMismatch("add_row: bias must be 1 x cols");
  }
  Matrix out = a.value().rowwise() + row.value().row(0);
  return tape_of(a).push(std::move(out), {a, row}, [a, row](Tape& t, const Matrix& g) {
    t.accumulate(a, g);
    if (row.requires_grad()) t.accumulate(row, g.colwise().sum());
  });
}

Var relu(const Var& a) {
  Matrix out = a.value().cwiseMax(0.0);
  return tape_of(a).push(std::move(out), {a}, [a](Tape& t, const Matrix& g) {
    t.accumulate(a, (a.value().array() > 0.0).select(g, 0.0));
  });
}

Var sigmoid(const Var& a) {
  Matrix out = a.value().unaryExpr([](Real x) { return 1.0 / (1.0 + std::exp(-x)); });
  Matrix y = out;
  return tape_of(a).push(std::move(out), {a}, [a, y](Tape& t, const Matrix& g) {
    t.accumulate(a, g.array() * y.array() * (1.0 - y.array()));
  });
}

Var clamp(const Var& a, Real lo, Real hi) {
  Matrix out = a.value().cwiseMax(lo).cwiseMin(hi);
  return tape_of(a).push(std::move(out), {a}, [a, lo, hi](Tape& t, const Matrix& g) {
    t.accumulate(a, (a.value().array() > lo && a.value().array() < hi).select(g, 0.0));
  });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw DimensionMismatch("concat_cols: no inputs");
  const Index rows = parts[0].rows();
  Index cols = 0;
  for (const Var& p : parts) {
    if (p.rows() != rows) throw DimensionMismatch("concat_cols: row counts differ");
    cols += p.cols();
  }
  Matrix out(rows, cols);
  Index c = 0;
  for (const Var& p : parts) {
    out.middleCols(c, p.cols()) = p.value();
    c += p.cols();
  }
  std::vector<Var> keep(parts.begin(), parts.end());
  return tape_of(parts[0]).push(std::move(out), parts, [keep](Tape& t, const Matrix& g) {
    Index c = 0;
    for (const Var& p : keep) {
      if (p.requires_grad()) t.accumulate(p, g.middleCols(c, p.cols()));
      c += p.cols();
    }
  });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw DimensionMismatch("concat_rows: no inputs");
  const Index cols = parts[0].cols();
  Index rows = 0;
  for (const Var& p : parts) {
    if (p.cols() != cols) throw DimensionMismatch("concat_rows: column counts differ");
    rows += p.rows();
  }
  Matrix out(rows, cols);
  Index r = 0;
  for (const Var& p : parts) {
    out.middleRows(r, p.rows()) = p.value();
    r += p.rows();
  }
  std::vector<Var> keep(parts.begin(), parts.end());
  return tape_of(parts[0]).push(std::move(out), parts, [keep](Tape& t, const Matrix& g) {
    Index r = 0;
    for (const Var& p : keep) {
      if (p.requires_grad()) t.accumulate(p, g.middleRows(r, p.rows()));
      r += p.rows();
    }
  });
}

Var slice_rows(const Var& a, Index start, Index count) {
  if (start < 0 || count < 0 || start + count > a.rows()) {
    throw DimensionMismatch("slice_rows: out of range");
  }
  return tape_of(a).push(a.value().middleRows(start, count), {a},
                         [a, start, count](Tape& t, const Matrix& g) {
                           Matrix full = Matrix::Zero(a.rows(), a.cols());
                           full.middleRows(start, count) = g;
                           t.accumulate(a, full);
                         });
}

Var slice_cols(const Var& a, Index start, Index count) {
  if (start < 0 || count < 0 || start + count > a.cols()) {
    throw DimensionMismatch("slice_cols: out of range");
  }
  return tape_of(a).push(a.value().middleCols(start, count), {a},
                         [a, start, count](Tape& t, const Matrix& g) {
                           Matrix full = Matrix::Zero(a.rows(), a.cols());
                           full.middleCols(start, count) = g;
                           t.accumulate(a, full);
                         });
}

Var gather_rows(const Var& a, std::span<const int> index) {
  Matrix out(static_cast<Index>(index.size()), a.cols());
  for (std::size_t r = 0; r < index.size(); ++r) {
    if (index[r] < 0 || index[r] >= a.rows()) throw DimensionMismatch("gather_rows: bad index");
    out.row(static_cast<Index>(r)) = a.value().row(index[r]);
  }
  std::vector<int> idx(index.begin(), index.end());
  return tape_of(a).push(std::move(out), {a}, [a, idx](Tape& t, const Matrix& g) {
    Matrix full = Matrix::Zero(a.rows(), a.cols());
    for (std::size_t r = 0; r < idx.size(); ++r) full.row(idx[r]) += g.row(static_cast<Index>(r));
    t.accumulate(a, full);
  });
}

Var detach(const Var& a) { return tape_of(a).constant(a.value()); }

Var sum(const Var& a) {
  Matrix out(1, 1);
  out(0, 0) = a.value().sum();
  return tape_of(a).push(std::move(out), {a}, [a](Tape& t, const Matrix& g) {
    t.accumulate(a, Matrix::Constant(a.rows(), a.cols(), g(0, 0)));
  });
}

Var mean(const Var& a) {
  const Real n = static_cast<Real>(a.value().size());
  Matrix out(1, 1);
  out(0, 0) = n > 0 ? a.value().sum() / n : 0.0;
  return tape_of(a).push(std::move(out), {a}, [a, n](Tape& t, const Matrix& g) {
    if (n > 0) t.accumulate(a, Matrix::Constant(a.rows(), a.cols(), g(0, 0) / n));
  });
}

Var layer_norm(const Var& x, const Var& gamma, const Var& beta, Real eps) {
  const Index rows = x.rows();
  const Index d = x.cols();
  if (gamma.cols() != d || beta.cols() != d) throw DimensionMismatch("layer_norm: width");
  Matrix xhat(rows, d);
  Vector inv_std(rows);
  for (Index r = 0; r < rows; ++r) {
    const Real mu = x.value().row(r).mean();
    const Real var = (x.value().row(r).array() - mu).square().mean();
    inv_std(r) = 1.0 / std::sqrt(var + eps);
    xhat.row(r) = (x.value().row(r).array() - mu) * inv_std(r);
  }
  Matrix out = (xhat.array().rowwise() * gamma.value().row(0).array()).rowwise() +
               beta.value().row(0).array();
  return tape_of(x).push(
      std::move(out), {x, gamma, beta},
      [x, gamma, beta, xhat, inv_std, d](Tape& t, const Matrix& g) {
        if (gamma.requires_grad()) t.accumulate(gamma, g.cwiseProduct(xhat).colwise().sum());
        if (beta.requires_grad()) t.accumulate(beta, g.colwise().sum());
        if (!x.requires_grad()) return;
        Matrix gx(g.rows(), d);
        for (Index r = 0; r < g.rows(); ++r) {
          const Eigen::Array<Real, 1, Eigen::Dynamic> gh =
              g.row(r).array() * gamma.value().row(0).array();
          const Real m1 = gh.mean();
          const Real m2 = (gh * xhat.row(r).array()).mean();
          gx.row(r) = inv_std(r) * (gh - m1 - xhat.row(r).array() * m2);
        }
        t.accumulate(x, gx);
      });
}

namespace {

// Softmax over a row, ignoring -infinity entries. All-masked rows give zeros.
void softmax_row(Eigen::Ref<RowVector, 0, Eigen::InnerStride<>> row) {
  const Real m = row.maxCoeff();
  if (!std::isfinite(m)) {
    row.setZero();
    return;
  }
  row = (row.array() - m).exp();
  row /= row.sum();
}

}  // namespace

Var attention(const Var& q, const Var& k, const Var& v, int heads, const Matrix* additive_mask) {
  const Index nq = q.rows(), nk = k.rows(), d = q.cols();
  if (k.cols() != d || v.cols() != d || v.rows() != nk) throw DimensionMismatch("attention: shapes");
  if (heads <= 0 || d % heads != 0) throw DimensionMismatch("attention: width not divisible by heads");
  if (additive_mask && (additive_mask->rows() != nq || additive_mask->cols() != nk)) {
    throw DimensionMismatch("attention: mask shape");
  }
  const Index dh = d / heads;
  const Real inv_sqrt = 1.0 / std::sqrt(static_cast<Real>(dh));
  std::vector<Matrix> probs(heads);
  Matrix out(nq, d);
  for (int h = 0; h < heads; ++h) {
    Matrix logits = q.value().middleCols(h * dh, dh) * k.value().middleCols(h * dh, dh).transpose();
    logits *= inv_sqrt;
    if (additive_mask) logits += *additive_mask;
    for (Index r = 0; r < nq; ++r) softmax_row(logits.row(r));
    out.middleCols(h * dh, dh) = logits * v.value().middleCols(h * dh, dh);
    probs[h] = std::move(logits);
  }
  return tape_of(q).push(
      std::move(out), {q, k, v},
      [q, k, v, probs, heads, dh, inv_sqrt](Tape& t, const Matrix& g) {
        Matrix gq = Matrix::Zero(q.rows(), q.cols());
        Matrix gk = Matrix::Zero(k.rows(), k.cols());
        Matrix gv = Matrix::Zero(v.rows(), v.cols());
        for (int h = 0; h < heads; ++h) {
          const Matrix& p = probs[h];
          const auto gh = g.middleCols(h * dh, dh);
          gv.middleCols(h * dh, dh) += p.transpose() * gh;
          const Matrix gp = gh * v.value().middleCols(h * dh, dh).transpose();
          // softmax backward: dl = p * (gp - rowsum(gp * p))
          const Vector dot = gp.cwiseProduct(p).rowwise().sum();
          Matrix gl = p.cwiseProduct(gp.colwise() - dot) * inv_sqrt;
          gq.middleCols(h * dh, dh) += gl * k.value().middleCols(h * dh, dh);
          gk.middleCols(h * dh, dh) += gl.transpose() * q.value().middleCols(h * dh, dh);
        }
        t.accumulate(q, gq);
        t.accumulate(k, gk);
        t.accumulate(v, gv);
      });
}

Var sparse_attention(const Var& q, const Var& k, const Var& v, int heads,
                     const std::vector<std::vector<int>>& neighbors) {
  const Index nq = q.rows(), d = q.cols();
  if (k.cols() != d || v.cols() != d || v.rows() != k.rows()) {
    throw DimensionMismatch("sparse_attention: shapes");
  }
  if (static_cast<Index>(neighbors.size()) != nq) throw DimensionMismatch("sparse_attention: neighbor lists");
  if (heads <= 0 || d % heads != 0) throw DimensionMismatch("sparse_attention: heads");
  const Index dh = d / heads;
  const Real inv_sqrt = 1.0 / std::sqrt(static_cast<Real>(dh));
  // probs[n] is heads x |neighbors[n]|
  std::vector<Matrix> probs(nq);
  Matrix out = Matrix::Zero(nq, d);
  for (Index n = 0; n < nq; ++n) {
    const auto& nb = neighbors[n];
    const Index m = static_cast<Index>(nb.size());
    probs[n].resize(heads, m);
    if (m == 0) continue;
    for (int h = 0; h < heads; ++h) {
      RowVector logits(m);
      for (Index j = 0; j < m; ++j) {
        logits(j) = q.value().row(n).segment(h * dh, dh).dot(k.value().row(nb[j]).segment(h * dh, dh)) *
                    inv_sqrt;
      }
      softmax_row(logits);
      probs[n].row(h) = logits;
      for (Index j = 0; j < m; ++j) {
        out.row(n).segment(h * dh, dh) += logits(j) * v.value().row(nb[j]).segment(h * dh, dh);
      }
    }
  }
  return tape_of(q).push(
      std::move(out), {q, k, v},
      [q, k, v, probs, neighbors, heads, dh, inv_sqrt](Tape& t, const Matrix& g) {
        Matrix gq = Matrix::Zero(q.rows(), q.cols());
        Matrix gk = Matrix::Zero(k.rows(), k.cols());
        Matrix gv = Matrix::Zero(v.rows(), v.cols());
        for (Index n = 0; n < q.rows(); ++n) {
          const auto& nb = neighbors[n];
          const Index m = static_cast<Index>(nb.size());
          for (int h = 0; h < heads; ++h) {
            const auto gh = g.row(n).segment(h * dh, dh);
            RowVector gp(m);
            for (Index j = 0; j < m; ++j) {
              gv.row(nb[j]).segment(h * dh, dh) += probs[n](h, j) * gh;
              gp(j) = gh.dot(v.value().row(nb[j]).segment(h * dh, dh));
            }
            const Real dot = gp.dot(probs[n].row(h));
            for (Index j = 0; j < m; ++j) {
              const Real gl = probs[n](h, j) * (gp(j) - dot) * inv_sqrt;
              gq.row(n).segment(h * dh, dh) += gl * k.value().row(nb[j]).segment(h * dh, dh);
              gk.row(nb[j]).segment(h * dh, dh) += gl * q.value().row(n).segment(h * dh, dh);
            }
          }
        }
        t.accumulate(q, gq);
        t.accumulate(k, gk);
        t.accumulate(v, gv);
      });
}

Var bce_with_logits(const Var& s, const Matrix& targets, const Vector& row_mask) {
  if (targets.rows() != s.rows() || targets.cols() != s.cols() || row_mask.size() != s.rows()) {
    throw DimensionMismatch("bce_with_logits: shapes");
  }
  const Matrix& x = s.value();
  Real total = 0.0;
  Real count = 0.0;
  for (Index r = 0; r < x.rows(); ++r) {
    if (row_mask(r) == 0.0) continue;
    for (Index c = 0; c < x.cols(); ++c) {
      const Real z = x(r, c);
      total += std::max(z, 0.0) - z * targets(r, c) + std::log1p(std::exp(-std::abs(z)));
      count += 1.0;
    }
  }
  Matrix out(1, 1);
  out(0, 0) = count > 0 ? total / count : 0.0;
  return tape_of(s).push(std::move(out), {s}, [s, targets, row_mask, count](Tape& t, const Matrix& g) {
    if (count == 0) return;
    const Matrix& x = s.value();
    Matrix gs = Matrix::Zero(x.rows(), x.cols());
    for (Index r = 0; r < x.rows(); ++r) {
      if (row_mask(r) == 0.0) continue;
      for (Index c = 0; c < x.cols(); ++c) {
        const Real sig = 1.0 / (1.0 + std::exp(-x(r, c)));
        gs(r, c) = (sig - targets(r, c)) * g(0, 0) / count;
      }
    }
    t.accumulate(s, gs);
  });
}

Var smooth_l1(const Var& a, const Matrix& target) {
  if (target.rows() != a.rows() || target.cols() != a.cols()) throw DimensionMismatch("smooth_l1: shapes");
  const Matrix diff = a.value() - target;
  Matrix out(1, 1);
  out(0, 0) = diff.unaryExpr([](Real x) { return std::abs(x) < 1.0 ? 0.5 * x * x : std::abs(x) - 0.5; }).sum();
  return tape_of(a).push(std::move(out), {a}, [a, diff](Tape& t, const Matrix& g) {
    t.accumulate(a, diff.unaryExpr([](Real x) {
                       return std::abs(x) < 1.0 ? x : (x > 0 ? 1.0 : -1.0);
                     }) * g(0, 0));
  });
}

Var refine_box(const Var& boxes, const Var& delta, Real lo) {
  if (boxes.rows() != delta.rows() || boxes.cols() != delta.cols()) {
    throw DimensionMismatch("refine_box: shapes");
  }
  const Matrix clamped = boxes.value().cwiseMax(lo).cwiseMin(1.0 - lo);
  const Matrix z = (clamped.array() / (1.0 - clamped.array())).log().matrix() + delta.value();
  // Past |z| = 30 the logistic is within 1e-13 of 0 or 1; capping there
  // keeps the result strictly inside (0, 1) for any finite offset.
  Matrix out = z.unaryExpr([](Real x) { return 1.0 / (1.0 + std::exp(-std::clamp(x, -30.0, 30.0))); });
  const Matrix y = out;
  const Matrix b = boxes.value();
  return tape_of(boxes).push(std::move(out), {boxes, delta}, [boxes, delta, y, z, b, lo](Tape& t, const Matrix& g) {
    Matrix gz = g.array() * y.array() * (1.0 - y.array());
    for (Index i = 0; i < gz.size(); ++i) {
      if (std::abs(z(i)) > 30.0) gz(i) = 0.0;
    }
    t.accumulate(delta, gz);
    if (boxes.requires_grad()) {
      Matrix gb(b.rows(), b.cols());
      for (Index i = 0; i < b.size(); ++i) {
        const Real v = b(i);
        gb(i) = (v > lo && v < 1.0 - lo) ? gz(i) / (v * (1.0 - v)) : 0.0;
      }
      t.accumulate(boxes, gb);
    }
  });
}

}  // namespace sgdn::ad
