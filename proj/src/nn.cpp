#include "sgdn/nn.hpp"

#include <cmath>

#include "sgdn/errors.hpp"

namespace sgdn {

int ParameterStore::add(std::string name, Matrix init) {
  if (find(name) >= 0) throw Error("duplicate parameter name: " + name);
  names_.push_back(std::move(name));
  values_.push_back(std::move(init));
  return static_cast<int>(values_.size()) - 1;
}

int ParameterStore::find(std::string_view name) const {
  for (std::size_t i = 0; i < names_.size(); ++i) {
    if (names_[i] == name) return static_cast<int>(i);
  }
  return -1;
}

std::vector<Matrix> ParameterStore::zero_grads() const {
  std::vector<Matrix> grads;
  grads.reserve(values_.size());
  for (const Matrix& v : values_) grads.push_back(Matrix::Zero(v.rows(), v.cols()));
  return grads;
}

std::vector<int> ParameterStore::with_prefix(std::span<const std::string> prefixes) const {
  std::vector<int> ids;
  for (std::size_t i = 0; i < names_.size(); ++i) {
    for (const std::string& p : prefixes) {
      if (names_[i].starts_with(p)) {
        ids.push_back(static_cast<int>(i));
        break;
      }
    }
  }
  return ids;
}

Index ParameterStore::scalar_count() const {
  Index n = 0;
  for (const Matrix& v : values_) n += v.size();
  return n;
}

Matrix xavier_uniform(Index fan_in, Index fan_out, Rng& rng) {
  const Real limit = std::sqrt(6.0 / static_cast<Real>(fan_in + fan_out));
  std::uniform_real_distribution<Real> dist(-limit, limit);
  Matrix m(fan_in, fan_out);
  for (Index i = 0; i < m.size(); ++i) m(i) = dist(rng);
  return m;
}

Matrix normal_matrix(Index rows, Index cols, Real stddev, Rng& rng) {
  std::normal_distribution<Real> dist(0.0, stddev);
  Matrix m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m(i) = dist(rng);
  return m;
}

Activation parse_activation(std::string_view name) {
  if (name == "relu") return Activation::kRelu;
  if (name == "sigmoid") return Activation::kSigmoid;
  throw ConfigInvalid("unknown activation: " + std::string(name));
}

ad::Var activate(const ad::Var& x, Activation act) {
  return act == Activation::kRelu ? ad::relu(x) : ad::sigmoid(x);
}

Linear Linear::create(ParameterStore& store, const std::string& name, Index in, Index out, Rng& rng) {
  Linear l;
  l.weight = store.add(name + ".weight", xavier_uniform(in, out, rng));
  l.bias = store.add(name + ".bias", Matrix::Zero(1, out));
  return l;
}

ad::Var Linear::operator()(ad::Tape& tape, const ad::Var& x) const {
  return ad::add_row(ad::matmul(x, tape.param(weight)), tape.param(bias));
}

LayerNorm LayerNorm::create(ParameterStore& store, const std::string& name, Index width) {
  LayerNorm ln;
  ln.gamma = store.add(name + ".gamma", Matrix::Ones(1, width));
  ln.beta = store.add(name + ".beta", Matrix::Zero(1, width));
  return ln;
}

ad::Var LayerNorm::operator()(ad::Tape& tape, const ad::Var& x) const {
  return ad::layer_norm(x, tape.param(gamma), tape.param(beta));
}

Mlp Mlp::create(ParameterStore& store, const std::string& name, Index in, Index hidden, Index out, Rng& rng,
                Activation act) {
  Mlp m;
  m.first = Linear::create(store, name + ".fc1", in, hidden, rng);
  m.second = Linear::create(store, name + ".fc2", hidden, out, rng);
  m.act = act;
  return m;
}

ad::Var Mlp::operator()(ad::Tape& tape, const ad::Var& x) const {
  return second(tape, activate(first(tape, x), act));
}

MultiHeadAttention MultiHeadAttention::create(ParameterStore& store, const std::string& name, Index width,
                                              int heads, Rng& rng) {
  if (heads <= 0 || width % heads != 0) throw ConfigInvalid("width must be divisible by heads");
  MultiHeadAttention a;
  a.query = Linear::create(store, name + ".q", width, width, rng);
  a.key = Linear::create(store, name + ".k", width, width, rng);
  a.value = Linear::create(store, name + ".v", width, width, rng);
  a.output = Linear::create(store, name + ".out", width, width, rng);
  a.heads = heads;
  return a;
}

ad::Var MultiHeadAttention::operator()(ad::Tape& tape, const ad::Var& queries, const ad::Var& keys,
                                       const Matrix* additive_mask) const {
  const ad::Var q = query(tape, queries);
  const ad::Var k = key(tape, keys);
  const ad::Var v = value(tape, keys);
  return output(tape, ad::attention(q, k, v, heads, additive_mask));
}

ad::Var MultiHeadAttention::attend(ad::Tape& tape, const ad::Var& queries, const ad::Var& keys,
                                   const ad::Var& values) const {
  return output(tape, ad::attention(query(tape, queries), key(tape, keys), value(tape, values), heads));
}

ad::Var MultiHeadAttention::sparse(ad::Tape& tape, const ad::Var& queries, const ad::Var& keys,
                                   const std::vector<std::vector<int>>& neighbors) const {
  const ad::Var q = query(tape, queries);
  const ad::Var k = key(tape, keys);
  const ad::Var v = value(tape, keys);
  return output(tape, ad::sparse_attention(q, k, v, heads, neighbors));
}

}  // namespace sgdn
