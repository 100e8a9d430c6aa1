#pragma once

// Parameters and the small set of layers the model is assembled from.

#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "sgdn/autodiff.hpp"

namespace sgdn {

class ParameterStore {
 public:
  int add(std::string name, Matrix init);

  Index size() const { return static_cast<Index>(values_.size()); }
  const Matrix& value(int id) const { return values_[id]; }
  Matrix& value(int id) { return values_[id]; }
  const std::string& name(int id) const { return names_[id]; }
  // -1 when absent.
  int find(std::string_view name) const;

  std::vector<Matrix> zero_grads() const;
  // Ids whose name starts with any of the given prefixes.
  std::vector<int> with_prefix(std::span<const std::string> prefixes) const;
  Index scalar_count() const;

 private:
  std::vector<std::string> names_;
  std::vector<Matrix> values_;
};

Matrix xavier_uniform(Index fan_in, Index fan_out, Rng& rng);
Matrix normal_matrix(Index rows, Index cols, Real stddev, Rng& rng);

enum class Activation { kRelu, kSigmoid };

Activation parse_activation(std::string_view name);
ad::Var activate(const ad::Var& x, Activation act);

struct Linear {
  int weight = -1;
  int bias = -1;

  static Linear create(ParameterStore& store, const std::string& name, Index in, Index out, Rng& rng);
  ad::Var operator()(ad::Tape& tape, const ad::Var& x) const;
};

struct LayerNorm {
  int gamma = -1;
  int beta = -1;

  static LayerNorm create(ParameterStore& store, const std::string& name, Index width);
  ad::Var operator()(ad::Tape& tape, const ad::Var& x) const;
};

// Two linear layers with an activation in between.
struct Mlp {
  Linear first;
  Linear second;
  Activation act = Activation::kRelu;

  static Mlp create(ParameterStore& store, const std::string& name, Index in, Index hidden, Index out,
                    Rng& rng, Activation act = Activation::kRelu);
  ad::Var operator()(ad::Tape& tape, const ad::Var& x) const;
};

struct MultiHeadAttention {
  Linear query;
  Linear key;
  Linear value;
  Linear output;
  int heads = 1;

  static MultiHeadAttention create(ParameterStore& store, const std::string& name, Index width, int heads,
                                   Rng& rng);
  ad::Var operator()(ad::Tape& tape, const ad::Var& queries, const ad::Var& keys,
                     const Matrix* additive_mask = nullptr) const;
  // Keys and values from different inputs.
  ad::Var attend(ad::Tape& tape, const ad::Var& queries, const ad::Var& keys, const ad::Var& values) const;
  ad::Var sparse(ad::Tape& tape, const ad::Var& queries, const ad::Var& keys,
                 const std::vector<std::vector<int>>& neighbors) const;
};

}  // namespace sgdn
