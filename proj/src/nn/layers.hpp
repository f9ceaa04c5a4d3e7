#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "nn/autograd.hpp"

namespace kinscope::nn {

using ag::Var;

/// Ordered, named collection of trainable tensors.
class ParamStore {
 public:
  Var add(const std::string& name, std::vector<double> values, ag::Shape shape);
  /// Weight initialised uniformly in +-1/sqrt(fan_in).
  Var add_uniform(const std::string& name, ag::Shape shape, int fan_in, std::mt19937_64& rng);
  Var add_constant(const std::string& name, ag::Shape shape, double value);

  const std::vector<std::pair<std::string, Var>>& entries() const noexcept { return entries_; }
  Var find(const std::string& name) const;
  std::size_t scalar_count() const;

  void zero_grad();
  /// Deep copy of current values, in entry order.
  std::vector<std::vector<double>> snapshot() const;
  void restore(const std::vector<std::vector<double>>& values);

 private:
  std::vector<std::pair<std::string, Var>> entries_;
};

struct Linear {
  Var weight;  // [in, out]
  Var bias;    // [out]

  static Linear create(ParamStore& store, const std::string& name, int in, int out, std::mt19937_64& rng);
  Var operator()(const Var& x) const { return ag::linear(x, weight, bias); }
};

struct Conv1d {
  Var weight;  // [out, in, kernel]
  Var bias;

  static Conv1d create(ParamStore& store, const std::string& name, int in, int out, int kernel,
                       std::mt19937_64& rng);
  Var operator()(const Var& x) const { return ag::conv1d(x, weight, bias); }
};

struct LayerNorm {
  Var gamma;
  Var beta;

  static LayerNorm create(ParamStore& store, const std::string& name, int dim);
  Var operator()(const Var& x) const { return ag::layer_norm(x, gamma, beta); }
};

/// Two dense layers with a GELU in between.
struct Mlp2 {
  Linear hidden;
  Linear out;

  static Mlp2 create(ParamStore& store, const std::string& name, int in, int hidden, int out, std::mt19937_64& rng);
  Var operator()(const Var& x) const { return out(ag::gelu(hidden(x))); }
};

/// Post-norm Transformer encoder layer over x [B, T, D].
struct TransformerLayer {
  Linear query, key, value, output;
  LayerNorm norm1, norm2;
  Linear ff1, ff2;
  int heads = 1;

  static TransformerLayer create(ParamStore& store, const std::string& name, int dim, int heads, int ff_dim,
                                 std::mt19937_64& rng);
  Var operator()(const Var& x, std::span<const std::uint8_t> key_mask) const;
};

}  // namespace kinscope::nn
