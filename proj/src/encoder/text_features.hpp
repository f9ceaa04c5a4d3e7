#pragma once

#include <memory>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "nn/layers.hpp"

namespace kinscope {

/// Pluggable text-embedding source used when probability features are
/// switched off. Implementations must be deterministic and thread-safe.
class TextFeatureSource {
 public:
  virtual ~TextFeatureSource() = default;
  virtual std::string name() const = 0;
  virtual int dim() const = 0;
  virtual std::vector<double> embed(std::string_view text) const = 0;
};

/// Hashed bag of word unigrams and bigrams, L2-normalised.
class HashedNgramFeatures final : public TextFeatureSource {
 public:
  explicit HashedNgramFeatures(int dim = 1024);
  std::string name() const override { return "hashed-ngrams"; }
  int dim() const override { return dim_; }
  std::vector<double> embed(std::string_view text) const override;

 private:
  int dim_;
};

std::unique_ptr<TextFeatureSource> make_text_feature_source(const std::string& name, int dim);

/// Maps a text embedding to an M x d feature matrix: tanh(W e + b) reshaped.
class TextEmbeddingEncoder {
 public:
  TextEmbeddingEncoder() = default;
  TextEmbeddingEncoder(int input_dim, int n_models, int d, nn::ParamStore& store, std::mt19937_64& rng,
                       const std::string& prefix = "text_encoder");

  /// Returns [n, M, d].
  ag::Var forward(std::span<const std::vector<double>* const> batch) const;

 private:
  int input_dim_ = 0;
  int models_ = 0;
  int d_ = 0;
  nn::Linear projection_;
};

}  // namespace kinscope
