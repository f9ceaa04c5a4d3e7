#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "core/types.hpp"
#include "nn/layers.hpp"

namespace kinscope {

enum class AttentionAxis : std::uint8_t { models, tokens };

const char* to_string(AttentionAxis axis) noexcept;
AttentionAxis parse_attention_axis(std::string_view text);

struct EncoderConfig {
  int d = 128;
  int aligned_length = 512;
  std::vector<int> conv_channels{32, 64, 64};
  std::vector<int> kernel_sizes{5, 3, 3};
  int transformer_layers = 2;
  int attention_heads = 4;
  int ff_dim = 256;
  /// models: attend across the M per-model features (default).
  /// tokens: attend along each model's token axis before pooling.
  AttentionAxis attention_axis = AttentionAxis::models;

  void validate() const;
  bool operator==(const EncoderConfig&) const = default;
};

/// Truncates rows longer than `length` and right-pads shorter ones with 0.0
/// under a false mask.
TokenProbMatrix align_length(const TokenProbMatrix& matrix, std::size_t length);

/// Model-major flattened aligned matrix: values and mask are M * L.
struct EncoderInput {
  int models = 0;
  int length = 0;
  std::vector<double> values;
  std::vector<std::uint8_t> mask;
};

/// Rejects NaN input with DataError; values at masked positions are ignored.
EncoderInput make_encoder_input(const TokenProbMatrix& aligned);

/// R_F: an M x d feature matrix, row-major.
struct FeatureTensor {
  std::string sample_id;
  int models = 0;
  int d = 0;
  std::vector<double> values;

  double at(int model, int k) const { return values[static_cast<std::size_t>(model) * d + k]; }
  bool operator==(const FeatureTensor&) const = default;
};

/// CNN over each model's token axis (weights shared across models), masked
/// max-pool, a learned per-model embedding, then Transformer layers.
class ProbabilityEncoder {
 public:
  ProbabilityEncoder() = default;
  ProbabilityEncoder(const EncoderConfig& config, int n_models, nn::ParamStore& store, std::mt19937_64& rng,
                     const std::string& prefix = "encoder");

  /// Returns [n, M, d].
  ag::Var forward(std::span<const EncoderInput* const> batch) const;

  const EncoderConfig& config() const noexcept { return config_; }
  int models() const noexcept { return models_; }

 private:
  EncoderConfig config_;
  int models_ = 0;
  std::vector<nn::Conv1d> convs_;
  nn::Linear to_model_dim_;
  ag::Var model_embedding_;  // [M, d]
  std::vector<nn::TransformerLayer> layers_;
};

/// Single-sample inference. NaN in the output raises NumericError.
FeatureTensor encode(const TokenProbMatrix& aligned, const ProbabilityEncoder& encoder);

}  // namespace kinscope
