#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "core/types.hpp"
#include "encoder/encoder.hpp"
#include "encoder/text_features.hpp"
#include "family/family.hpp"
#include "moe/moe.hpp"
#include "nn/layers.hpp"
#include "scorer/provider.hpp"

namespace kinscope {

enum class Variant : std::uint8_t { full, no_bfe, no_cl, no_moe };

const char* to_string(Variant variant) noexcept;
Variant parse_variant(std::string_view text);

struct HeadConfig {
  int family_hidden = 128;
  int expert_hidden = 128;

  void validate() const;
  bool operator==(const HeadConfig&) const = default;
};

/// Generic text features used by the no_bfe variant.
struct TextFeatureConfig {
  std::string source = "hashed-ngrams";
  int dim = 1024;

  bool operator==(const TextFeatureConfig&) const = default;
};

/// Everything needed to rebuild a model's parameter layout.
struct ModelConfig {
  FamilyRegistry registry;
  Variant variant = Variant::full;
  EncoderConfig encoder;
  ContrastiveConfig contrastive;
  HeadConfig heads;
  TextFeatureConfig text_features;
  std::uint64_t init_seed = 0;

  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

/// A sample turned into model inputs.
struct PreparedSample {
  std::string id;
  BinaryLabel label = BinaryLabel::human;
  int family = -1;  // label-space index; -1 for human text
  int group = kHumanGroup;
  std::optional<std::string> ft_domain;
  EncoderInput input;                  // probability-feature variants
  std::vector<double> text_embedding;  // no_bfe only
};

struct Prediction {
  std::string id;
  double y_b = 0.0;
  std::vector<double> family_probs;
  std::vector<double> per_expert;  // empty for no_moe
};

/// Encoder (or text-feature encoder), family head, projection head and the
/// detection head(s) sharing one parameter store. Parameter creation order is
/// identical for full and no_cl so that their initialisations coincide.
class DetectorModel {
 public:
  explicit DetectorModel(ModelConfig config);
  DetectorModel(const DetectorModel&) = delete;
  DetectorModel& operator=(const DetectorModel&) = delete;

  const ModelConfig& config() const noexcept { return config_; }
  nn::ParamStore& params() noexcept { return store_; }
  const nn::ParamStore& params() const noexcept { return store_; }
  bool uses_probability_features() const noexcept { return config_.variant != Variant::no_bfe; }
  bool uses_experts() const noexcept { return config_.variant != Variant::no_moe; }
  int flat_dim() const noexcept { return static_cast<int>(config_.registry.model_count()) * config_.encoder.d; }

  /// Scores (when needed), aligns and featurises one sample. Provider gaps
  /// surface as the provider's LookupError naming the sample.
  PreparedSample prepare(const LabeledSample& sample, const ScoreProvider* provider) const;
  /// Same, from an already scored matrix (aligned or not).
  PreparedSample prepare(const LabeledSample& sample, const TokenProbMatrix& matrix) const;

  /// Flattened R_F for the batch: [n, M*d].
  ag::Var features(std::span<const PreparedSample* const> batch) const;
  /// Family distribution: [n, F].
  ag::Var family_probs(const ag::Var& flat) const { return family_head_.probs(flat); }
  /// Contrastive embeddings: [n, p].
  ag::Var project(const ag::Var& flat) const { return projection_(flat); }
  /// y_B: [n]. The gate is ignored by the single-head variant.
  ag::Var detect(const ag::Var& flat, const ag::Var& gate) const;
  /// Per-expert generated probabilities [n, E]; nullptr for no_moe.
  ag::Var expert_probs(const ag::Var& flat) const;

  /// Gradient-free inference in chunks.
  std::vector<Prediction> predict(std::span<const PreparedSample> samples, std::size_t chunk = 64) const;

  const FamilyHead& family_head() const noexcept { return family_head_; }
  const ExpertBank& experts() const noexcept { return experts_; }

 private:
  ModelConfig config_;
  nn::ParamStore store_;
  ProbabilityEncoder encoder_;
  std::unique_ptr<TextFeatureSource> text_source_;
  TextEmbeddingEncoder text_encoder_;
  FamilyHead family_head_;
  ProjectionHead projection_;
  ExpertBank experts_;
  nn::Mlp2 single_head_;
};

/// Rounds every parameter to the nearest float32. Models start and finish
/// training float32-representable, so checkpoints are lossless.
void round_params_to_float(nn::ParamStore& store);

}  // namespace kinscope
