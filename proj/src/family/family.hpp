#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "core/types.hpp"
#include "encoder/encoder.hpp"
#include "nn/layers.hpp"

namespace kinscope {

struct ContrastiveConfig {
  double temperature = 0.07;
  int projection_hidden = 128;
  int projection_dim = 128;

  void validate() const;
  bool operator==(const ContrastiveConfig&) const = default;
};

/// Softmax distribution over the family label space.
struct FamilyPrediction {
  std::vector<double> probs;

  std::size_t argmax() const;
  std::size_t size() const noexcept { return probs.size(); }
};

/// MLP_F: flattened R_F (model-major) -> family logits.
class FamilyHead {
 public:
  FamilyHead() = default;
  FamilyHead(int input_dim, int hidden, int n_families, nn::ParamStore& store, std::mt19937_64& rng,
             const std::string& prefix = "family_head");

  ag::Var logits(const ag::Var& flat) const { return mlp_(flat); }
  ag::Var probs(const ag::Var& flat) const { return ag::softmax_rows(mlp_(flat)); }

  int input_dim() const noexcept { return input_dim_; }
  int n_families() const noexcept { return n_families_; }
  const nn::Mlp2& mlp() const noexcept { return mlp_; }

 private:
  int input_dim_ = 0;
  int n_families_ = 0;
  nn::Mlp2 mlp_;
};

/// One-hidden-layer projection producing the contrastive embedding.
class ProjectionHead {
 public:
  ProjectionHead() = default;
  ProjectionHead(int input_dim, const ContrastiveConfig& config, nn::ParamStore& store, std::mt19937_64& rng,
                 const std::string& prefix = "projection");

  ag::Var operator()(const ag::Var& flat) const { return mlp_(flat); }

 private:
  nn::Mlp2 mlp_;
};

/// Flattens R_F row-major into a [1, M*d] constant.
ag::Var flatten_features(const FeatureTensor& r);

FamilyPrediction predict_family(const FeatureTensor& r, const FamilyHead& head);

/// -log max(p[label], 1e-12). Out-of-range labels raise LabelError.
double family_loss(const FamilyPrediction& pred, std::size_t label);

/// Evaluates the contrastive objective on 2|b| embeddings laid out as
/// |b| originals followed by their |b| augmentations.
double contrastive_loss(std::span<const std::vector<double>> embeddings, std::span<const int> group_ids,
                        const ContrastiveConfig& config);

inline constexpr int kHumanGroup = -1;

/// Contrastive group: family index for generated samples, kHumanGroup otherwise.
int contrastive_group(const LabeledSample& sample, const FamilyRegistry& registry);

struct AugmentedPair {
  std::size_t original = 0;
  std::size_t augmented = 0;
  int group = 0;
  bool degenerate = false;  // no other pool member in the group; paired with itself
};

/// For each batch entry (an index into the pool) draws a partner uniformly
/// from the other pool members of the same group.
std::vector<AugmentedPair> make_augmented_batch(std::span<const std::size_t> batch, std::span<const int> pool_groups,
                                                std::uint64_t seed);

struct PairedBatch {
  std::vector<FeatureTensor> embeddings;  // originals then augmentations
  std::vector<int> group_ids;
  std::vector<bool> degenerate;
};

/// Feature-level form: pairs each batch feature with a same-group pool feature.
PairedBatch make_augmented_batch(std::span<const std::size_t> batch, std::span<const FeatureTensor> pool,
                                 std::span<const int> pool_groups, std::uint64_t seed);

}  // namespace kinscope
