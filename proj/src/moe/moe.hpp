#pragma once

#include <random>
#include <string>
#include <vector>

#include "core/types.hpp"
#include "encoder/encoder.hpp"
#include "family/family.hpp"
#include "nn/layers.hpp"

namespace kinscope {

/// One binary head MLP_B^i per family. Each head reads the full flattened R_F
/// and emits (human, generated) logits.
class ExpertBank {
 public:
  ExpertBank() = default;
  ExpertBank(int input_dim, int hidden, int n_experts, nn::ParamStore& store, std::mt19937_64& rng,
             const std::string& prefix = "experts");

  /// Generated-class probability of every expert: [n, E].
  ag::Var generated_probs(const ag::Var& flat) const;
  /// Gate-weighted mixture of expert probabilities: [n].
  ag::Var mix(const ag::Var& flat, const ag::Var& gate) const;

  std::size_t size() const noexcept { return experts_.size(); }
  int input_dim() const noexcept { return input_dim_; }
  const nn::Mlp2& expert(std::size_t i) const { return experts_.at(i); }

 private:
  int input_dim_ = 0;
  std::vector<nn::Mlp2> experts_;
};

struct DetectionScore {
  double y_b = 0.0;
  std::vector<double> per_expert;
  FamilyPrediction gate;
};

/// y_B = sum_i gate_i * softmax(MLP_B^i(flatten(R_F)))[generated].
DetectionScore detect(const FeatureTensor& r, const FamilyPrediction& gate, const ExpertBank& bank);

/// Binary cross-entropy on y_B with a 1e-12 log floor.
double detection_loss(const DetectionScore& score, BinaryLabel label);

}  // namespace kinscope
