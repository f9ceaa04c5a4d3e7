#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

#include "nn/layers.hpp"

namespace kinscope {

enum class OptimizerKind : std::uint8_t { adam, sgd };

const char* to_string(OptimizerKind kind) noexcept;
OptimizerKind parse_optimizer(std::string_view text);

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::adam;
  double learning_rate = 2e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.0;  // decoupled

  bool operator==(const OptimizerConfig&) const = default;
};

/// Adam or plain SGD over every entry of a ParamStore, in entry order.
class Optimizer {
 public:
  Optimizer(const OptimizerConfig& config, const nn::ParamStore& store);
  /// Applies one update from the accumulated gradients; `lr_scale`
  /// multiplies the configured learning rate.
  void step(nn::ParamStore& store, double lr_scale = 1.0);
  std::int64_t steps() const noexcept { return t_; }

 private:
  OptimizerConfig config_;
  std::vector<std::vector<double>> m_, v_;
  std::int64_t t_ = 0;
};

/// Global L2 norm of all gradients.
double grad_norm(const nn::ParamStore& store);
/// Rescales gradients so the global norm is at most max_norm (0 disables).
/// Returns the norm before clipping.
double clip_grad_norm(nn::ParamStore& store, double max_norm);

}  // namespace kinscope
