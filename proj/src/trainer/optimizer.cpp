#include "trainer/optimizer.hpp"

#include <cmath>

#include "core/errors.hpp"

namespace kinscope {

const char* to_string(OptimizerKind kind) noexcept { return kind == OptimizerKind::sgd ? "sgd" : "adam"; }

OptimizerKind parse_optimizer(std::string_view text) {
  if (text == "adam") return OptimizerKind::adam;
  if (text == "sgd") return OptimizerKind::sgd;
  throw ConfigError("unknown optimizer '" + std::string(text) + "'");
}

Optimizer::Optimizer(const OptimizerConfig& config, const nn::ParamStore& store) : config_(config) {
  if (!(config.learning_rate >= 0.0)) throw ConfigError("learning rate must be >= 0");
  if (!(config.beta1 >= 0.0 && config.beta1 < 1.0 && config.beta2 >= 0.0 && config.beta2 < 1.0))
    throw ConfigError("Adam betas must lie in [0, 1)");
  if (!(config.epsilon > 0.0)) throw ConfigError("Adam epsilon must be positive");
  if (!(config.weight_decay >= 0.0)) throw ConfigError("weight decay must be >= 0");
  for (const auto& [_, v] : store.entries()) {
    m_.emplace_back(v->size(), 0.0);
    v_.emplace_back(v->size(), 0.0);
  }
}

void Optimizer::step(nn::ParamStore& store, double lr_scale) {
  const auto& entries = store.entries();
  if (entries.size() != m_.size()) throw StateError("optimizer was built for a different parameter store");
  ++t_;
  const double lr = config_.learning_rate * lr_scale;
  const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
  for (std::size_t e = 0; e < entries.size(); ++e) {
    auto& node = *entries[e].second;
    if (node.grad.size() != node.size()) continue;  // never reached by the loss
    for (std::size_t i = 0; i < node.size(); ++i) {
      const double g = node.grad[i];
      double update;
      if (config_.kind == OptimizerKind::sgd) {
        update = g;
      } else {
        m_[e][i] = config_.beta1 * m_[e][i] + (1.0 - config_.beta1) * g;
        v_[e][i] = config_.beta2 * v_[e][i] + (1.0 - config_.beta2) * g * g;
        update = (m_[e][i] / c1) / (std::sqrt(v_[e][i] / c2) + config_.epsilon);
      }
      if (config_.weight_decay > 0.0) update += config_.weight_decay * node.value[i];
      node.value[i] -= lr * update;
    }
  }
}

double grad_norm(const nn::ParamStore& store) {
  double sq = 0.0;
  for (const auto& [_, v] : store.entries())
    for (double g : v->grad) sq += g * g;
  return std::sqrt(sq);
}

double clip_grad_norm(nn::ParamStore& store, double max_norm) {
  const double norm = grad_norm(store);
  if (max_norm > 0.0 && norm > max_norm) {
    const double factor = max_norm / norm;
    for (const auto& [_, v] : store.entries())
      for (double& g : v->grad) g *= factor;
  }
  return norm;
}

}  // namespace kinscope
