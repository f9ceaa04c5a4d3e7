#include "moe/moe.hpp"

#include <algorithm>
#include <cmath>

#include "core/errors.hpp"

namespace kinscope {

ExpertBank::ExpertBank(int input_dim, int hidden, int n_experts, nn::ParamStore& store, std::mt19937_64& rng,
                       const std::string& prefix)
    : input_dim_(input_dim) {
  if (n_experts < 1) throw ConfigError("expert bank needs at least one expert");
  for (int i = 0; i < n_experts; ++i)
    experts_.push_back(nn::Mlp2::create(store, prefix + "." + std::to_string(i), input_dim, hidden, 2, rng));
}

ag::Var ExpertBank::generated_probs(const ag::Var& flat) const {
  std::vector<ag::Var> columns;
  columns.reserve(experts_.size());
  for (const auto& e : experts_) columns.push_back(ag::select_column(ag::softmax_rows(e(flat)), 1));
  return ag::stack_columns(columns);
}

ag::Var ExpertBank::mix(const ag::Var& flat, const ag::Var& gate) const {
  auto probs = generated_probs(flat);
  if (gate->shape != probs->shape)
    throw ShapeError("gate " + ag::shape_string(gate->shape) + " does not match experts " +
                     ag::shape_string(probs->shape));
  return ag::sum_rows(ag::mul(gate, probs));
}

DetectionScore detect(const FeatureTensor& r, const FamilyPrediction& gate, const ExpertBank& bank) {
  if (gate.size() != bank.size())
    throw ShapeError("gate has " + std::to_string(gate.size()) + " entries for " + std::to_string(bank.size()) +
                     " experts");
  ag::NoGradGuard no_grad;
  auto flat = flatten_features(r);
  if (flat->shape[1] != bank.input_dim()) throw ShapeError("feature size does not match expert input");
  auto probs = bank.generated_probs(flat);
  auto g = ag::constant(gate.probs, {1, static_cast<int>(gate.size())});
  DetectionScore s;
  s.y_b = ag::sum_rows(ag::mul(g, probs))->value[0];
  s.per_expert = probs->value;
  s.gate = gate;
  if (std::isnan(s.y_b)) throw NumericError("NaN detection score for '" + r.sample_id + "'");
  return s;
}

double detection_loss(const DetectionScore& score, BinaryLabel label) {
  const double y = score.y_b;
  return label == BinaryLabel::generated ? -std::log(std::max(y, 1e-12)) : -std::log(std::max(1.0 - y, 1e-12));
}

}  // namespace kinscope
