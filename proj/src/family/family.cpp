#include "family/family.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "core/errors.hpp"

namespace kinscope {

void ContrastiveConfig::validate() const {
  if (!(temperature > 0.0)) throw ConfigError("contrastive.temperature must be positive");
  if (projection_hidden <= 0 || projection_dim <= 0) throw ConfigError("projection sizes must be positive");
}

std::size_t FamilyPrediction::argmax() const {
  if (probs.empty()) throw ShapeError("empty family prediction");
  return static_cast<std::size_t>(std::max_element(probs.begin(), probs.end()) - probs.begin());
}

FamilyHead::FamilyHead(int input_dim, int hidden, int n_families, nn::ParamStore& store, std::mt19937_64& rng,
                       const std::string& prefix)
    : input_dim_(input_dim), n_families_(n_families) {
  if (n_families < 1) throw ConfigError("family head needs at least one family");
  mlp_ = nn::Mlp2::create(store, prefix, input_dim, hidden, n_families, rng);
}

ProjectionHead::ProjectionHead(int input_dim, const ContrastiveConfig& config, nn::ParamStore& store,
                               std::mt19937_64& rng, const std::string& prefix) {
  config.validate();
  mlp_ = nn::Mlp2::create(store, prefix, input_dim, config.projection_hidden, config.projection_dim, rng);
}

ag::Var flatten_features(const FeatureTensor& r) {
  if (r.values.size() != static_cast<std::size_t>(r.models) * r.d) throw ShapeError("malformed feature tensor");
  for (double v : r.values)
    if (!std::isfinite(v)) throw DataError("non-finite feature in '" + r.sample_id + "'");
  return ag::constant(r.values, {1, r.models * r.d});
}

FamilyPrediction predict_family(const FeatureTensor& r, const FamilyHead& head) {
  ag::NoGradGuard no_grad;
  auto flat = flatten_features(r);
  if (flat->shape[1] != head.input_dim()) throw ShapeError("feature size does not match family head input");
  auto logits = head.logits(flat);
  for (double v : logits->value)
    if (std::isnan(v)) throw NumericError("NaN family logit for '" + r.sample_id + "'");
  return {ag::softmax_rows(logits)->value};
}

double family_loss(const FamilyPrediction& pred, std::size_t label) {
  if (label >= pred.probs.size())
    throw LabelError("family label " + std::to_string(label) + " outside " + std::to_string(pred.probs.size()) +
                     " families");
  return -std::log(std::max(pred.probs[label], 1e-12));
}

double contrastive_loss(std::span<const std::vector<double>> embeddings, std::span<const int> group_ids,
                        const ContrastiveConfig& config) {
  config.validate();
  if (embeddings.empty() || embeddings.size() % 2 != 0)
    throw ShapeError("contrastive loss needs an even, non-zero number of embeddings");
  if (group_ids.size() != embeddings.size()) throw ShapeError("group id count differs from embedding count");
  const std::size_t p = embeddings[0].size();
  std::vector<double> flat;
  flat.reserve(embeddings.size() * p);
  for (const auto& e : embeddings) {
    if (e.size() != p) throw ShapeError("embeddings differ in dimension");
    flat.insert(flat.end(), e.begin(), e.end());
  }
  ag::NoGradGuard no_grad;
  auto loss = ag::contrastive_loss(ag::constant(std::move(flat), {static_cast<int>(embeddings.size()), static_cast<int>(p)}),
                                   config.temperature);
  return loss->value[0];
}

int contrastive_group(const LabeledSample& sample, const FamilyRegistry& registry) {
  if (!sample.is_generated()) return kHumanGroup;
  auto idx = registry.family_index(*sample.family_label);
  if (!idx) throw LabelError("sample '" + sample.id + "': family '" + *sample.family_label + "' not in registry");
  return static_cast<int>(*idx);
}

std::vector<AugmentedPair> make_augmented_batch(std::span<const std::size_t> batch, std::span<const int> pool_groups,
                                                std::uint64_t seed) {
  if (pool_groups.empty()) throw ConfigError("augmentation pool is empty");
  std::map<int, std::vector<std::size_t>> members;
  for (std::size_t i = 0; i < pool_groups.size(); ++i) members[pool_groups[i]].push_back(i);
  std::mt19937_64 rng(seed);
  std::vector<AugmentedPair> pairs;
  pairs.reserve(batch.size());
  for (std::size_t idx : batch) {
    if (idx >= pool_groups.size()) throw ShapeError("batch index outside the pool");
    AugmentedPair pair{idx, idx, pool_groups[idx], false};
    const auto& group = members[pair.group];
    if (group.size() < 2) {
      pair.degenerate = true;
    } else {
      // Uniform over the group minus the original itself.
      std::uniform_int_distribution<std::size_t> pick(0, group.size() - 2);
      std::size_t k = pick(rng);
      const auto self = static_cast<std::size_t>(std::find(group.begin(), group.end(), idx) - group.begin());
      if (k >= self) ++k;
      pair.augmented = group[k];
    }
    pairs.push_back(pair);
  }
  return pairs;
}

PairedBatch make_augmented_batch(std::span<const std::size_t> batch, std::span<const FeatureTensor> pool,
                                 std::span<const int> pool_groups, std::uint64_t seed) {
  if (pool.size() != pool_groups.size()) throw ShapeError("pool features and groups differ in length");
  const auto pairs = make_augmented_batch(batch, pool_groups, seed);
  PairedBatch out;
  for (const auto& p : pairs) {
    out.embeddings.push_back(pool[p.original]);
    out.group_ids.push_back(p.group);
    out.degenerate.push_back(p.degenerate);
  }
  for (const auto& p : pairs) {
    out.embeddings.push_back(pool[p.augmented]);
    out.group_ids.push_back(p.group);
  }
  return out;
}

}  // namespace kinscope
