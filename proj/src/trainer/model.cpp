#include "trainer/model.hpp"

#include <cmath>
#include <random>

#include "core/errors.hpp"

namespace kinscope {

const char* to_string(Variant variant) noexcept {
  switch (variant) {
    case Variant::full: return "full";
    case Variant::no_bfe: return "no_bfe";
    case Variant::no_cl: return "no_cl";
    case Variant::no_moe: return "no_moe";
  }
  return "unknown";
}

Variant parse_variant(std::string_view text) {
  if (text == "full") return Variant::full;
  if (text == "no_bfe") return Variant::no_bfe;
  if (text == "no_cl") return Variant::no_cl;
  if (text == "no_moe") return Variant::no_moe;
  throw ConfigError("unknown variant '" + std::string(text) + "' (expected full, no_bfe, no_cl or no_moe)");
}

void HeadConfig::validate() const {
  if (family_hidden <= 0 || expert_hidden <= 0) throw ConfigError("head hidden sizes must be positive");
}

void ModelConfig::validate() const {
  if (registry.model_count() == 0) throw ConfigError("model needs a non-empty family registry");
  encoder.validate();
  contrastive.validate();
  heads.validate();
  if (variant == Variant::no_bfe && text_features.dim <= 0) throw ConfigError("text feature dim must be positive");
}

DetectorModel::DetectorModel(ModelConfig config) : config_(std::move(config)) {
  config_.validate();
  std::mt19937_64 rng(config_.init_seed);
  const int m = static_cast<int>(config_.registry.model_count());
  const int families = static_cast<int>(config_.registry.family_count());
  if (uses_probability_features()) {
    encoder_ = ProbabilityEncoder(config_.encoder, m, store_, rng);
  } else {
    text_source_ = make_text_feature_source(config_.text_features.source, config_.text_features.dim);
    text_encoder_ = TextEmbeddingEncoder(text_source_->dim(), m, config_.encoder.d, store_, rng);
  }
  family_head_ = FamilyHead(flat_dim(), config_.heads.family_hidden, families, store_, rng);
  projection_ = ProjectionHead(flat_dim(), config_.contrastive, store_, rng);
  if (uses_experts())
    experts_ = ExpertBank(flat_dim(), config_.heads.expert_hidden, families, store_, rng);
  else
    single_head_ = nn::Mlp2::create(store_, "detector", flat_dim(), config_.heads.expert_hidden, 2, rng);
  round_params_to_float(store_);
}

void round_params_to_float(nn::ParamStore& store) {
  for (const auto& [_, v] : store.entries())
    for (double& x : v->value) x = static_cast<double>(static_cast<float>(x));
}

PreparedSample DetectorModel::prepare(const LabeledSample& sample, const ScoreProvider* provider) const {
  if (!uses_probability_features()) return prepare(sample, TokenProbMatrix{});
  if (!provider) throw ConfigError("a score provider is required for probability features");
  return prepare(sample, provider->score(sample));
}

PreparedSample DetectorModel::prepare(const LabeledSample& sample, const TokenProbMatrix& matrix) const {
  PreparedSample p;
  p.id = sample.id;
  p.label = sample.binary_label;
  p.ft_domain = sample.ft_domain;
  p.group = contrastive_group(sample, config_.registry);
  p.family = sample.is_generated() ? p.group : -1;
  if (uses_probability_features()) {
    validate_matrix(matrix, config_.registry.model_count());
    const auto length = static_cast<std::size_t>(config_.encoder.aligned_length);
    p.input = make_encoder_input(matrix.aligned_length == length ? matrix : align_length(matrix, length));
    p.input.values.shrink_to_fit();
  } else {
    p.text_embedding = text_source_->embed(sample.text);
  }
  return p;
}

ag::Var DetectorModel::features(std::span<const PreparedSample* const> batch) const {
  const int n = static_cast<int>(batch.size());
  ag::Var r;
  if (uses_probability_features()) {
    std::vector<const EncoderInput*> inputs;
    inputs.reserve(batch.size());
    for (const auto* s : batch) inputs.push_back(&s->input);
    r = encoder_.forward(inputs);
  } else {
    std::vector<const std::vector<double>*> inputs;
    inputs.reserve(batch.size());
    for (const auto* s : batch) {
      if (s->text_embedding.empty()) throw StateError("sample '" + s->id + "' was prepared without text features");
      inputs.push_back(&s->text_embedding);
    }
    r = text_encoder_.forward(inputs);
  }
  return ag::reshape(r, {n, flat_dim()});
}

ag::Var DetectorModel::detect(const ag::Var& flat, const ag::Var& gate) const {
  if (uses_experts()) return experts_.mix(flat, gate);
  return ag::select_column(ag::softmax_rows(single_head_(flat)), 1);
}

ag::Var DetectorModel::expert_probs(const ag::Var& flat) const {
  return uses_experts() ? experts_.generated_probs(flat) : nullptr;
}

std::vector<Prediction> DetectorModel::predict(std::span<const PreparedSample> samples, std::size_t chunk) const {
  ag::NoGradGuard no_grad;
  std::vector<Prediction> out;
  out.reserve(samples.size());
  const int families = family_head_.n_families();
  for (std::size_t begin = 0; begin < samples.size(); begin += chunk) {
    const std::size_t end = std::min(samples.size(), begin + chunk);
    std::vector<const PreparedSample*> batch;
    for (std::size_t i = begin; i < end; ++i) batch.push_back(&samples[i]);
    auto flat = features(batch);
    auto gate = family_probs(flat);
    auto y = detect(flat, gate);
    auto experts = expert_probs(flat);
    for (std::size_t i = 0; i < batch.size(); ++i) {
      Prediction p;
      p.id = batch[i]->id;
      p.y_b = y->value[i];
      p.family_probs.assign(gate->value.begin() + static_cast<std::ptrdiff_t>(i * families),
                            gate->value.begin() + static_cast<std::ptrdiff_t>((i + 1) * families));
      if (experts)
        p.per_expert.assign(experts->value.begin() + static_cast<std::ptrdiff_t>(i * families),
                            experts->value.begin() + static_cast<std::ptrdiff_t>((i + 1) * families));
      if (!std::isfinite(p.y_b)) throw NumericError("non-finite detection score for '" + p.id + "'");
      out.push_back(std::move(p));
    }
  }
  return out;
}

}  // namespace kinscope
