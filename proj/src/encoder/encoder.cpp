#include "encoder/encoder.hpp"

#include <algorithm>
#include <cmath>

#include "core/errors.hpp"

namespace kinscope {

const char* to_string(AttentionAxis axis) noexcept { return axis == AttentionAxis::models ? "models" : "tokens"; }

AttentionAxis parse_attention_axis(std::string_view text) {
  if (text == "models") return AttentionAxis::models;
  if (text == "tokens") return AttentionAxis::tokens;
  throw ConfigError("unknown attention axis '" + std::string(text) + "'");
}

void EncoderConfig::validate() const {
  if (d <= 0) throw ConfigError("encoder.d must be positive");
  if (aligned_length < 1) throw ConfigError("encoder.aligned_length must be >= 1");
  if (conv_channels.empty()) throw ConfigError("encoder needs at least one conv layer");
  if (conv_channels.size() != kernel_sizes.size())
    throw ConfigError("encoder.conv_channels and encoder.kernel_sizes differ in length");
  for (int c : conv_channels)
    if (c <= 0) throw ConfigError("conv channel counts must be positive");
  for (int k : kernel_sizes)
    if (k <= 0 || k % 2 == 0) throw ConfigError("conv kernel sizes must be odd and positive");
  if (transformer_layers < 0) throw ConfigError("encoder.transformer_layers must be >= 0");
  if (attention_heads <= 0 || d % attention_heads != 0)
    throw ConfigError("encoder.d must be divisible by encoder.attention_heads");
  if (ff_dim <= 0) throw ConfigError("encoder.ff_dim must be positive");
}

TokenProbMatrix align_length(const TokenProbMatrix& matrix, std::size_t length) {
  if (length < 1) throw ConfigError("aligned length must be >= 1");
  TokenProbMatrix out;
  out.sample_id = matrix.sample_id;
  out.aligned_length = length;
  out.logprobs.reserve(matrix.logprobs.size());
  out.mask.reserve(matrix.logprobs.size());
  for (std::size_t i = 0; i < matrix.logprobs.size(); ++i) {
    const auto& row = matrix.logprobs[i];
    const auto keep = std::min(length, row.size());
    std::vector<double> values(row.begin(), row.begin() + static_cast<std::ptrdiff_t>(keep));
    std::vector<std::uint8_t> mask;
    if (i < matrix.mask.size() && matrix.mask[i].size() == row.size())
      mask.assign(matrix.mask[i].begin(), matrix.mask[i].begin() + static_cast<std::ptrdiff_t>(keep));
    else
      mask.assign(keep, 1);
    values.resize(length, 0.0);
    mask.resize(length, 0);
    out.logprobs.push_back(std::move(values));
    out.mask.push_back(std::move(mask));
  }
  return out;
}

EncoderInput make_encoder_input(const TokenProbMatrix& aligned) {
  if (!aligned.is_aligned()) throw DataError("matrix '" + aligned.sample_id + "' is not aligned");
  EncoderInput in;
  in.models = static_cast<int>(aligned.model_count());
  in.length = static_cast<int>(aligned.aligned_length);
  in.values.reserve(aligned.model_count() * aligned.aligned_length);
  in.mask.reserve(in.values.capacity());
  for (std::size_t i = 0; i < aligned.model_count(); ++i) {
    if (aligned.logprobs[i].size() != aligned.aligned_length || aligned.mask[i].size() != aligned.aligned_length)
      throw ShapeError("matrix '" + aligned.sample_id + "' row " + std::to_string(i) + " not at aligned length");
    for (std::size_t j = 0; j < aligned.aligned_length; ++j) {
      const bool valid = aligned.mask[i][j] != 0;
      const double v = aligned.logprobs[i][j];
      if (valid && std::isnan(v)) throw DataError("NaN log-probability in sample '" + aligned.sample_id + "'");
      in.values.push_back(valid ? v : 0.0);
      in.mask.push_back(valid ? 1 : 0);
    }
  }
  return in;
}

ProbabilityEncoder::ProbabilityEncoder(const EncoderConfig& config, int n_models, nn::ParamStore& store,
                                       std::mt19937_64& rng, const std::string& prefix)
    : config_(config), models_(n_models) {
  config_.validate();
  if (n_models < 1) throw ConfigError("encoder needs at least one base model");
  int in = 2;  // (log-prob, mask bit)
  for (std::size_t i = 0; i < config_.conv_channels.size(); ++i) {
    convs_.push_back(nn::Conv1d::create(store, prefix + ".conv" + std::to_string(i), in, config_.conv_channels[i],
                                        config_.kernel_sizes[i], rng));
    in = config_.conv_channels[i];
  }
  to_model_dim_ = nn::Linear::create(store, prefix + ".to_model_dim", in, config_.d, rng);
  model_embedding_ = store.add_uniform(prefix + ".model_embedding", {n_models, config_.d}, config_.d, rng);
  for (int l = 0; l < config_.transformer_layers; ++l)
    layers_.push_back(nn::TransformerLayer::create(store, prefix + ".layer" + std::to_string(l), config_.d,
                                                   config_.attention_heads, config_.ff_dim, rng));
}

ag::Var ProbabilityEncoder::forward(std::span<const EncoderInput* const> batch) const {
  if (batch.empty()) throw ShapeError("encoder: empty batch");
  const int n = static_cast<int>(batch.size());
  const int m = models_;
  const int len = config_.aligned_length;
  const int rows = n * m;
  std::vector<double> x(static_cast<std::size_t>(rows) * 2 * len);
  std::vector<std::uint8_t> mask(static_cast<std::size_t>(rows) * len);
  for (int s = 0; s < n; ++s) {
    const auto& in = *batch[s];
    if (in.models != m || in.length != len)
      throw ShapeError("encoder: input is " + std::to_string(in.models) + "x" + std::to_string(in.length) +
                       ", expected " + std::to_string(m) + "x" + std::to_string(len));
    for (int i = 0; i < m; ++i) {
      const std::size_t r = static_cast<std::size_t>(s) * m + i;
      for (int l = 0; l < len; ++l) {
        const std::size_t src = static_cast<std::size_t>(i) * len + l;
        const bool valid = in.mask[src] != 0;
        x[(r * 2) * len + l] = valid ? in.values[src] : 0.0;
        x[(r * 2 + 1) * len + l] = valid ? 1.0 : 0.0;
        mask[r * len + l] = valid ? 1 : 0;
      }
    }
  }
  auto h = ag::constant(std::move(x), {rows, 2, len});
  for (const auto& conv : convs_) h = ag::apply_mask(ag::gelu(conv(h)), mask);

  ag::Var features;
  if (config_.attention_axis == AttentionAxis::models) {
    auto pooled = ag::masked_max_pool(h, mask);                        // [rows, C]
    auto e = ag::reshape(to_model_dim_(pooled), {n, m, config_.d});    // [n, M, d]
    e = ag::add_broadcast(e, model_embedding_);
    for (const auto& layer : layers_) e = layer(e, {});
    features = e;
  } else {
    auto t = to_model_dim_(ag::transpose_last2(h));  // [rows, L, d]
    for (const auto& layer : layers_) t = layer(t, mask);
    auto pooled = ag::masked_max_pool(ag::transpose_last2(t), mask);  // [rows, d]
    features = ag::add_broadcast(ag::reshape(pooled, {n, m, config_.d}), model_embedding_);
  }
  return features;
}

FeatureTensor encode(const TokenProbMatrix& aligned, const ProbabilityEncoder& encoder) {
  const auto input = make_encoder_input(aligned);
  ag::NoGradGuard no_grad;
  const EncoderInput* ptr = &input;
  auto out = encoder.forward(std::span<const EncoderInput* const>(&ptr, 1));
  for (double v : out->value)
    if (!std::isfinite(v)) throw NumericError("encoder produced a non-finite feature for '" + aligned.sample_id + "'");
  FeatureTensor r;
  r.sample_id = aligned.sample_id;
  r.models = encoder.models();
  r.d = encoder.config().d;
  r.values = std::move(out->value);
  return r;
}

}  // namespace kinscope
