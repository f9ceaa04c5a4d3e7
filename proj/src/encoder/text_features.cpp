#include "encoder/text_features.hpp"

#include <cctype>
#include <cmath>
#include <cstdint>

#include "core/errors.hpp"

namespace kinscope {

namespace {

std::uint64_t fnv1a(std::string_view s, std::uint64_t h = 1469598103934665603ull) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::vector<std::string> words(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (unsigned char c : text) {
    if (std::isalnum(c)) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

}  // namespace

HashedNgramFeatures::HashedNgramFeatures(int dim) : dim_(dim) {
  if (dim <= 0) throw ConfigError("text feature dimension must be positive");
}

std::vector<double> HashedNgramFeatures::embed(std::string_view text) const {
  std::vector<double> v(static_cast<std::size_t>(dim_), 0.0);
  const auto w = words(text);
  const auto bump = [&](std::uint64_t h) {
    const double sign = (h >> 63) ? -1.0 : 1.0;
    v[h % static_cast<std::uint64_t>(dim_)] += sign;
  };
  for (std::size_t i = 0; i < w.size(); ++i) {
    bump(fnv1a(w[i]));
    if (i + 1 < w.size()) bump(fnv1a(w[i + 1], fnv1a(w[i]) ^ 0x9e3779b97f4a7c15ull));
  }
  double norm = 0.0;
  for (double x : v) norm += x * x;
  if (norm > 0.0)
    for (double& x : v) x /= std::sqrt(norm);
  return v;
}

std::unique_ptr<TextFeatureSource> make_text_feature_source(const std::string& name, int dim) {
  if (name == "hashed-ngrams") return std::make_unique<HashedNgramFeatures>(dim);
  throw ConfigError("unknown text feature source '" + name + "'");
}

TextEmbeddingEncoder::TextEmbeddingEncoder(int input_dim, int n_models, int d, nn::ParamStore& store,
                                           std::mt19937_64& rng, const std::string& prefix)
    : input_dim_(input_dim), models_(n_models), d_(d) {
  projection_ = nn::Linear::create(store, prefix + ".projection", input_dim, n_models * d, rng);
}

ag::Var TextEmbeddingEncoder::forward(std::span<const std::vector<double>* const> batch) const {
  if (batch.empty()) throw ShapeError("text encoder: empty batch");
  const int n = static_cast<int>(batch.size());
  std::vector<double> x;
  x.reserve(static_cast<std::size_t>(n) * input_dim_);
  for (const auto* e : batch) {
    if (e->size() != static_cast<std::size_t>(input_dim_)) throw ShapeError("text encoder: embedding size mismatch");
    x.insert(x.end(), e->begin(), e->end());
  }
  auto h = ag::tanh(projection_(ag::constant(std::move(x), {n, input_dim_})));
  return ag::reshape(h, {n, models_, d_});
}

}  // namespace kinscope
