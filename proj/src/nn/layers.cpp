#include "nn/layers.hpp"

#include <cmath>

#include "core/errors.hpp"

namespace kinscope::nn {

Var ParamStore::add(const std::string& name, std::vector<double> values, ag::Shape shape) {
  for (const auto& [existing, _] : entries_)
    if (existing == name) throw ConfigError("duplicate parameter name '" + name + "'");
  auto v = ag::parameter(std::move(values), std::move(shape));
  entries_.emplace_back(name, v);
  return v;
}

Var ParamStore::add_uniform(const std::string& name, ag::Shape shape, int fan_in, std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<double> values(ag::shape_size(shape));
  for (double& v : values) v = dist(rng);
  return add(name, std::move(values), std::move(shape));
}

Var ParamStore::add_constant(const std::string& name, ag::Shape shape, double value) {
  std::vector<double> values(ag::shape_size(shape), value);
  return add(name, std::move(values), std::move(shape));
}

Var ParamStore::find(const std::string& name) const {
  for (const auto& [n, v] : entries_)
    if (n == name) return v;
  throw LookupError("no parameter named '" + name + "'");
}

std::size_t ParamStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& [_, v] : entries_) n += v->size();
  return n;
}

void ParamStore::zero_grad() {
  for (auto& [_, v] : entries_) v->grad.assign(v->size(), 0.0);
}

std::vector<std::vector<double>> ParamStore::snapshot() const {
  std::vector<std::vector<double>> out;
  out.reserve(entries_.size());
  for (const auto& [_, v] : entries_) out.push_back(v->value);
  return out;
}

void ParamStore::restore(const std::vector<std::vector<double>>& values) {
  if (values.size() != entries_.size()) throw ShapeError("parameter snapshot has wrong entry count");
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (values[i].size() != entries_[i].second->size())
      throw ShapeError("parameter snapshot size mismatch for '" + entries_[i].first + "'");
    entries_[i].second->value = values[i];
  }
}

Linear Linear::create(ParamStore& store, const std::string& name, int in, int out, std::mt19937_64& rng) {
  Linear l;
  l.weight = store.add_uniform(name + ".weight", {in, out}, in, rng);
  l.bias = store.add_constant(name + ".bias", {out}, 0.0);
  return l;
}

Conv1d Conv1d::create(ParamStore& store, const std::string& name, int in, int out, int kernel,
                      std::mt19937_64& rng) {
  Conv1d c;
  c.weight = store.add_uniform(name + ".weight", {out, in, kernel}, in * kernel, rng);
  c.bias = store.add_constant(name + ".bias", {out}, 0.0);
  return c;
}

LayerNorm LayerNorm::create(ParamStore& store, const std::string& name, int dim) {
  LayerNorm n;
  n.gamma = store.add_constant(name + ".gamma", {dim}, 1.0);
  n.beta = store.add_constant(name + ".beta", {dim}, 0.0);
  return n;
}

Mlp2 Mlp2::create(ParamStore& store, const std::string& name, int in, int hidden, int out, std::mt19937_64& rng) {
  Mlp2 m;
  m.hidden = Linear::create(store, name + ".fc0", in, hidden, rng);
  m.out = Linear::create(store, name + ".fc1", hidden, out, rng);
  return m;
}

TransformerLayer TransformerLayer::create(ParamStore& store, const std::string& name, int dim, int heads,
                                          int ff_dim, std::mt19937_64& rng) {
  if (heads <= 0 || dim % heads != 0)
    throw ConfigError("feature dimension " + std::to_string(dim) + " not divisible by " + std::to_string(heads) +
                      " attention heads");
  TransformerLayer t;
  t.heads = heads;
  t.query = Linear::create(store, name + ".attn.query", dim, dim, rng);
  t.key = Linear::create(store, name + ".attn.key", dim, dim, rng);
  t.value = Linear::create(store, name + ".attn.value", dim, dim, rng);
  t.output = Linear::create(store, name + ".attn.output", dim, dim, rng);
  t.norm1 = LayerNorm::create(store, name + ".norm1", dim);
  t.ff1 = Linear::create(store, name + ".ff.fc0", dim, ff_dim, rng);
  t.ff2 = Linear::create(store, name + ".ff.fc1", ff_dim, dim, rng);
  t.norm2 = LayerNorm::create(store, name + ".norm2", dim);
  return t;
}

Var TransformerLayer::operator()(const Var& x, std::span<const std::uint8_t> key_mask) const {
  const auto attended = ag::attention(query(x), key(x), value(x), heads, key_mask);
  auto h = norm1(ag::add(x, output(attended)));
  return norm2(ag::add(h, ff2(ag::gelu(ff1(h)))));
}

}  // namespace kinscope::nn
