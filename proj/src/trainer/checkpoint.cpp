#include "trainer/checkpoint.hpp"

#include <cstring>

#include "core/errors.hpp"
#include "core/io.hpp"

namespace kinscope {

using nlohmann::json;

namespace {

constexpr char kMagic[8] = {'K', 'S', 'C', 'K', 'P', 'T', '1', '\n'};

json registry_json(const FamilyRegistry& r) {
  json models = json::array();
  for (const auto& m : r.models()) models.push_back({{"id", m.id}, {"tokenizer", m.tokenizer}});
  return {{"models", models}, {"includes_others", r.includes_others()}};
}

FamilyRegistry registry_from_json(const json& j) {
  std::vector<BaseModelRef> models;
  for (const auto& m : j.at("models")) models.push_back({m.at("id").get<std::string>(), m.at("tokenizer").get<std::string>()});
  return FamilyRegistry(std::move(models), j.at("includes_others").get<bool>());
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint64_t get_u64(std::string_view in) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(in[i]);
  return v;
}

}  // namespace

json to_json(const EncoderConfig& c) {
  return {{"d", c.d},
          {"aligned_length", c.aligned_length},
          {"conv_channels", c.conv_channels},
          {"kernel_sizes", c.kernel_sizes},
          {"transformer_layers", c.transformer_layers},
          {"attention_heads", c.attention_heads},
          {"ff_dim", c.ff_dim},
          {"attention_axis", to_string(c.attention_axis)}};
}

json to_json(const ModelConfig& c) {
  return {{"registry", registry_json(c.registry)},
          {"variant", to_string(c.variant)},
          {"encoder", to_json(c.encoder)},
          {"contrastive",
           {{"temperature", c.contrastive.temperature},
            {"projection_hidden", c.contrastive.projection_hidden},
            {"projection_dim", c.contrastive.projection_dim}}},
          {"heads", {{"family_hidden", c.heads.family_hidden}, {"expert_hidden", c.heads.expert_hidden}}},
          {"text_features", {{"source", c.text_features.source}, {"dim", c.text_features.dim}}},
          {"init_seed", c.init_seed}};
}

ModelConfig model_config_from_json(const json& j) {
  try {
    ModelConfig c;
    c.registry = registry_from_json(j.at("registry"));
    c.variant = parse_variant(j.at("variant").get<std::string>());
    const auto& e = j.at("encoder");
    c.encoder.d = e.at("d");
    c.encoder.aligned_length = e.at("aligned_length");
    c.encoder.conv_channels = e.at("conv_channels").get<std::vector<int>>();
    c.encoder.kernel_sizes = e.at("kernel_sizes").get<std::vector<int>>();
    c.encoder.transformer_layers = e.at("transformer_layers");
    c.encoder.attention_heads = e.at("attention_heads");
    c.encoder.ff_dim = e.at("ff_dim");
    c.encoder.attention_axis = parse_attention_axis(e.at("attention_axis").get<std::string>());
    const auto& k = j.at("contrastive");
    c.contrastive.temperature = k.at("temperature");
    c.contrastive.projection_hidden = k.at("projection_hidden");
    c.contrastive.projection_dim = k.at("projection_dim");
    c.heads.family_hidden = j.at("heads").at("family_hidden");
    c.heads.expert_hidden = j.at("heads").at("expert_hidden");
    c.text_features.source = j.at("text_features").at("source").get<std::string>();
    c.text_features.dim = j.at("text_features").at("dim");
    c.init_seed = j.at("init_seed");
    return c;
  } catch (const json::exception& ex) {
    throw ParseError(std::string("checkpoint config: ") + ex.what());
  }
}

std::string serialize_checkpoint(const DetectorModel& model, const json& metadata) {
  json arrays = json::array();
  std::uint64_t offset = 0;
  for (const auto& [name, v] : model.params().entries()) {
    arrays.push_back({{"name", name}, {"shape", v->shape}, {"offset", offset}, {"count", v->size()}});
    offset += v->size();
  }
  json header = {{"format", "kinscope-checkpoint"},
                 {"version", 1},
                 {"dtype", "float32"},
                 {"byte_order", "little"},
                 {"flatten_order", "model-major"},
                 {"model", to_json(model.config())},
                 {"arrays", arrays},
                 {"metadata", metadata}};
  const std::string text = header.dump();
  std::string out(kMagic, sizeof kMagic);
  put_u64(out, text.size());
  out += text;
  out.reserve(out.size() + offset * 4);
  for (const auto& [_, v] : model.params().entries())
    for (double x : v->value) {
      const float f = static_cast<float>(x);
      std::uint32_t bits;
      std::memcpy(&bits, &f, 4);
      for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
    }
  return out;
}

void save_checkpoint(const DetectorModel& model, const std::filesystem::path& path, const json& metadata) {
  write_file_atomic(path, serialize_checkpoint(model, metadata));
}

LoadedCheckpoint parse_checkpoint(std::string_view bytes) {
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0)
    throw ParseError("not a kinscope checkpoint (bad magic)");
  const std::uint64_t header_len = get_u64(bytes.substr(8, 8));
  if (bytes.size() < 16 + header_len) throw ParseError("checkpoint truncated inside its header");
  json header;
  try {
    header = json::parse(bytes.substr(16, header_len));
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("checkpoint header: ") + e.what());
  }
  if (header.value("version", 0) != 1) throw ParseError("unsupported checkpoint version");
  LoadedCheckpoint out;
  out.model = std::make_unique<DetectorModel>(model_config_from_json(header.at("model")));
  out.metadata = header.value("metadata", json::object());
  const auto data = bytes.substr(16 + header_len);
  const auto& entries = out.model->params().entries();
  const auto& arrays = header.at("arrays");
  if (arrays.size() != entries.size())
    throw ParseError("checkpoint has " + std::to_string(arrays.size()) + " arrays, model expects " +
                     std::to_string(entries.size()));
  for (const auto& a : arrays) {
    const auto name = a.at("name").get<std::string>();
    ag::Var target;
    try {
      target = out.model->params().find(name);
    } catch (const LookupError&) {
      throw ParseError("checkpoint array '" + name + "' is unknown to the model");
    }
    if (a.at("shape").get<ag::Shape>() != target->shape) throw ParseError("checkpoint array '" + name + "' has the wrong shape");
    const auto offset = a.at("offset").get<std::uint64_t>(), count = a.at("count").get<std::uint64_t>();
    if (count != target->size() || (offset + count) * 4 > data.size())
      throw ParseError("checkpoint array '" + name + "' is truncated");
    for (std::uint64_t i = 0; i < count; ++i) {
      std::uint32_t bits = 0;
      for (int b = 3; b >= 0; --b) bits = (bits << 8) | static_cast<unsigned char>(data[(offset + i) * 4 + b]);
      float f;
      std::memcpy(&f, &bits, 4);
      target->value[i] = f;
    }
  }
  return out;
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) { return parse_checkpoint(read_text_file(path)); }

}  // namespace kinscope
