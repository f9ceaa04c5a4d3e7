#include "config/run_config.hpp"

#include <charconv>
#include <functional>
#include <map>

#include "core/errors.hpp"
#include "core/io.hpp"

namespace kinscope {

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void bad(std::string_view key, std::string_view value, const char* expected) {
  throw ConfigError("config key '" + std::string(key) + "': '" + std::string(value) + "' is not " + expected);
}

double to_double(std::string_view key, std::string_view v) {
  v = trim(v);
  double out = 0.0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size() || v.empty()) bad(key, v, "a number");
  return out;
}

long long to_int(std::string_view key, std::string_view v) {
  v = trim(v);
  long long out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size() || v.empty()) bad(key, v, "an integer");
  return out;
}

std::uint64_t to_u64(std::string_view key, std::string_view v) {
  v = trim(v);
  std::uint64_t out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size() || v.empty()) bad(key, v, "a non-negative integer");
  return out;
}

bool to_bool(std::string_view key, std::string_view v) {
  v = trim(v);
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  bad(key, v, "a boolean");
}

std::vector<std::string> to_list(std::string_view v) {
  std::vector<std::string> out;
  v = trim(v);
  if (v.empty()) return out;
  std::size_t pos = 0;
  while (true) {
    const auto comma = v.find(',', pos);
    out.emplace_back(trim(v.substr(pos, comma == std::string_view::npos ? std::string_view::npos : comma - pos)));
    if (comma == std::string_view::npos) break;
    pos = comma + 1;
  }
  return out;
}

std::vector<double> to_doubles(std::string_view key, std::string_view v) {
  std::vector<double> out;
  for (const auto& s : to_list(v)) out.push_back(to_double(key, s));
  return out;
}

std::vector<int> to_ints(std::string_view key, std::string_view v) {
  std::vector<int> out;
  for (const auto& s : to_list(v)) out.push_back(static_cast<int>(to_int(key, s)));
  return out;
}

ProcessParams to_process(std::string_view key, std::string_view v) {
  const auto d = to_doubles(key, v);
  if (d.size() != 3) bad(key, v, "'mean,rho,sigma'");
  return {d[0], d[1], d[2]};
}

std::string join(const std::vector<std::string>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + v[i];
  return out;
}

template <class T>
std::string join_num(const std::vector<T>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ',';
    if constexpr (std::is_floating_point_v<T>)
      out += format_double(v[i]);
    else
      out += std::to_string(v[i]);
  }
  return out;
}

std::string num(double v) { return format_double(v); }
std::string process(const ProcessParams& p) { return join_num(std::vector<double>{p.mean, p.rho, p.sigma}); }

struct Field {
  std::function<void(RunConfig&, std::string_view)> set;
  std::function<std::string(const RunConfig&)> get;
};

#define KS_INT(key, member)                                                                              \
  {                                                                                                      \
    key, {[](RunConfig& c, std::string_view v) { c.member = static_cast<int>(to_int(key, v)); },         \
          [](const RunConfig& c) { return std::to_string(c.member); } }                                  \
  }
#define KS_DOUBLE(key, member)                                                                           \
  {                                                                                                      \
    key, {[](RunConfig& c, std::string_view v) { c.member = to_double(key, v); },                        \
          [](const RunConfig& c) { return num(c.member); } }                                             \
  }
#define KS_STRING(key, member)                                                                           \
  {                                                                                                      \
    key, {[](RunConfig& c, std::string_view v) { c.member = std::string(trim(v)); },                     \
          [](const RunConfig& c) { return c.member; } }                                                  \
  }

const std::map<std::string, Field, std::less<>>& fields() {
  static const std::map<std::string, Field, std::less<>> table = {
      {"seed", {[](RunConfig& c, std::string_view v) { c.seed = to_u64("seed", v); },
                [](const RunConfig& c) { return std::to_string(c.seed); }}},
      {"registry.models", {[](RunConfig& c, std::string_view v) { c.models = to_list(v); },
                           [](const RunConfig& c) { return join(c.models); }}},
      {"registry.tokenizers", {[](RunConfig& c, std::string_view v) { c.tokenizers = to_list(v); },
                               [](const RunConfig& c) { return join(c.tokenizers); }}},
      {"registry.includes_others",
       {[](RunConfig& c, std::string_view v) { c.includes_others = to_bool("registry.includes_others", v); },
        [](const RunConfig& c) { return std::string(c.includes_others ? "true" : "false"); }}},
      KS_STRING("data.heldout_domain", heldout_domain),
      KS_DOUBLE("data.val_fraction", train.val_fraction),
      KS_INT("encoder.d", train.encoder.d),
      KS_INT("encoder.aligned_length", train.encoder.aligned_length),
      {"encoder.conv_channels",
       {[](RunConfig& c, std::string_view v) { c.train.encoder.conv_channels = to_ints("encoder.conv_channels", v); },
        [](const RunConfig& c) { return join_num(c.train.encoder.conv_channels); }}},
      {"encoder.kernel_sizes",
       {[](RunConfig& c, std::string_view v) { c.train.encoder.kernel_sizes = to_ints("encoder.kernel_sizes", v); },
        [](const RunConfig& c) { return join_num(c.train.encoder.kernel_sizes); }}},
      KS_INT("encoder.transformer_layers", train.encoder.transformer_layers),
      KS_INT("encoder.attention_heads", train.encoder.attention_heads),
      KS_INT("encoder.ff_dim", train.encoder.ff_dim),
      {"encoder.attention_axis",
       {[](RunConfig& c, std::string_view v) { c.train.encoder.attention_axis = parse_attention_axis(trim(v)); },
        [](const RunConfig& c) { return std::string(to_string(c.train.encoder.attention_axis)); }}},
      KS_INT("heads.family_hidden", train.heads.family_hidden),
      KS_INT("heads.expert_hidden", train.heads.expert_hidden),
      KS_DOUBLE("contrastive.temperature", train.contrastive.temperature),
      KS_INT("contrastive.projection_hidden", train.contrastive.projection_hidden),
      KS_INT("contrastive.projection_dim", train.contrastive.projection_dim),
      KS_STRING("text_features.source", train.text_features.source),
      KS_INT("text_features.dim", train.text_features.dim),
      KS_DOUBLE("train.learning_rate", train.optimizer.learning_rate),
      {"train.optimizer", {[](RunConfig& c, std::string_view v) { c.train.optimizer.kind = parse_optimizer(trim(v)); },
                           [](const RunConfig& c) { return std::string(to_string(c.train.optimizer.kind)); }}},
      KS_DOUBLE("train.beta1", train.optimizer.beta1),
      KS_DOUBLE("train.beta2", train.optimizer.beta2),
      KS_DOUBLE("train.epsilon", train.optimizer.epsilon),
      KS_DOUBLE("train.weight_decay", train.optimizer.weight_decay),
      KS_INT("train.batch_size", train.batch_size),
      KS_INT("train.epochs", train.epochs),
      KS_DOUBLE("train.grad_clip", train.grad_clip),
      {"train.lr_schedule", {[](RunConfig& c, std::string_view v) { c.train.lr_schedule = parse_lr_schedule(trim(v)); },
                             [](const RunConfig& c) { return std::string(to_string(c.train.lr_schedule)); }}},
      KS_DOUBLE("train.lambda1", train.weights.lambda1),
      KS_DOUBLE("train.lambda2", train.weights.lambda2),
      KS_DOUBLE("train.lambda3", train.weights.lambda3),
      {"train.ablation", {[](RunConfig& c, std::string_view v) { c.train.ablation = parse_variant(trim(v)); },
                          [](const RunConfig& c) { return std::string(to_string(c.train.ablation)); }}},
      {"synth.family_means",
       {[](RunConfig& c, std::string_view v) {
          const auto d = to_doubles("synth.family_means", v);
          c.synth.family_signature.resize(d.size());
          for (std::size_t i = 0; i < d.size(); ++i) c.synth.family_signature[i].mean = d[i];
        },
        [](const RunConfig& c) {
          std::vector<double> d;
          for (const auto& p : c.synth.family_signature) d.push_back(p.mean);
          return join_num(d);
        }}},
      {"synth.family_rhos",
       {[](RunConfig& c, std::string_view v) {
          const auto d = to_doubles("synth.family_rhos", v);
          c.synth.family_signature.resize(d.size());
          for (std::size_t i = 0; i < d.size(); ++i) c.synth.family_signature[i].rho = d[i];
        },
        [](const RunConfig& c) {
          std::vector<double> d;
          for (const auto& p : c.synth.family_signature) d.push_back(p.rho);
          return join_num(d);
        }}},
      {"synth.family_sigmas",
       {[](RunConfig& c, std::string_view v) {
          const auto d = to_doubles("synth.family_sigmas", v);
          c.synth.family_signature.resize(d.size());
          for (std::size_t i = 0; i < d.size(); ++i) c.synth.family_signature[i].sigma = d[i];
        },
        [](const RunConfig& c) {
          std::vector<double> d;
          for (const auto& p : c.synth.family_signature) d.push_back(p.sigma);
          return join_num(d);
        }}},
      {"synth.human", {[](RunConfig& c, std::string_view v) { c.synth.human_signature = to_process("synth.human", v); },
                       [](const RunConfig& c) { return process(c.synth.human_signature); }}},
      {"synth.others",
       {[](RunConfig& c, std::string_view v) {
          if (trim(v).empty() || trim(v) == "none")
            c.synth.others_signature.reset();
          else
            c.synth.others_signature = to_process("synth.others", v);
        },
        [](const RunConfig& c) {
          return c.synth.others_signature ? process(*c.synth.others_signature) : std::string("none");
        }}},
      KS_DOUBLE("synth.attenuation", synth.cross_family_attenuation),
      KS_INT("synth.length_min", synth.length_min),
      KS_INT("synth.length_max", synth.length_max),
      {"synth.tokenizer_ratio",
       {[](RunConfig& c, std::string_view v) { c.synth.tokenizer_ratio = to_doubles("synth.tokenizer_ratio", v); },
        [](const RunConfig& c) { return join_num(c.synth.tokenizer_ratio); }}},
      KS_DOUBLE("synth.text_signal", synth.text_signal),
      {"bench.train_drifts",
       {[](RunConfig& c, std::string_view v) { c.bench_train_drifts = to_doubles("bench.train_drifts", v); },
        [](const RunConfig& c) { return join_num(c.bench_train_drifts); }}},
      KS_DOUBLE("bench.test_drift", bench_test_drift),
      KS_INT("bench.n_per_cell", bench_n_per_cell),
      KS_INT("bench.n_human_train", bench_n_human_train),
      KS_INT("bench.n_human_test", bench_n_human_test),
      KS_INT("bench.seeds", bench_seeds),
      {"bench.variants",
       {[](RunConfig& c, std::string_view v) {
          c.bench_variants.clear();
          for (const auto& s : to_list(v)) c.bench_variants.push_back(parse_variant(s));
        },
        [](const RunConfig& c) {
          std::vector<std::string> s;
          for (Variant x : c.bench_variants) s.emplace_back(to_string(x));
          return join(s);
        }}},
      {"decay.grid", {[](RunConfig& c, std::string_view v) { c.decay_grid = to_doubles("decay.grid", v); },
                      [](const RunConfig& c) { return join_num(c.decay_grid); }}},
      KS_INT("decay.n_train_per_family", decay_n_train_per_family),
      KS_INT("decay.n_train_human", decay_n_train_human),
      KS_INT("decay.n_test_per_level", decay_n_test_per_level),
      {"heatmap.drifts", {[](RunConfig& c, std::string_view v) { c.heatmap_drifts = to_doubles("heatmap.drifts", v); },
                          [](const RunConfig& c) { return join_num(c.heatmap_drifts); }}},
      KS_INT("heatmap.n_per_cell", heatmap_n_per_cell),
      KS_INT("heatmap.aligned_length", heatmap_aligned_length),
      {"heatmap.space", {[](RunConfig& c, std::string_view v) { c.heatmap_space = parse_similarity_space(trim(v)); },
                         [](const RunConfig& c) { return std::string(to_string(c.heatmap_space)); }}},
      KS_DOUBLE("eval.threshold", threshold),
      KS_DOUBLE("eval.fpr", fpr),
      KS_STRING("paths.manifest", manifest_path),
      KS_STRING("paths.scores", scores_path),
      KS_STRING("paths.checkpoint", checkpoint_path),
      KS_STRING("paths.output_dir", output_dir),
  };
  return table;
}

#undef KS_INT
#undef KS_DOUBLE
#undef KS_STRING

}  // namespace

FamilyRegistry RunConfig::registry() const {
  if (!tokenizers.empty() && tokenizers.size() != models.size())
    throw ConfigError("registry.tokenizers needs one entry per model");
  std::vector<BaseModelRef> refs;
  for (std::size_t i = 0; i < models.size(); ++i) refs.push_back({models[i], tokenizers.empty() ? models[i] : tokenizers[i]});
  return FamilyRegistry(std::move(refs), includes_others || synth.others_signature.has_value());
}

SyntheticFamilySpec RunConfig::synthetic_spec() const {
  SyntheticFamilySpec s = synth;
  s.families = models;
  s.validate();
  return s;
}

SimBenchmarkSpec RunConfig::benchmark_spec() const {
  SimBenchmarkSpec s;
  s.synth = synthetic_spec();
  s.train_drifts = bench_train_drifts;
  s.test_drift = bench_test_drift;
  s.n_per_cell = bench_n_per_cell;
  s.n_human_train = bench_n_human_train;
  s.n_human_test = bench_n_human_test;
  if (bench_seeds < 1) throw ConfigError("bench.seeds must be >= 1");
  s.seeds.clear();
  for (int i = 0; i < bench_seeds; ++i) s.seeds.push_back(seed + 1 + static_cast<std::uint64_t>(i));
  s.train = train;
  s.validate();
  return s;
}

DriftDecaySpec RunConfig::decay_spec() const {
  DriftDecaySpec s;
  s.synth = synthetic_spec();
  s.synth.others_signature.reset();
  s.grid = decay_grid;
  s.n_train_per_family = decay_n_train_per_family;
  s.n_train_human = decay_n_train_human;
  s.n_test_per_level = decay_n_test_per_level;
  s.train = train;
  s.seed = seed;
  return s;
}

HeatmapSpec RunConfig::heatmap_spec() const {
  HeatmapSpec s;
  s.synth = synthetic_spec();
  s.drifts = heatmap_drifts;
  s.n_per_cell = heatmap_n_per_cell;
  s.aligned_length = heatmap_aligned_length;
  s.space = heatmap_space;
  s.seed = seed;
  return s;
}

void set_config_value(RunConfig& config, std::string_view key, std::string_view value) {
  const auto& table = fields();
  auto it = table.find(trim(key));
  if (it == table.end()) throw ConfigError("unknown config key '" + std::string(trim(key)) + "'");
  it->second.set(config, value);
}

std::string get_config_value(const RunConfig& config, std::string_view key) {
  const auto& table = fields();
  auto it = table.find(trim(key));
  if (it == table.end()) throw ConfigError("unknown config key '" + std::string(trim(key)) + "'");
  return it->second.get(config);
}

std::vector<std::string> config_keys() {
  std::vector<std::string> out;
  for (const auto& [k, _] : fields()) out.push_back(k);
  return out;
}

RunConfig parse_run_config(std::string_view text, RunConfig base) {
  std::size_t pos = 0, line_no = 0;
  while (pos <= text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    auto line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos)
      throw ConfigError("config line " + std::to_string(line_no) + ": expected 'key = value'");
    try {
      set_config_value(base, line.substr(0, eq), line.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError("config line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return base;
}

RunConfig load_run_config(const std::filesystem::path& path) { return parse_run_config(read_text_file(path)); }

std::string dump_run_config(const RunConfig& config) {
  std::string out;
  for (const auto& [k, f] : fields()) out += k + " = " + f.get(config) + "\n";
  return out;
}

}  // namespace kinscope
