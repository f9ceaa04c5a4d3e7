#include "core/dataset.hpp"

#include <algorithm>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include <json.hpp>

#include "core/errors.hpp"
#include "core/io.hpp"

namespace kinscope {

namespace {

using nlohmann::json;

std::optional<std::string> optional_string(const json& obj, const char* key, std::size_t line_no) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return std::nullopt;
  if (!it->is_string())
    throw ParseError("line " + std::to_string(line_no) + ": key '" + key + "' must be a string or null");
  return it->get<std::string>();
}

std::string required_string(const json& obj, const char* key, std::size_t line_no) {
  auto value = optional_string(obj, key, line_no);
  if (!value) throw ParseError("line " + std::to_string(line_no) + ": missing key '" + key + "'");
  return *value;
}

LabeledSample sample_from_json(const json& obj, std::size_t line_no) {
  if (!obj.is_object()) throw ParseError("line " + std::to_string(line_no) + ": expected a JSON object");
  static const std::set<std::string> known = {"id", "text", "binary_label", "family_label", "ft_domain", "split"};
  for (const auto& [key, _] : obj.items())
    if (!known.count(key)) throw ParseError("line " + std::to_string(line_no) + ": unknown key '" + key + "'");
  LabeledSample s;
  s.id = required_string(obj, "id", line_no);
  s.text = required_string(obj, "text", line_no);
  try {
    s.binary_label = parse_binary_label(required_string(obj, "binary_label", line_no));
    if (auto split = optional_string(obj, "split", line_no)) s.split = parse_split(*split);
  } catch (const ParseError& e) {
    throw ParseError("line " + std::to_string(line_no) + ": " + e.what());
  }
  s.family_label = optional_string(obj, "family_label", line_no);
  s.ft_domain = optional_string(obj, "ft_domain", line_no);
  return s;
}

json sample_to_json(const LabeledSample& s) {
  json obj;
  obj["id"] = s.id;
  obj["text"] = s.text;
  obj["binary_label"] = to_string(s.binary_label);
  obj["family_label"] = s.family_label ? json(*s.family_label) : json(nullptr);
  obj["ft_domain"] = s.ft_domain ? json(*s.ft_domain) : json(nullptr);
  obj["split"] = s.split ? json(to_string(*s.split)) : json(nullptr);
  return obj;
}

FamilyRegistry infer_registry(const std::vector<LabeledSample>& samples) {
  std::vector<std::string> ids;
  bool others = false;
  for (const auto& s : samples) {
    if (!s.family_label) continue;
    if (*s.family_label == kOthersFamily) {
      others = true;
    } else if (std::find(ids.begin(), ids.end(), *s.family_label) == ids.end()) {
      ids.push_back(*s.family_label);
    }
  }
  if (ids.empty()) throw ValidationError("cannot infer a family registry: no generated samples");
  return FamilyRegistry::from_ids(ids, others);
}

std::string infer_heldout(const std::vector<LabeledSample>& samples) {
  std::set<std::string> domains;
  for (const auto& s : samples)
    if (s.is_generated() && s.split == Split::test && s.ft_domain) domains.insert(*s.ft_domain);
  if (domains.size() == 1) return *domains.begin();
  return {};
}

}  // namespace

DatasetManifest parse_dataset(std::string_view jsonl, const LoadOptions& options) {
  DatasetManifest manifest;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= jsonl.size()) {
    auto end = jsonl.find('\n', pos);
    if (end == std::string_view::npos) end = jsonl.size();
    auto line = jsonl.substr(pos, end - pos);
    ++line_no;
    pos = end + 1;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.find_first_not_of(" \t") == std::string_view::npos) {
      if (end == jsonl.size()) break;
      continue;
    }
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError("line " + std::to_string(line_no) + ": malformed JSON (" + e.what() + ")");
    }
    manifest.samples.push_back(sample_from_json(obj, line_no));
    if (end == jsonl.size()) break;
  }
  for (const auto& s : manifest.samples) validate_sample(s);
  manifest.registry = options.registry ? *options.registry : infer_registry(manifest.samples);
  manifest.heldout_domain = options.heldout_domain ? *options.heldout_domain : infer_heldout(manifest.samples);
  validate_manifest(manifest);
  return manifest;
}

DatasetManifest load_dataset(const std::filesystem::path& path, const LoadOptions& options) {
  return parse_dataset(read_text_file(path), options);
}

void validate_manifest(const DatasetManifest& manifest) {
  std::set<std::string> ids;
  for (const auto& s : manifest.samples) {
    validate_sample(s);
    if (!ids.insert(s.id).second) throw ValidationError("sample '" + s.id + "': duplicate id");
    if (s.family_label && !manifest.registry.family_index(*s.family_label))
      throw ValidationError("sample '" + s.id + "': family_label '" + *s.family_label +
                            "' is not in the registry");
    if (!s.is_generated() || !s.split) continue;
    const bool in_heldout = s.ft_domain && *s.ft_domain == manifest.heldout_domain;
    if (*s.split == Split::test && !manifest.heldout_domain.empty() && !in_heldout)
      throw ValidationError("sample '" + s.id + "': test-split generated sample outside heldout domain '" +
                            manifest.heldout_domain + "'");
    if (*s.split != Split::test && in_heldout)
      throw ValidationError("sample '" + s.id + "': heldout-domain sample tagged " + to_string(*s.split));
  }
}

std::string serialize_manifest(const DatasetManifest& manifest) {
  std::string out;
  for (const auto& s : manifest.samples) {
    out += sample_to_json(s).dump();
    out += '\n';
  }
  return out;
}

void save_dataset(const DatasetManifest& manifest, const std::filesystem::path& path) {
  write_file_atomic(path, serialize_manifest(manifest));
}

std::pair<std::vector<LabeledSample>, std::vector<LabeledSample>> stratified_split(
    const std::vector<LabeledSample>& samples, double val_fraction, std::uint64_t seed) {
  if (!(val_fraction > 0.0 && val_fraction < 1.0)) throw ConfigError("val_fraction must lie in (0, 1)");
  // Strata keyed by (label, family); std::map keeps iteration order fixed.
  std::map<std::pair<int, std::string>, std::vector<std::size_t>> strata;
  for (std::size_t i = 0; i < samples.size(); ++i)
    strata[{static_cast<int>(samples[i].binary_label), samples[i].family_label.value_or("")}].push_back(i);
  std::pair<std::vector<LabeledSample>, std::vector<LabeledSample>> out;
  std::mt19937_64 rng(seed);
  for (auto& [key, members] : strata) {
    std::shuffle(members.begin(), members.end(), rng);
    const auto n_val = static_cast<std::size_t>(std::llround(val_fraction * static_cast<double>(members.size())));
    for (std::size_t k = 0; k < members.size(); ++k) {
      auto s = samples[members[k]];
      s.split = k < n_val ? Split::val : Split::train;
      (k < n_val ? out.second : out.first).push_back(std::move(s));
    }
  }
  return out;
}

Partition split_by_unseen_domain(const std::vector<LabeledSample>& samples, const std::string& heldout_domain,
                                 double val_fraction, std::uint64_t seed) {
  if (!(val_fraction > 0.0 && val_fraction < 1.0))
    throw ConfigError("val_fraction must lie in (0, 1)");
  const bool present = std::any_of(samples.begin(), samples.end(), [&](const LabeledSample& s) {
    return s.is_generated() && s.ft_domain && *s.ft_domain == heldout_domain;
  });
  if (!present) throw ConfigError("heldout domain '" + heldout_domain + "' has no generated samples");

  Partition out;
  std::vector<LabeledSample> untagged;
  for (const auto& s : samples) {
    const bool in_heldout = s.is_generated() && s.ft_domain && *s.ft_domain == heldout_domain;
    if (in_heldout) {
      if (s.split && *s.split != Split::test)
        throw ValidationError("sample '" + s.id + "': heldout-domain sample tagged " + to_string(*s.split));
      out.test.push_back(s);
      continue;
    }
    if (s.split) {
      if (*s.split == Split::test && s.is_generated())
        throw ValidationError("sample '" + s.id + "': test-split generated sample outside heldout domain");
      auto& dst = *s.split == Split::train ? out.train : *s.split == Split::val ? out.val : out.test;
      dst.push_back(s);
      continue;
    }
    untagged.push_back(s);
  }
  auto [train, val] = stratified_split(untagged, val_fraction, seed);
  for (auto& s : train) out.train.push_back(std::move(s));
  for (auto& s : val) out.val.push_back(std::move(s));
  for (auto& s : out.test) s.split = Split::test;
  return out;
}

}  // namespace kinscope
