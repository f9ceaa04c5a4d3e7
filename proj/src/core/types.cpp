#include "core/types.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <set>

#include "core/errors.hpp"

namespace kinscope {

const char* error_code_name(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::invalid_argument: return "invalid_argument";
    case ErrorCode::parse: return "parse";
    case ErrorCode::validation: return "validation";
    case ErrorCode::config: return "config";
    case ErrorCode::lookup: return "lookup";
    case ErrorCode::transport: return "transport";
    case ErrorCode::shape: return "shape";
    case ErrorCode::numeric: return "numeric";
    case ErrorCode::data: return "data";
    case ErrorCode::state: return "state";
    case ErrorCode::label: return "label";
    case ErrorCode::io: return "io";
  }
  return "unknown";
}

const char* to_string(BinaryLabel label) noexcept {
  return label == BinaryLabel::human ? "human" : "generated";
}

const char* to_string(Split split) noexcept {
  switch (split) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "train";
}

BinaryLabel parse_binary_label(std::string_view text) {
  if (text == "human") return BinaryLabel::human;
  if (text == "generated") return BinaryLabel::generated;
  throw ParseError("unknown binary_label '" + std::string(text) + "'");
}

Split parse_split(std::string_view text) {
  if (text == "train") return Split::train;
  if (text == "val") return Split::val;
  if (text == "test") return Split::test;
  throw ParseError("unknown split '" + std::string(text) + "'");
}

FamilyRegistry::FamilyRegistry(std::vector<BaseModelRef> models, bool includes_others)
    : models_(std::move(models)), includes_others_(includes_others) {
  if (models_.empty()) throw ConfigError("family registry needs at least one base model");
  std::set<std::string> seen;
  for (const auto& m : models_) {
    if (m.id.empty()) throw ConfigError("base model id must be non-empty");
    if (m.id == kOthersFamily) throw ConfigError("'others' is reserved and cannot name a base model");
    if (!seen.insert(m.id).second) throw ConfigError("duplicate base model id '" + m.id + "'");
  }
}

FamilyRegistry FamilyRegistry::from_ids(const std::vector<std::string>& ids, bool includes_others) {
  std::vector<BaseModelRef> refs;
  refs.reserve(ids.size());
  for (const auto& id : ids) refs.push_back({id, id});
  return FamilyRegistry(std::move(refs), includes_others);
}

std::optional<std::size_t> FamilyRegistry::family_index(std::string_view label) const {
  for (std::size_t i = 0; i < models_.size(); ++i)
    if (models_[i].id == label) return i;
  if (includes_others_ && label == kOthersFamily) return models_.size();
  return std::nullopt;
}

std::string FamilyRegistry::family_name(std::size_t index) const {
  if (index < models_.size()) return models_[index].id;
  if (includes_others_ && index == models_.size()) return std::string(kOthersFamily);
  throw LabelError("family index " + std::to_string(index) + " outside label space");
}

std::vector<std::string> FamilyRegistry::family_names() const {
  std::vector<std::string> names;
  for (std::size_t i = 0; i < family_count(); ++i) names.push_back(family_name(i));
  return names;
}

std::size_t FamilyRegistry::model_index(std::string_view model_id) const {
  for (std::size_t i = 0; i < models_.size(); ++i)
    if (models_[i].id == model_id) return i;
  throw LookupError("unknown base model '" + std::string(model_id) + "'");
}

void validate_sample(const LabeledSample& sample) {
  const auto fail = [&](const std::string& why) {
    throw ValidationError("sample '" + sample.id + "': " + why);
  };
  if (sample.id.empty()) throw ValidationError("sample with empty id");
  const bool blank = std::all_of(sample.text.begin(), sample.text.end(),
                                 [](unsigned char c) { return std::isspace(c) != 0; });
  if (blank) fail("text is empty after trimming");
  if (sample.binary_label == BinaryLabel::human && sample.family_label)
    fail("human sample carries a family_label");
  if (sample.binary_label == BinaryLabel::generated && !sample.family_label)
    fail("generated sample is missing family_label");
}

TokenProbMatrix TokenProbMatrix::from_rows(std::string sample_id, std::vector<std::vector<double>> rows) {
  TokenProbMatrix m;
  m.sample_id = std::move(sample_id);
  m.mask.reserve(rows.size());
  for (const auto& r : rows) m.mask.emplace_back(r.size(), std::uint8_t{1});
  m.logprobs = std::move(rows);
  return m;
}

void validate_matrix(const TokenProbMatrix& matrix, std::size_t expected_models) {
  const auto fail = [&](const std::string& why) {
    throw ValidationError("score matrix '" + matrix.sample_id + "': " + why);
  };
  if (matrix.logprobs.size() != expected_models)
    fail("expected " + std::to_string(expected_models) + " model rows, got " +
         std::to_string(matrix.logprobs.size()));
  if (matrix.mask.size() != matrix.logprobs.size()) fail("mask row count differs from logprob rows");
  for (std::size_t i = 0; i < matrix.logprobs.size(); ++i) {
    const auto& row = matrix.logprobs[i];
    if (matrix.mask[i].size() != row.size()) fail("mask length differs in row " + std::to_string(i));
    if (matrix.is_aligned() && row.size() != matrix.aligned_length)
      fail("row " + std::to_string(i) + " not at aligned length");
    for (double v : row)
      if (!(v <= 0.0) || !std::isfinite(v)) fail("log-probability outside (-inf, 0]");
  }
}

double clip_logprob(double value) {
  if (std::isnan(value)) throw DataError("NaN log-probability");
  return std::clamp(value, kMinLogProb, kMaxLogProb);
}

}  // namespace kinscope
