#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace kinscope {

/// Log-probabilities are stored clamped to this range on ingestion.
inline constexpr double kMinLogProb = -30.0;
inline constexpr double kMaxLogProb = 0.0;

/// Family label used for generated text from models outside the registry.
inline constexpr std::string_view kOthersFamily = "others";

enum class BinaryLabel : std::uint8_t { human, generated };
enum class Split : std::uint8_t { train, val, test };

const char* to_string(BinaryLabel label) noexcept;
const char* to_string(Split split) noexcept;
BinaryLabel parse_binary_label(std::string_view text);
Split parse_split(std::string_view text);

struct BaseModelRef {
  std::string id;
  std::string tokenizer;

  bool operator==(const BaseModelRef&) const = default;
};

/// Ordered set of base models. Family labels are the lowercase model ids,
/// with an optional trailing "others" category.
class FamilyRegistry {
 public:
  FamilyRegistry() = default;
  FamilyRegistry(std::vector<BaseModelRef> models, bool includes_others);

  /// Convenience: tokenizer id defaults to the model id.
  static FamilyRegistry from_ids(const std::vector<std::string>& ids, bool includes_others);

  std::size_t model_count() const noexcept { return models_.size(); }
  std::size_t family_count() const noexcept { return models_.size() + (includes_others_ ? 1 : 0); }
  bool includes_others() const noexcept { return includes_others_; }
  const std::vector<BaseModelRef>& models() const noexcept { return models_; }

  /// Index into the family label space; nullopt if unknown.
  std::optional<std::size_t> family_index(std::string_view label) const;
  std::string family_name(std::size_t index) const;
  std::vector<std::string> family_names() const;

  std::size_t model_index(std::string_view model_id) const;

  bool operator==(const FamilyRegistry&) const = default;

 private:
  std::vector<BaseModelRef> models_;
  bool includes_others_ = false;
};

struct LabeledSample {
  std::string id;
  std::string text;
  BinaryLabel binary_label = BinaryLabel::human;
  std::optional<std::string> family_label;
  std::optional<std::string> ft_domain;
  std::optional<Split> split;

  bool is_generated() const noexcept { return binary_label == BinaryLabel::generated; }
  bool operator==(const LabeledSample&) const = default;
};

/// Throws ValidationError naming the sample id when the label invariants break.
void validate_sample(const LabeledSample& sample);

/// Per-model log-probability rows for one text. Before alignment every mask
/// entry is true and rows may differ in length.
struct TokenProbMatrix {
  std::string sample_id;
  std::vector<std::vector<double>> logprobs;
  std::vector<std::vector<std::uint8_t>> mask;
  std::size_t aligned_length = 0;  // 0 while unaligned

  std::size_t model_count() const noexcept { return logprobs.size(); }
  bool is_aligned() const noexcept { return aligned_length > 0; }

  /// Builds an unaligned matrix with all-true masks.
  static TokenProbMatrix from_rows(std::string sample_id, std::vector<std::vector<double>> rows);

  bool operator==(const TokenProbMatrix&) const = default;
};

/// Checks value range, mask shape and (if aligned) equal row lengths.
void validate_matrix(const TokenProbMatrix& matrix, std::size_t expected_models);

/// Clamps to [kMinLogProb, kMaxLogProb]; -inf maps to the floor. NaN throws DataError.
double clip_logprob(double value);

}  // namespace kinscope
