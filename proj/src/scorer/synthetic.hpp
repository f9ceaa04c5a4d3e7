#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "core/random.hpp"
#include "core/types.hpp"
#include "scorer/provider.hpp"

namespace kinscope {

/// Stationary AR(1) process in log-probability space.
struct ProcessParams {
  double mean = -1.0;
  double rho = 0.5;
  double sigma = 1.0;

  bool operator==(const ProcessParams&) const = default;
};

/// Family-trait simulator. A text from source family s at drift delta,
/// scored by base model b, follows the process
///   human + g * (signature_s - human),  g = (b == s ? 1 : attenuation) * max(0, 1 - delta)
/// (interpolated per parameter), squashed by min(., 0) and clipped.
/// Human text follows the human process under every base model.
struct SyntheticFamilySpec {
  std::vector<std::string> families{"llama", "gemma", "mistral"};
  std::vector<ProcessParams> family_signature{{-1.0, 0.30, 0.6}, {-1.2, 0.60, 0.7}, {-0.9, 0.80, 0.5}};
  ProcessParams human_signature{-3.0, 0.10, 3.0};
  /// Signature of generated text from models outside the registry; it is
  /// attenuated under every base model.
  std::optional<ProcessParams> others_signature;
  double cross_family_attenuation = 0.4;
  std::vector<double> drift_levels{0.0, 0.1, 0.2};
  int n_human = 0;
  int length_min = 48;
  int length_max = 96;
  /// Per-model token count relative to the text's base length (tokenizer effect).
  std::vector<double> tokenizer_ratio;
  /// Strength of the label signal carried by the pseudo-text vocabulary.
  double text_signal = 0.25;

  std::size_t n_families() const noexcept { return families.size(); }
  FamilyRegistry registry() const;
  ProcessParams row_params(std::optional<std::size_t> source, bool others, std::size_t base, double drift) const;
  void validate() const;
};

/// ft_domain tag of a drift level: "base" for 0, otherwise "d<drift>" with two decimals.
std::string drift_domain(double drift);
/// Inverse of drift_domain; nullopt for other strings.
std::optional<double> parse_drift_domain(std::string_view domain);

/// Which cell an unlabeled text is scored as.
struct SyntheticSource {
  std::optional<std::string> family;  // absent = human
  double drift = 0.0;
};

class SyntheticScoreProvider final : public ScoreProvider {
 public:
  SyntheticScoreProvider(SyntheticFamilySpec spec, std::uint64_t seed, SyntheticSource default_source = {});

  ProviderKind kind() const override { return ProviderKind::synthetic; }
  const FamilyRegistry& registry() const override { return registry_; }
  /// Uses the sample's family label and ft_domain (via parse_drift_domain or
  /// the domain map) to select the cell.
  TokenProbMatrix score(const LabeledSample& sample) const override;
  TokenProbMatrix score_text(std::string_view sample_id, std::string_view text) const override;

  TokenProbMatrix score_as(std::string_view sample_id, std::string_view text, const SyntheticSource& source) const;

  /// Explicit drift for ft_domain strings that are not "base"/"dX.XX".
  void set_domain_drift(const std::string& domain, double drift) { domain_drift_[domain] = drift; }
  const SyntheticFamilySpec& spec() const noexcept { return spec_; }

 private:
  SyntheticFamilySpec spec_;
  FamilyRegistry registry_;
  std::uint64_t seed_;
  SyntheticSource default_source_;
  std::map<std::string, double> domain_drift_;
};

struct SyntheticCorpus {
  std::vector<LabeledSample> samples;
  std::vector<TokenProbMatrix> matrices;
};

/// Emits n_per_cell generated samples for every (family, drift level) cell,
/// including an "others" family when an others signature is set, and
/// spec.n_human human samples. Split tags are left unset.
SyntheticCorpus synth_generate(const SyntheticFamilySpec& spec, int n_per_cell, std::uint64_t seed);

}  // namespace kinscope
