#include "scorer/synthetic.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>

#include "core/errors.hpp"
#include "core/random.hpp"

namespace kinscope {

namespace {

// Exact at both endpoints.
double lerp(double from, double to, double g) { return (1.0 - g) * from + g * to; }

constexpr int kVocabulary = 400;
constexpr double kZipfExponent = 1.1;

const std::vector<std::string>& vocabulary() {
  static const std::vector<std::string> words = [] {
    static const char* onsets[] = {"b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "sh", "tr"};
    static const char* vowels[] = {"a", "e", "i", "o", "u"};
    std::vector<std::string> w;
    std::mt19937_64 rng(20240601);
    while (static_cast<int>(w.size()) < kVocabulary) {
      std::string word;
      const int syllables = 1 + static_cast<int>(rng() % 3);
      for (int s = 0; s < syllables; ++s) {
        word += onsets[rng() % 16];
        word += vowels[rng() % 5];
      }
      if (std::find(w.begin(), w.end(), word) == w.end()) w.push_back(word);
    }
    return w;
  }();
  return words;
}

/// Zipf rank distribution shared by all sources; each source permutes ranks.
std::discrete_distribution<int>& zipf() {
  thread_local std::discrete_distribution<int> dist = [] {
    std::vector<double> weights(kVocabulary);
    for (int r = 0; r < kVocabulary; ++r) weights[r] = 1.0 / std::pow(r + 1.0, kZipfExponent);
    return std::discrete_distribution<int>(weights.begin(), weights.end());
  }();
  return dist;
}

std::vector<int> source_permutation(std::uint64_t salt) {
  std::vector<int> perm(kVocabulary);
  std::iota(perm.begin(), perm.end(), 0);
  std::mt19937_64 rng(salt);
  std::shuffle(perm.begin(), perm.end(), rng);
  return perm;
}

std::string make_text(std::mt19937_64& rng, int length, const std::vector<int>& human_perm,
                      const std::vector<int>* source_perm, double source_weight) {
  const auto& vocab = vocabulary();
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  std::string text;
  for (int i = 0; i < length; ++i) {
    const int rank = zipf()(rng);
    const bool from_source = source_perm && coin(rng) < source_weight;
    const auto& perm = from_source ? *source_perm : human_perm;
    if (i) text += ' ';
    text += vocab[perm[rank]];
  }
  text += '.';
  return text;
}

int word_count(std::string_view text) {
  int n = 0;
  bool in_word = false;
  for (unsigned char c : text) {
    const bool alnum = std::isalnum(c) != 0;
    if (alnum && !in_word) ++n;
    in_word = alnum;
  }
  return n;
}

}  // namespace

FamilyRegistry SyntheticFamilySpec::registry() const {
  return FamilyRegistry::from_ids(families, others_signature.has_value());
}

void SyntheticFamilySpec::validate() const {
  if (families.empty()) throw ConfigError("synthetic spec needs at least one family");
  if (family_signature.size() != families.size())
    throw ConfigError("synth: one family signature per family is required");
  auto check = [](const ProcessParams& p, const std::string& who) {
    if (!(p.sigma > 0.0)) throw ConfigError("synth: non-positive process variance for " + who);
    if (!(p.rho > -1.0 && p.rho < 1.0)) throw ConfigError("synth: autocorrelation of " + who + " must lie in (-1, 1)");
    if (!std::isfinite(p.mean)) throw ConfigError("synth: non-finite mean for " + who);
  };
  for (std::size_t i = 0; i < families.size(); ++i) check(family_signature[i], families[i]);
  check(human_signature, "human");
  if (others_signature) check(*others_signature, "others");
  if (!(cross_family_attenuation > 0.0 && cross_family_attenuation <= 1.0))
    throw ConfigError("synth: cross_family_attenuation must lie in (0, 1]");
  for (double d : drift_levels)
    if (!(d >= 0.0)) throw ConfigError("synth: drift levels must be >= 0");
  if (n_human < 0) throw ConfigError("synth: n_human must be >= 0");
  if (length_min < 1 || length_max < length_min) throw ConfigError("synth: invalid length range");
  if (!tokenizer_ratio.empty() && tokenizer_ratio.size() != families.size())
    throw ConfigError("synth: tokenizer_ratio needs one entry per base model");
  for (double r : tokenizer_ratio)
    if (!(r > 0.0)) throw ConfigError("synth: tokenizer ratios must be positive");
  if (!(text_signal >= 0.0 && text_signal <= 1.0)) throw ConfigError("synth: text_signal must lie in [0, 1]");
}

ProcessParams SyntheticFamilySpec::row_params(std::optional<std::size_t> source, bool others, std::size_t base,
                                              double drift) const {
  if (!source && !others) return human_signature;
  const ProcessParams& sig = others ? *others_signature : family_signature.at(*source);
  const bool own = !others && *source == base;
  const double g = (own ? 1.0 : cross_family_attenuation) * std::max(0.0, 1.0 - drift);
  return {lerp(human_signature.mean, sig.mean, g), lerp(human_signature.rho, sig.rho, g),
          lerp(human_signature.sigma, sig.sigma, g)};
}

std::string drift_domain(double drift) {
  if (drift == 0.0) return "base";
  char buf[32];
  std::snprintf(buf, sizeof buf, "d%.2f", drift);
  return buf;
}

std::optional<double> parse_drift_domain(std::string_view domain) {
  if (domain == "base") return 0.0;
  if (domain.size() < 2 || domain[0] != 'd') return std::nullopt;
  try {
    std::size_t used = 0;
    const std::string rest(domain.substr(1));
    const double v = std::stod(rest, &used);
    if (used != rest.size() || v < 0.0) return std::nullopt;
    return v;
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

SyntheticScoreProvider::SyntheticScoreProvider(SyntheticFamilySpec spec, std::uint64_t seed,
                                               SyntheticSource default_source)
    : spec_(std::move(spec)), seed_(seed), default_source_(std::move(default_source)) {
  spec_.validate();
  registry_ = spec_.registry();
}

TokenProbMatrix SyntheticScoreProvider::score(const LabeledSample& sample) const {
  if (!sample.is_generated()) return score_as(sample.id, sample.text, {});
  SyntheticSource source{sample.family_label, 0.0};
  if (sample.ft_domain) {
    auto it = domain_drift_.find(*sample.ft_domain);
    if (it != domain_drift_.end()) {
      source.drift = it->second;
    } else if (auto d = parse_drift_domain(*sample.ft_domain)) {
      source.drift = *d;
    } else {
      throw ConfigError("synthetic provider: no drift known for ft_domain '" + *sample.ft_domain + "'");
    }
  }
  return score_as(sample.id, sample.text, source);
}

TokenProbMatrix SyntheticScoreProvider::score_text(std::string_view sample_id, std::string_view text) const {
  return score_as(sample_id, text, default_source_);
}

TokenProbMatrix SyntheticScoreProvider::score_as(std::string_view sample_id, std::string_view text,
                                                 const SyntheticSource& source) const {
  std::optional<std::size_t> family;
  bool others = false;
  if (source.family) {
    if (*source.family == kOthersFamily) {
      if (!spec_.others_signature) throw ConfigError("synthetic provider has no 'others' signature");
      others = true;
    } else {
      family = registry_.model_index(*source.family);
    }
  }
  const int base_len = std::max(1, word_count(text));
  const std::uint64_t text_seed = derive_seed(seed_, text);
  std::vector<std::vector<double>> rows;
  rows.reserve(registry_.model_count());
  for (std::size_t b = 0; b < registry_.model_count(); ++b) {
    const auto p = spec_.row_params(family, others, b, source.drift);
    const double ratio = spec_.tokenizer_ratio.empty() ? 1.0 : spec_.tokenizer_ratio[b];
    const auto n = static_cast<std::size_t>(std::max(1L, std::lround(base_len * ratio)));
    std::mt19937_64 rng(derive_seed(text_seed, registry_.models()[b].id));
    std::normal_distribution<double> normal(0.0, 1.0);
    const double innovation = std::sqrt(1.0 - p.rho * p.rho);
    std::vector<double> row(n);
    double z = normal(rng);
    for (std::size_t t = 0; t < n; ++t) {
      if (t) z = p.rho * z + innovation * normal(rng);
      row[t] = clip_logprob(std::min(p.mean + p.sigma * z, 0.0));
    }
    rows.push_back(std::move(row));
  }
  return TokenProbMatrix::from_rows(std::string(sample_id), std::move(rows));
}

SyntheticCorpus synth_generate(const SyntheticFamilySpec& spec, int n_per_cell, std::uint64_t seed) {
  if (n_per_cell < 1) throw ConfigError("n_per_cell must be >= 1");
  spec.validate();
  SyntheticScoreProvider provider(spec, seed);
  const auto human_perm = source_permutation(derive_seed(0, "human-vocabulary"));
  SyntheticCorpus corpus;

  auto emit = [&](LabeledSample s) {
    corpus.matrices.push_back(provider.score(s));
    corpus.samples.push_back(std::move(s));
  };
  auto text_for = [&](const std::string& id, const std::vector<int>* perm, double weight) {
    std::mt19937_64 rng(derive_seed(seed, "text/" + id));
    std::uniform_int_distribution<int> len(spec.length_min, spec.length_max);
    const int n = len(rng);
    return make_text(rng, n, human_perm, perm, weight);
  };

  char idx[16];
  for (std::size_t f = 0; f < spec.n_families(); ++f) {
    const auto perm = source_permutation(derive_seed(0, "vocabulary/" + spec.families[f]));
    for (double drift : spec.drift_levels) {
      for (int i = 0; i < n_per_cell; ++i) {
        std::snprintf(idx, sizeof idx, "%05d", i);
        LabeledSample s;
        s.id = "g-" + spec.families[f] + "-" + drift_domain(drift) + "-" + idx;
        s.text = text_for(s.id, &perm, spec.text_signal * std::max(0.0, 1.0 - drift));
        s.binary_label = BinaryLabel::generated;
        s.family_label = spec.families[f];
        s.ft_domain = drift_domain(drift);
        emit(std::move(s));
      }
    }
  }
  if (spec.others_signature) {
    const auto perm = source_permutation(derive_seed(0, "vocabulary/others"));
    for (double drift : spec.drift_levels) {
      for (int i = 0; i < n_per_cell; ++i) {
        std::snprintf(idx, sizeof idx, "%05d", i);
        LabeledSample s;
        s.id = "g-others-" + drift_domain(drift) + "-" + idx;
        s.text = text_for(s.id, &perm, spec.text_signal * std::max(0.0, 1.0 - drift));
        s.binary_label = BinaryLabel::generated;
        s.family_label = std::string(kOthersFamily);
        s.ft_domain = drift_domain(drift);
        emit(std::move(s));
      }
    }
  }
  for (int i = 0; i < spec.n_human; ++i) {
    std::snprintf(idx, sizeof idx, "%05d", i);
    LabeledSample s;
    s.id = std::string("h-") + idx;
    s.text = text_for(s.id, nullptr, 0.0);
    emit(std::move(s));
  }
  return corpus;
}

}  // namespace kinscope
