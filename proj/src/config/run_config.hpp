#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "eval/experiments.hpp"
#include "trainer/train.hpp"

namespace kinscope {

/// Every setting of a CLI run. Defaults are the full-scale settings;
/// desk-scale presets live in configs/*.cfg.
struct RunConfig {
  std::uint64_t seed = 0;

  std::vector<std::string> models{"llama", "gemma", "mistral"};
  std::vector<std::string> tokenizers;  // empty = model ids
  bool includes_others = false;

  std::string heldout_domain;  // empty = inferred from the manifest
  TrainConfig train;

  SyntheticFamilySpec synth;  // families follow `models`

  std::vector<double> bench_train_drifts{0.0, 0.1, 0.2};
  double bench_test_drift = 0.35;
  int bench_n_per_cell = 100;
  int bench_n_human_train = 300;
  int bench_n_human_test = 300;
  int bench_seeds = 5;
  std::vector<Variant> bench_variants{Variant::full, Variant::no_bfe, Variant::no_cl, Variant::no_moe};

  std::vector<double> decay_grid{0.0, 0.2, 0.4, 0.8};
  int decay_n_train_per_family = 150;
  int decay_n_train_human = 450;
  int decay_n_test_per_level = 250;

  std::vector<double> heatmap_drifts{0.1, 0.3};
  int heatmap_n_per_cell = 200;
  int heatmap_aligned_length = 96;
  SimilaritySpace heatmap_space = SimilaritySpace::prob;

  double threshold = 0.5;
  double fpr = 0.01;

  std::string manifest_path;
  std::string scores_path;
  std::string checkpoint_path;
  std::string output_dir = ".";

  FamilyRegistry registry() const;
  /// Synthetic spec with families and registry flags applied.
  SyntheticFamilySpec synthetic_spec() const;
  SimBenchmarkSpec benchmark_spec() const;
  DriftDecaySpec decay_spec() const;
  HeatmapSpec heatmap_spec() const;
};

/// Sets one key. Unknown keys and malformed values raise ConfigError.
void set_config_value(RunConfig& config, std::string_view key, std::string_view value);
std::string get_config_value(const RunConfig& config, std::string_view key);
std::vector<std::string> config_keys();

/// key = value lines; '#' starts a comment; blank lines are skipped.
/// Errors name the line number.
RunConfig parse_run_config(std::string_view text, RunConfig base = {});
RunConfig load_run_config(const std::filesystem::path& path);
std::string dump_run_config(const RunConfig& config);

}  // namespace kinscope
