#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "eval/metrics.hpp"
#include "scorer/similarity.hpp"
#include "scorer/synthetic.hpp"
#include "trainer/train.hpp"

namespace kinscope {

/// Synthetic benchmark: train on drifts `train_drifts`, test on the unseen
/// `test_drift` cell plus tagged human test texts.
struct SimBenchmarkSpec {
  SyntheticFamilySpec synth;  // drift_levels is replaced by train_drifts + test_drift
  std::vector<double> train_drifts{0.0, 0.1, 0.2};
  double test_drift = 0.35;
  int n_per_cell = 100;
  int n_human_train = 300;
  int n_human_test = 300;
  /// Only with an others signature: "others" samples held out for test.
  int n_others_test = 0;
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  TrainConfig train;

  void validate() const;
  std::string heldout_domain() const { return drift_domain(test_drift); }
};

/// Desk-scale preset: the default architecture shape scaled down so that
/// the full ablation grid runs on one CPU core.
SimBenchmarkSpec s1_preset();
/// s1_preset plus a registry-external "others" family (extra gate category).
SimBenchmarkSpec s1_others_preset();

struct SimDataset {
  std::vector<LabeledSample> samples;
  std::map<std::string, TokenProbMatrix> matrices;
  FamilyRegistry registry;
  Partition partition;
};

SimDataset make_benchmark_data(const SimBenchmarkSpec& spec, std::uint64_t seed);

struct BenchmarkCell {
  Variant variant = Variant::full;
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  double f1_human = 0.0;
  double f1_generated = 0.0;
  double f1_macro = 0.0;
  double tpr_at_1pct_fpr = 0.0;
  /// Macro F1 on each family's generated test texts plus all test humans.
  std::map<std::string, double> subset_f1;
  double val_f1_macro = 0.0;
  std::vector<double> epoch_losses;

  bool operator==(const BenchmarkCell&) const = default;
};

struct BenchmarkRow {
  Variant variant = Variant::full;
  int seeds_ok = 0;
  std::map<std::string, std::pair<double, double>> metrics;  // name -> (mean, std)

  bool operator==(const BenchmarkRow&) const = default;
};

struct BenchmarkReport {
  std::string heldout_domain;
  std::vector<std::string> subsets;
  std::vector<BenchmarkCell> cells;
  std::vector<BenchmarkRow> rows;

  const BenchmarkRow* row(Variant v) const;
  bool operator==(const BenchmarkReport&) const = default;
};

using ProgressFn = std::function<void(const std::string&)>;

/// Trains every variant on every seed (data shared across variants per seed)
/// and evaluates on the unseen-drift test set. A failing cell is recorded with
/// its error and excluded from the row statistics.
BenchmarkReport run_benchmark(const SimBenchmarkSpec& spec, std::span<const Variant> variants,
                              const ProgressFn& progress = {});
/// Aggregates cells into per-variant mean/std rows (sample std, n-1).
std::vector<BenchmarkRow> aggregate_cells(std::span<const BenchmarkCell> cells, std::span<const Variant> variants);

nlohmann::json to_json(const BenchmarkReport& report);
BenchmarkReport benchmark_from_json(const nlohmann::json& j);
/// Variant x subset grid with mean and std columns.
std::string benchmark_csv(const BenchmarkReport& report);
void write_benchmark(const BenchmarkReport& report, const std::filesystem::path& dir);

// Detection decay under fine-tuning drift.

struct DriftDecaySpec {
  SyntheticFamilySpec synth;
  std::vector<double> grid{0.0, 0.2, 0.4, 0.8};
  int n_train_per_family = 150;
  int n_train_human = 450;
  /// Generated texts per grid level; the same number of fresh human texts is added.
  int n_test_per_level = 250;
  TrainConfig train;  // plain detector: single head, binary loss only
  std::uint64_t seed = 0;
};

DriftDecaySpec drift_decay_preset();

/// Binary detector trained on drift-0 data only.
struct PlainDetector {
  std::unique_ptr<DetectorModel> model;
  EvalReport val;
  bool trained = false;
};

PlainDetector train_plain_detector(const DriftDecaySpec& spec);

struct DriftCurve {
  std::vector<double> drift;
  std::vector<double> accuracy;  // 0-100
  double val_accuracy = 0.0;
  double spearman = 0.0;  // NaN for a single level
};

/// Accuracy per grid level on balanced slices. An untrained detector raises StateError.
DriftCurve drift_decay_experiment(const DriftDecaySpec& spec, const PlainDetector& detector);
void write_drift_curve(const DriftCurve& curve, const std::filesystem::path& dir);

// Family-similarity heatmap.

struct HeatmapSpec {
  SyntheticFamilySpec synth;
  std::vector<double> drifts{0.1, 0.3};
  int n_per_cell = 200;
  int aligned_length = 96;
  SimilaritySpace space = SimilaritySpace::prob;
  std::uint64_t seed = 0;
};

struct Heatmap {
  std::vector<std::string> families;
  std::vector<std::vector<double>> values;  // family x base model
  double gap = 0.0;
};

Heatmap similarity_heatmap(const HeatmapSpec& spec);
void write_heatmap(const Heatmap& heatmap, const std::filesystem::path& dir);

}  // namespace kinscope
