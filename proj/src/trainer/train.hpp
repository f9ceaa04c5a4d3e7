#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "core/dataset.hpp"
#include "eval/metrics.hpp"
#include "scorer/provider.hpp"
#include "trainer/loss.hpp"
#include "trainer/model.hpp"
#include "trainer/optimizer.hpp"

namespace kinscope {

enum class LrSchedule : std::uint8_t { constant, linear };

const char* to_string(LrSchedule s) noexcept;
LrSchedule parse_lr_schedule(std::string_view text);

struct TrainConfig {
  OptimizerConfig optimizer;  // learning rate 2e-5, Adam (0.9, 0.999, 1e-8)
  int batch_size = 32;
  int epochs = 10;
  double grad_clip = 1.0;  // global norm; 0 disables
  LrSchedule lr_schedule = LrSchedule::constant;
  std::uint64_t seed = 0;
  double val_fraction = 0.1;
  LossWeights weights;
  Variant ablation = Variant::full;
  EncoderConfig encoder;
  ContrastiveConfig contrastive;
  HeadConfig heads;
  TextFeatureConfig text_features;

  /// Effective loss weights (no_cl forces lambda3 = 0).
  LossWeights effective_weights() const;
  void validate() const;
};

/// Assembles the model for cfg.ablation. Unknown variants cannot be
/// represented; invalid settings raise ConfigError.
std::unique_ptr<DetectorModel> build_variant(const TrainConfig& cfg, const FamilyRegistry& registry);

struct EpochLog {
  int epoch = 0;  // 1-based
  LossBundle train;  // means over the epoch's batches
  EvalReport val;
};

struct TrainResult {
  std::unique_ptr<DetectorModel> model;  // best validation checkpoint
  std::vector<EpochLog> epochs;
  int best_epoch = 0;
  EvalReport best_val;
};

struct TrainOptions {
  /// When set, the best checkpoint so far is written here after each
  /// improving epoch; after a divergence it still holds the last good state.
  std::optional<std::filesystem::path> checkpoint_path;
  std::function<void(const EpochLog&)> on_epoch;
};

/// Splits the manifest (held-out domain to test), prepares train/val samples
/// through the provider and trains.
TrainResult train(const DatasetManifest& data, const ScoreProvider& scores, const TrainConfig& cfg,
                  const TrainOptions& options = {});

/// Trains an already built model on prepared samples. Deterministic given
/// cfg.seed. Divergence (non-finite loss) restores the best parameters so far
/// and raises NumericError.
TrainResult train_prepared(std::unique_ptr<DetectorModel> model, std::span<const PreparedSample> train_set,
                           std::span<const PreparedSample> val_set, const TrainConfig& cfg,
                           const TrainOptions& options = {});

std::vector<PreparedSample> prepare_all(const DetectorModel& model, std::span<const LabeledSample> samples,
                                        const ScoreProvider* provider);

/// Binary metrics (threshold 0.5 unless given) of the model on prepared samples.
EvalReport evaluate(const DetectorModel& model, std::span<const PreparedSample> samples, double threshold = 0.5);

nlohmann::json to_json(const LossBundle& b);
nlohmann::json to_json(const EvalReport& r);
nlohmann::json to_json(const TrainConfig& c);
nlohmann::json training_report(const TrainResult& result, const TrainConfig& cfg);

}  // namespace kinscope
