#pragma once

#include <functional>
#include <string>
#include <string_view>

#include "config/run_config.hpp"

namespace kinscope::app {

/// Receives progress lines (and detection JSON lines for detect).
using LineSink = std::function<void(std::string_view)>;

/// Writes a synthetic benchmark corpus: manifest.jsonl and scores.jsonl.
void run_synth(const RunConfig& cfg, const LineSink& out);
/// Scores paths.manifest with the synthetic provider into scores.jsonl.
void run_score(const RunConfig& cfg, const LineSink& out);
/// Trains on paths.manifest + paths.scores; writes checkpoint.ckpt and training_report.json.
void run_train(const RunConfig& cfg, const LineSink& out);
/// Emits one JSON verdict per manifest sample; also writes detections.jsonl.
void run_detect(const RunConfig& cfg, const LineSink& out);
/// Test-split metrics of a checkpoint; writes eval_report.json.
void run_eval(const RunConfig& cfg, const LineSink& out);
/// Variant x seed grid on the synthetic benchmark; writes benchmark.json/csv.
void run_benchmark(const RunConfig& cfg, const LineSink& out);
/// mode "drift" (accuracy vs drift) or "heatmap" (family similarity).
void run_simulate(const RunConfig& cfg, std::string_view mode, const LineSink& out);

}  // namespace kinscope::app
