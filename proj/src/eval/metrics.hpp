#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "core/types.hpp"
#include "family/family.hpp"

namespace kinscope {

struct ScoredLabel {
  double score = 0.0;  // y_B
  BinaryLabel label = BinaryLabel::human;
};

struct Confusion {
  std::size_t true_generated = 0;   // generated predicted generated
  std::size_t false_generated = 0;  // human predicted generated
  std::size_t true_human = 0;
  std::size_t false_human = 0;      // generated predicted human

  std::size_t total() const noexcept { return true_generated + false_generated + true_human + false_human; }
};

/// F1 values are on a 0-100 scale.
struct EvalReport {
  double f1_human = 0.0;
  double f1_generated = 0.0;
  double f1_macro = 0.0;
  double accuracy = 0.0;
  /// Mean binary cross-entropy of the scores (1e-12 log floor).
  double log_loss = 0.0;
  std::optional<double> tpr_at_1pct_fpr;
  std::map<std::string, double> per_family_f1;
  Confusion confusion;
  double threshold = 0.5;
  /// Classes whose F1 is undefined or forced to 0 (absent, or never predicted).
  std::vector<std::string> degenerate;
};

/// Scores >= threshold count as generated. Empty input raises DataError.
EvalReport binary_metrics(std::span<const ScoredLabel> scores, double threshold = 0.5);

/// TPR at the smallest threshold whose human false-positive rate is within
/// the budget (>= convention, descending sweep over distinct scores).
/// Needs both classes; budget outside (0, 1) raises ConfigError.
double tpr_at_fpr(std::span<const ScoredLabel> scores, double fpr_budget = 0.01);

/// F1 of `positive` against everything else, 0-100, from raw counts; 0 when undefined.
double f1_score(std::size_t tp, std::size_t fp, std::size_t fn);

struct FamilyMetrics {
  std::vector<double> f1;            // per label index, 0-100
  std::vector<std::size_t> support;  // true count per label
  double macro = 0.0;                // over labels with support > 0
  std::vector<std::size_t> excluded; // labels without support
};

/// Argmax-decision F1 per family. Labels outside [0, n_families) raise LabelError.
FamilyMetrics family_metrics(std::span<const FamilyPrediction> preds, std::span<const std::size_t> labels,
                             std::size_t n_families);

/// Spearman rank correlation with average ranks for ties; NaN if either side is constant.
double spearman(std::span<const double> x, std::span<const double> y);

}  // namespace kinscope
