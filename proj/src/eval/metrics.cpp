#include "eval/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "core/errors.hpp"

namespace kinscope {

double f1_score(std::size_t tp, std::size_t fp, std::size_t fn) {
  const std::size_t denom = 2 * tp + fp + fn;
  return denom == 0 ? 0.0 : 100.0 * static_cast<double>(2 * tp) / static_cast<double>(denom);
}

EvalReport binary_metrics(std::span<const ScoredLabel> scores, double threshold) {
  if (scores.empty()) throw DataError("binary metrics on an empty score list");
  EvalReport r;
  r.threshold = threshold;
  auto& c = r.confusion;
  for (const auto& s : scores) {
    if (std::isnan(s.score)) throw NumericError("NaN detection score");
    const bool predicted_generated = s.score >= threshold;
    r.log_loss += s.label == BinaryLabel::generated ? -std::log(std::max(s.score, 1e-12))
                                                    : -std::log(std::max(1.0 - s.score, 1e-12));
    if (s.label == BinaryLabel::generated)
      ++(predicted_generated ? c.true_generated : c.false_human);
    else
      ++(predicted_generated ? c.false_generated : c.true_human);
  }
  r.log_loss /= static_cast<double>(scores.size());
  r.f1_generated = f1_score(c.true_generated, c.false_generated, c.false_human);
  r.f1_human = f1_score(c.true_human, c.false_human, c.false_generated);
  r.f1_macro = (r.f1_human + r.f1_generated) / 2.0;
  r.accuracy = 100.0 * static_cast<double>(c.true_generated + c.true_human) / static_cast<double>(c.total());
  const std::size_t n_gen = c.true_generated + c.false_human, n_hum = c.true_human + c.false_generated;
  if (n_hum == 0 || c.true_human + c.false_human == 0) r.degenerate.emplace_back("human");
  if (n_gen == 0 || c.true_generated + c.false_generated == 0) r.degenerate.emplace_back("generated");
  if (n_gen > 0 && n_hum > 0) r.tpr_at_1pct_fpr = tpr_at_fpr(scores, 0.01);
  return r;
}

double tpr_at_fpr(std::span<const ScoredLabel> scores, double fpr_budget) {
  if (!(fpr_budget > 0.0 && fpr_budget < 1.0)) throw ConfigError("fpr budget must lie in (0, 1)");
  std::vector<ScoredLabel> sorted(scores.begin(), scores.end());
  std::size_t n_gen = 0, n_hum = 0;
  for (const auto& s : sorted) {
    if (std::isnan(s.score)) throw NumericError("NaN detection score");
    ++(s.label == BinaryLabel::generated ? n_gen : n_hum);
  }
  if (n_gen == 0 || n_hum == 0) throw DataError("TPR at FPR needs both human and generated samples");
  std::sort(sorted.begin(), sorted.end(), [](const ScoredLabel& a, const ScoredLabel& b) { return a.score > b.score; });
  double best = 0.0;
  std::size_t tp = 0, fp = 0;
  for (std::size_t i = 0; i < sorted.size();) {
    std::size_t j = i;
    while (j < sorted.size() && sorted[j].score == sorted[i].score) {
      ++(sorted[j].label == BinaryLabel::generated ? tp : fp);
      ++j;
    }
    if (static_cast<double>(fp) / static_cast<double>(n_hum) > fpr_budget) break;
    best = static_cast<double>(tp) / static_cast<double>(n_gen);
    i = j;
  }
  return best;
}

FamilyMetrics family_metrics(std::span<const FamilyPrediction> preds, std::span<const std::size_t> labels,
                             std::size_t n_families) {
  if (preds.size() != labels.size()) throw ShapeError("one label per family prediction is required");
  if (preds.empty()) throw DataError("family metrics on an empty prediction list");
  std::vector<std::size_t> tp(n_families, 0), fp(n_families, 0), fn(n_families, 0);
  FamilyMetrics m;
  m.support.assign(n_families, 0);
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (labels[i] >= n_families) throw LabelError("family label " + std::to_string(labels[i]) + " out of range");
    if (preds[i].size() != n_families) throw ShapeError("family prediction size differs from label space");
    const std::size_t guess = preds[i].argmax();
    ++m.support[labels[i]];
    if (guess == labels[i]) {
      ++tp[guess];
    } else {
      ++fp[guess];
      ++fn[labels[i]];
    }
  }
  double sum = 0.0;
  std::size_t counted = 0;
  for (std::size_t k = 0; k < n_families; ++k) {
    m.f1.push_back(f1_score(tp[k], fp[k], fn[k]));
    if (m.support[k] == 0) {
      m.excluded.push_back(k);
    } else {
      sum += m.f1.back();
      ++counted;
    }
  }
  m.macro = counted ? sum / static_cast<double>(counted) : 0.0;
  return m;
}

namespace {

std::vector<double> average_ranks(std::span<const double> v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && v[order[j]] == v[order[i]]) ++j;
    const double rank = (static_cast<double>(i) + static_cast<double>(j - 1)) / 2.0 + 1.0;
    for (std::size_t k = i; k < j; ++k) ranks[order[k]] = rank;
    i = j;
  }
  return ranks;
}

}  // namespace

double spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw ShapeError("spearman inputs differ in length");
  if (x.size() < 2) return std::numeric_limits<double>::quiet_NaN();
  const auto rx = average_ranks(x), ry = average_ranks(y);
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n, my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return std::numeric_limits<double>::quiet_NaN();
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace kinscope
