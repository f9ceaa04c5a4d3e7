#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>
#include <set>

#include "core/errors.hpp"
#include "eval/experiments.hpp"
#include "eval/metrics.hpp"
#include "eval/plot.hpp"
#include "test_util.hpp"

namespace kinscope {
namespace {

constexpr auto G = BinaryLabel::generated;
constexpr auto H = BinaryLabel::human;

std::vector<ScoredLabel> uniform_instance(std::uint64_t seed, int n_h = 100, int n_g = 100) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> low(0.0, 0.5), high(0.5, 1.0);
  std::vector<ScoredLabel> v;
  for (int i = 0; i < n_h; ++i) v.push_back({low(rng), H});
  for (int i = 0; i < n_g; ++i) v.push_back({high(rng), G});
  return v;
}

/// Tries every distinct score (and +inf) as the threshold.
double tpr_sweep_oracle(const std::vector<ScoredLabel>& s, double budget) {
  std::set<double> candidates{std::numeric_limits<double>::infinity()};
  for (const auto& x : s) candidates.insert(x.score);
  double n_h = 0, n_g = 0;
  for (const auto& x : s) (x.label == G ? n_g : n_h) += 1;
  for (double t : candidates) {  // ascending: first feasible is the smallest
    double fp = 0, tp = 0;
    for (const auto& x : s)
      if (x.score >= t) (x.label == G ? tp : fp) += 1;
    if (fp / n_h <= budget) return tp / n_g;
  }
  return 0.0;
}

// ---- binary metrics ----

TEST(BinaryMetrics, PerfectSeparation) {
  const std::vector<ScoredLabel> s{{0.9, G}, {0.7, G}, {0.1, H}, {0.3, H}};
  const auto r = binary_metrics(s);
  EXPECT_EQ(r.f1_human, 100.0);
  EXPECT_EQ(r.f1_generated, 100.0);
  EXPECT_EQ(r.f1_macro, 100.0);
  EXPECT_TRUE(r.degenerate.empty());
}

TEST(BinaryMetrics, HandConfusion) {
  const std::vector<ScoredLabel> s{{0.9, G}, {0.8, G}, {0.4, G}, {0.2, H}};
  const auto r = binary_metrics(s);
  // generated: tp 2, fp 0, fn 1 -> P 1, R 2/3
  EXPECT_NEAR(r.f1_generated, 80.0, 1e-9);
  // human: tp 1, fp 1, fn 0 -> P 1/2, R 1
  EXPECT_NEAR(r.f1_human, 200.0 / 3.0, 1e-9);
  EXPECT_NEAR(r.f1_macro, (r.f1_human + r.f1_generated) / 2, 1e-9);
  EXPECT_EQ(r.confusion.true_generated, 2u);
  EXPECT_EQ(r.confusion.false_human, 1u);
  EXPECT_EQ(r.confusion.true_human, 1u);
  EXPECT_EQ(r.confusion.total(), 4u);
  EXPECT_NEAR(r.accuracy, 75.0, 1e-9);
}

TEST(BinaryMetrics, AllGeneratedFlagsHuman) {
  const std::vector<ScoredLabel> s{{0.9, G}, {0.8, H}, {0.6, H}};
  const auto r = binary_metrics(s);
  EXPECT_EQ(r.f1_human, 0.0);
  EXPECT_NE(std::find(r.degenerate.begin(), r.degenerate.end(), "human"), r.degenerate.end());
}

TEST(BinaryMetrics, ThresholdBoundaries) {
  const auto s = uniform_instance(3, 20, 20);
  const auto all_gen = binary_metrics(s, 0.0);
  EXPECT_EQ(all_gen.confusion.true_generated + all_gen.confusion.false_generated, 40u);
  const auto all_hum = binary_metrics(s, 1.5);
  EXPECT_EQ(all_hum.confusion.true_human + all_hum.confusion.false_human, 40u);
  EXPECT_EQ(all_hum.threshold, 1.5);
}

TEST(BinaryMetrics, PermutationInvariant) {
  auto s = uniform_instance(4, 30, 40);
  for (auto& x : s) x.score = std::clamp(x.score + 0.2 * std::sin(x.score * 50), 0.0, 1.0);
  const auto a = binary_metrics(s);
  const double tpr = tpr_at_fpr(s, 0.05);
  std::mt19937_64 rng(5);
  std::shuffle(s.begin(), s.end(), rng);
  const auto b = binary_metrics(s);
  EXPECT_EQ(a.f1_macro, b.f1_macro);
  EXPECT_NEAR(a.log_loss, b.log_loss, 1e-12);
  EXPECT_EQ(tpr_at_fpr(s, 0.05), tpr);
}

TEST(BinaryMetrics, EmptyRejected) {
  EXPECT_THROW(binary_metrics(std::vector<ScoredLabel>{}), DataError);
}

TEST(BinaryMetrics, LogLossOracle) {
  const std::vector<ScoredLabel> s{{0.9, G}, {0.2, H}, {0.6, H}};
  const double expected = -(std::log(0.9) + std::log(0.8) + std::log(0.4)) / 3.0;
  EXPECT_NEAR(binary_metrics(s).log_loss, expected, 1e-12);
}

// ---- TPR at FPR ----

TEST(TprAtFpr, PerfectSeparation) { EXPECT_EQ(tpr_at_fpr(uniform_instance(1), 0.01), 1.0); }

TEST(TprAtFpr, MatchesExhaustiveSweep) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto s = uniform_instance(seed);
    // Overlapping instance so the budget binds.
    std::mt19937_64 rng(seed + 100);
    std::normal_distribution<double> g(0.0, 0.2);
    for (auto& x : s) x.score = std::round((x.score + g(rng)) * 50.0) / 50.0;  // ties on purpose
    for (double budget : {0.01, 0.05, 0.2}) EXPECT_EQ(tpr_at_fpr(s, budget), tpr_sweep_oracle(s, budget)) << seed;
  }
}

TEST(TprAtFpr, MonotoneInBudget) {
  auto s = uniform_instance(7);
  std::mt19937_64 rng(8);
  std::normal_distribution<double> g(0.0, 0.3);
  for (auto& x : s) x.score += g(rng);
  double previous = 0.0;
  for (double budget : {0.001, 0.01, 0.05, 0.1, 0.3, 0.6, 0.9}) {
    const double t = tpr_at_fpr(s, budget);
    EXPECT_GE(t, previous);
    previous = t;
  }
}

TEST(TprAtFpr, GeneratedBelowEveryHuman) {
  const std::vector<ScoredLabel> s{{0.1, G}, {0.2, G}, {0.5, H}, {0.6, H}};
  EXPECT_EQ(tpr_at_fpr(s, 0.01), 0.0);
}

TEST(TprAtFpr, Errors) {
  const auto s = uniform_instance(1, 5, 5);
  EXPECT_THROW(tpr_at_fpr(s, 0.0), ConfigError);
  EXPECT_THROW(tpr_at_fpr(s, 1.0), ConfigError);
  EXPECT_THROW(tpr_at_fpr(s, -0.1), ConfigError);
  const std::vector<ScoredLabel> one{{0.4, G}};
  EXPECT_THROW(tpr_at_fpr(one, 0.01), DataError);
}

// ---- family metrics ----

FamilyPrediction one_hot(std::size_t k, std::size_t n) {
  FamilyPrediction p{std::vector<double>(n, 0.1 / static_cast<double>(n))};
  p.probs[k] += 0.9;
  return p;
}

TEST(FamilyMetrics, AllCorrect) {
  std::vector<FamilyPrediction> p;
  std::vector<std::size_t> labels;
  for (std::size_t i = 0; i < 9; ++i) {
    p.push_back(one_hot(i % 3, 3));
    labels.push_back(i % 3);
  }
  const auto m = family_metrics(p, labels, 3);
  for (double f : m.f1) EXPECT_EQ(f, 100.0);
  EXPECT_EQ(m.macro, 100.0);
}

TEST(FamilyMetrics, AlwaysConfusedFamilyScoresZero) {
  std::vector<FamilyPrediction> p;
  std::vector<std::size_t> labels;
  for (std::size_t i = 0; i < 9; ++i) {
    labels.push_back(i % 3);
    p.push_back(one_hot(i % 3 == 2 ? 0 : i % 3, 3));
  }
  const auto m = family_metrics(p, labels, 3);
  EXPECT_EQ(m.f1[2], 0.0);
  EXPECT_EQ(m.f1[1], 100.0);
}

TEST(FamilyMetrics, RandomConfusionOracle) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 4;
    std::vector<FamilyPrediction> p;
    std::vector<std::size_t> labels;
    std::vector<std::vector<double>> cm(n, std::vector<double>(n, 0.0));
    for (int i = 0; i < 120; ++i) {
      const std::size_t truth = rng() % n;
      const std::size_t guess = rng() % 3 == 0 ? rng() % n : truth;
      labels.push_back(truth);
      p.push_back(one_hot(guess, n));
      cm[truth][guess] += 1;
    }
    const auto m = family_metrics(p, labels, n);
    double macro = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      double row = 0, col = 0;
      for (std::size_t j = 0; j < n; ++j) row += cm[k][j], col += cm[j][k];
      const double prec = cm[k][k] / col, rec = cm[k][k] / row;
      const double f1 = prec + rec > 0 ? 200.0 * prec * rec / (prec + rec) : 0.0;
      EXPECT_NEAR(m.f1[k], f1, 1e-9);
      macro += f1 / n;
    }
    EXPECT_NEAR(m.macro, macro, 1e-9);
  }
}

TEST(FamilyMetrics, UnsupportedLabelExcluded) {
  const std::vector<FamilyPrediction> p{one_hot(0, 3), one_hot(1, 3)};
  const std::vector<std::size_t> labels{0, 1};
  const auto m = family_metrics(p, labels, 3);
  EXPECT_EQ(m.excluded, (std::vector<std::size_t>{2}));
  EXPECT_EQ(m.macro, 100.0);
}

TEST(FamilyMetrics, PermutationInvariant) {
  std::mt19937_64 rng(3);
  std::vector<std::pair<FamilyPrediction, std::size_t>> items;
  for (int i = 0; i < 50; ++i) items.push_back({one_hot(rng() % 3, 3), rng() % 3});
  auto run = [&] {
    std::vector<FamilyPrediction> p;
    std::vector<std::size_t> l;
    for (const auto& [a, b] : items) p.push_back(a), l.push_back(b);
    return family_metrics(p, l, 3);
  };
  const auto a = run();
  std::shuffle(items.begin(), items.end(), rng);
  const auto b = run();
  EXPECT_EQ(a.f1, b.f1);
}

TEST(FamilyMetrics, Errors) {
  const std::vector<FamilyPrediction> p{one_hot(0, 3)};
  const std::vector<std::size_t> bad{3};
  EXPECT_THROW(family_metrics(p, bad, 3), LabelError);
  const std::vector<std::size_t> two{0, 1};
  EXPECT_THROW(family_metrics(p, two, 3), ShapeError);
}

// ---- spearman ----

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  const double n = static_cast<double>(a.size());
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) ma += a[i] / n, mb += b[i] / n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

TEST(Spearman, DistinctValues) {
  const std::vector<double> x{1, 2, 3, 4}, y{10, 30, 20, 40};
  EXPECT_NEAR(spearman(x, y), 0.8, 1e-12);
  const std::vector<double> z{4, 3, 2, 1};
  EXPECT_NEAR(spearman(x, z), -1.0, 1e-12);
}

TEST(Spearman, TiesUseAverageRanks) {
  const std::vector<double> x{0.0, 0.2, 0.4, 0.8}, y{90, 85, 85, 60};
  EXPECT_NEAR(spearman(x, y), pearson({1, 2, 3, 4}, {4, 2.5, 2.5, 1}), 1e-12);
}

TEST(Spearman, ConstantSideIsNaN) {
  const std::vector<double> x{1, 2, 3}, y{5, 5, 5};
  EXPECT_TRUE(std::isnan(spearman(x, y)));
}

// ---- experiments ----

SimBenchmarkSpec tiny_benchmark() {
  SimBenchmarkSpec s;
  s.train = testing::tiny_config();
  s.n_per_cell = 6;
  s.n_human_train = 24;
  s.n_human_test = 12;
  s.seeds = {1};
  s.synth.length_min = 12;
  s.synth.length_max = 20;
  return s;
}

TEST(Benchmark, SingleVariantSingleSeed) {
  const Variant v[] = {Variant::full};
  const auto r = run_benchmark(tiny_benchmark(), v);
  ASSERT_EQ(r.rows.size(), 1u);
  EXPECT_EQ(r.rows[0].seeds_ok, 1);
  ASSERT_EQ(r.cells.size(), 1u);
  EXPECT_TRUE(r.cells[0].ok);
  EXPECT_EQ(r.heldout_domain, "d0.35");
  EXPECT_EQ(r.cells[0].epoch_losses.size(), 2u);
}

TEST(Benchmark, FailingVariantAnnotated) {
  auto spec = tiny_benchmark();
  spec.train.text_features.dim = 0;  // only the text-feature variant needs this
  const Variant v[] = {Variant::full, Variant::no_bfe};
  const auto r = run_benchmark(spec, v);
  ASSERT_EQ(r.cells.size(), 2u);
  EXPECT_TRUE(r.cells[0].ok);
  EXPECT_FALSE(r.cells[1].ok);
  EXPECT_FALSE(r.cells[1].error.empty());
  EXPECT_EQ(r.row(Variant::no_bfe)->seeds_ok, 0);
}

TEST(Benchmark, TestDriftMustBeUnseen) {
  auto spec = tiny_benchmark();
  spec.test_drift = 0.1;
  EXPECT_THROW(spec.validate(), ConfigError);
}

TEST(Benchmark, HeldoutCellOnlyInTest) {
  const auto data = make_benchmark_data(tiny_benchmark(), 3);
  for (const auto& s : data.partition.train) EXPECT_NE(s.ft_domain.value_or(""), "d0.35");
  for (const auto& s : data.partition.val) EXPECT_NE(s.ft_domain.value_or(""), "d0.35");
  int heldout = 0;
  for (const auto& s : data.partition.test) heldout += s.ft_domain.value_or("") == "d0.35";
  EXPECT_EQ(heldout, 18);
}

TEST(Benchmark, ReportRoundTripAndFiles) {
  const Variant v[] = {Variant::full, Variant::no_moe};
  auto spec = tiny_benchmark();
  spec.seeds = {1, 2};
  const auto r = run_benchmark(spec, v);
  EXPECT_EQ(benchmark_from_json(nlohmann::json::parse(to_json(r).dump())), r);
  testing::TempDir dir("eval");
  write_benchmark(r, dir.path());
  EXPECT_TRUE(std::filesystem::exists(dir.path() / "benchmark.json"));
  std::ifstream csv(dir.path() / "benchmark.csv");
  std::string header, line;
  std::getline(csv, header);
  int rows = 0;
  while (std::getline(csv, line)) rows += !line.empty();
  EXPECT_EQ(rows, 2);
  EXPECT_NE(header.find("f1_macro"), std::string::npos);
}

TEST(Benchmark, AggregateUsesSampleStd) {
  std::vector<BenchmarkCell> cells(3);
  const double f[] = {80, 90, 100};
  for (int i = 0; i < 3; ++i) {
    cells[i].ok = true;
    cells[i].seed = i;
    cells[i].f1_macro = f[i];
  }
  const Variant v[] = {Variant::full};
  const auto rows = aggregate_cells(cells, v);
  const auto [mean, sd] = rows[0].metrics.at("f1_macro");
  EXPECT_NEAR(mean, 90.0, 1e-12);
  EXPECT_NEAR(sd, 10.0, 1e-12);
}

DriftDecaySpec small_decay() {
  auto s = drift_decay_preset();
  s.train = testing::tiny_config();
  s.train.ablation = Variant::no_moe;
  s.train.weights = {0.0, 1.0, 0.0};
  s.n_train_per_family = 10;
  s.n_train_human = 30;
  s.n_test_per_level = 30;
  s.synth.length_min = 12;
  s.synth.length_max = 20;
  return s;
}

TEST(DriftDecay, UntrainedDetectorRejected) {
  EXPECT_THROW(drift_decay_experiment(small_decay(), PlainDetector{}), StateError);
}

TEST(DriftDecay, SingleLevelCurve) {
  auto spec = small_decay();
  spec.grid = {0.3};
  const auto det = train_plain_detector(spec);
  const auto curve = drift_decay_experiment(spec, det);
  ASSERT_EQ(curve.drift.size(), 1u);
  EXPECT_EQ(curve.drift[0], 0.3);
  EXPECT_TRUE(std::isnan(curve.spearman));
  testing::TempDir dir("decay");
  write_drift_curve(curve, dir.path());
  EXPECT_TRUE(std::filesystem::exists(dir.path() / "drift_decay.csv"));
  EXPECT_TRUE(std::filesystem::exists(dir.path() / "drift_decay.svg"));
}

TEST(DriftDecay, DriftZeroMatchesValidationAccuracy) {
  auto spec = drift_decay_preset();
  spec.grid = {0.0};
  spec.seed = 1;
  const auto det = train_plain_detector(spec);
  const auto curve = drift_decay_experiment(spec, det);
  EXPECT_NEAR(curve.accuracy[0], curve.val_accuracy, 5.0);
}

TEST(Heatmap, FilesWritten) {
  HeatmapSpec spec;
  spec.n_per_cell = 10;
  const auto h = similarity_heatmap(spec);
  ASSERT_EQ(h.values.size(), 3u);
  testing::TempDir dir("heatmap");
  write_heatmap(h, dir.path());
  for (const char* f : {"similarity_heatmap.csv", "similarity_heatmap.svg", "similarity_heatmap.json"})
    EXPECT_TRUE(std::filesystem::exists(dir.path() / f)) << f;
}

TEST(Plot, SvgIsWellFormed) {
  const auto svg = line_chart_svg({0, 0.2, 0.4}, {90, 80, 70}, "t", "x", "y");
  EXPECT_EQ(svg.rfind("<svg", 0), 0u);
  EXPECT_NE(svg.find("</svg>"), std::string::npos);
  const auto hm = heatmap_svg({{0.1, 0.2}, {0.3, 0.4}}, {"a", "b"}, {"c", "d"}, "h");
  EXPECT_NE(hm.find("</svg>"), std::string::npos);
}

}  // namespace
}  // namespace kinscope
