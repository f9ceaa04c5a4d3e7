#include "eval/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "core/errors.hpp"
#include "core/io.hpp"
#include "core/random.hpp"
#include "encoder/encoder.hpp"
#include "eval/plot.hpp"

namespace kinscope {

using nlohmann::json;

namespace {

TrainConfig desk_train_config() {
  TrainConfig t;
  t.encoder.d = 16;
  t.encoder.aligned_length = 96;
  t.encoder.conv_channels = {8, 16, 16};
  t.encoder.kernel_sizes = {5, 3, 3};
  t.encoder.transformer_layers = 2;
  t.encoder.attention_heads = 4;
  t.encoder.ff_dim = 32;
  t.contrastive.projection_hidden = 32;
  t.contrastive.projection_dim = 16;
  t.heads.family_hidden = 32;
  t.heads.expert_hidden = 32;
  t.text_features.dim = 256;
  t.optimizer.learning_rate = 1e-3;
  t.batch_size = 32;
  t.epochs = 10;
  return t;
}

std::vector<PreparedSample> prepare_from(const DetectorModel& model, const std::vector<LabeledSample>& samples,
                                         const std::map<std::string, TokenProbMatrix>& matrices) {
  std::vector<PreparedSample> out;
  out.reserve(samples.size());
  for (const auto& s : samples) {
    auto it = matrices.find(s.id);
    if (it == matrices.end()) throw LookupError("no scores for sample '" + s.id + "'");
    out.push_back(model.prepare(s, it->second));
  }
  return out;
}

std::pair<double, double> mean_std(const std::vector<double>& v) {
  if (v.empty()) return {std::nan(""), std::nan("")};
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  if (v.size() < 2) return {mean, 0.0};
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return {mean, std::sqrt(ss / static_cast<double>(v.size() - 1))};
}

}  // namespace

void SimBenchmarkSpec::validate() const {
  synth.validate();
  if (train_drifts.empty()) throw ConfigError("benchmark needs at least one training drift level");
  for (double d : train_drifts)
    if (drift_domain(d) == drift_domain(test_drift))
      throw ConfigError("test drift " + drift_domain(test_drift) + " also appears among the training drifts");
  if (n_per_cell < 1 || n_human_train < 1 || n_human_test < 1) throw ConfigError("benchmark cell sizes must be >= 1");
  if (seeds.empty()) throw ConfigError("benchmark needs at least one seed");
  train.validate();
}

SimBenchmarkSpec s1_preset() {
  SimBenchmarkSpec s;
  s.train = desk_train_config();
  return s;
}

SimBenchmarkSpec s1_others_preset() {
  SimBenchmarkSpec s = s1_preset();
  s.synth.others_signature = ProcessParams{-1.1, 0.45, 0.55};
  return s;
}

SimDataset make_benchmark_data(const SimBenchmarkSpec& spec, std::uint64_t seed) {
  spec.validate();
  SyntheticFamilySpec synth = spec.synth;
  synth.drift_levels = spec.train_drifts;
  synth.drift_levels.push_back(spec.test_drift);
  synth.n_human = spec.n_human_train + spec.n_human_test;
  auto corpus = synth_generate(synth, spec.n_per_cell, seed);
  SimDataset data;
  data.registry = synth.registry();
  int humans = 0;
  for (std::size_t i = 0; i < corpus.samples.size(); ++i) {
    auto& s = corpus.samples[i];
    if (!s.is_generated() && humans++ < spec.n_human_test) s.split = Split::test;
    data.matrices.emplace(s.id, std::move(corpus.matrices[i]));
  }
  data.samples = std::move(corpus.samples);
  data.partition = split_by_unseen_domain(data.samples, spec.heldout_domain(), spec.train.val_fraction, seed);
  return data;
}

const BenchmarkRow* BenchmarkReport::row(Variant v) const {
  for (const auto& r : rows)
    if (r.variant == v) return &r;
  return nullptr;
}

std::vector<BenchmarkRow> aggregate_cells(std::span<const BenchmarkCell> cells, std::span<const Variant> variants) {
  std::vector<BenchmarkRow> rows;
  for (Variant v : variants) {
    BenchmarkRow row;
    row.variant = v;
    std::map<std::string, std::vector<double>> series;
    for (const auto& c : cells) {
      if (c.variant != v || !c.ok) continue;
      ++row.seeds_ok;
      series["f1_human"].push_back(c.f1_human);
      series["f1_generated"].push_back(c.f1_generated);
      series["f1_macro"].push_back(c.f1_macro);
      series["tpr_at_1pct_fpr"].push_back(c.tpr_at_1pct_fpr);
      for (const auto& [name, f1] : c.subset_f1) series["subset_" + name].push_back(f1);
    }
    for (const auto& [name, values] : series) row.metrics[name] = mean_std(values);
    rows.push_back(std::move(row));
  }
  return rows;
}

BenchmarkReport run_benchmark(const SimBenchmarkSpec& spec, std::span<const Variant> variants,
                              const ProgressFn& progress) {
  spec.validate();
  if (variants.empty()) throw ConfigError("no variants to benchmark");
  BenchmarkReport report;
  report.heldout_domain = spec.heldout_domain();
  report.subsets = spec.synth.registry().family_names();
  for (std::uint64_t seed : spec.seeds) {
    const auto data = make_benchmark_data(spec, seed);
    for (Variant v : variants) {
      BenchmarkCell cell;
      cell.variant = v;
      cell.seed = seed;
      try {
        TrainConfig cfg = spec.train;
        cfg.ablation = v;
        cfg.seed = seed;
        auto model = build_variant(cfg, data.registry);
        const auto train_set = prepare_from(*model, data.partition.train, data.matrices);
        const auto val_set = prepare_from(*model, data.partition.val, data.matrices);
        const auto test_set = prepare_from(*model, data.partition.test, data.matrices);
        auto result = train_prepared(std::move(model), train_set, val_set, cfg);
        const auto preds = result.model->predict(test_set);
        std::vector<ScoredLabel> all;
        std::map<std::string, std::vector<ScoredLabel>> subsets;
        std::vector<ScoredLabel> humans;
        for (std::size_t i = 0; i < preds.size(); ++i) {
          const ScoredLabel sl{preds[i].y_b, test_set[i].label};
          all.push_back(sl);
          if (test_set[i].family >= 0)
            subsets[data.registry.family_name(static_cast<std::size_t>(test_set[i].family))].push_back(sl);
          else
            humans.push_back(sl);
        }
        const auto rep = binary_metrics(all);
        cell.f1_human = rep.f1_human;
        cell.f1_generated = rep.f1_generated;
        cell.f1_macro = rep.f1_macro;
        cell.tpr_at_1pct_fpr = rep.tpr_at_1pct_fpr.value_or(0.0);
        for (auto& [name, scored] : subsets) {
          scored.insert(scored.end(), humans.begin(), humans.end());
          cell.subset_f1[name] = binary_metrics(scored).f1_macro;
        }
        cell.val_f1_macro = result.best_val.f1_macro;
        for (const auto& e : result.epochs) cell.epoch_losses.push_back(e.train.total);
        cell.ok = true;
      } catch (const std::exception& e) {
        cell.ok = false;
        cell.error = e.what();
      }
      if (progress) {
        char buf[160];
        std::snprintf(buf, sizeof buf, "seed %llu variant %s: %s macro F1 %.2f", static_cast<unsigned long long>(seed),
                      to_string(v), cell.ok ? "ok" : "FAILED", cell.f1_macro);
        progress(cell.ok ? std::string(buf) : std::string(buf) + " (" + cell.error + ")");
      }
      report.cells.push_back(std::move(cell));
    }
  }
  report.rows = aggregate_cells(report.cells, variants);
  return report;
}

json to_json(const BenchmarkReport& report) {
  json cells = json::array();
  for (const auto& c : report.cells) {
    json j = {{"variant", to_string(c.variant)}, {"seed", c.seed},       {"ok", c.ok},
              {"error", c.error},                {"f1_human", c.f1_human}, {"f1_generated", c.f1_generated},
              {"f1_macro", c.f1_macro},          {"tpr_at_1pct_fpr", c.tpr_at_1pct_fpr},
              {"subset_f1", c.subset_f1},        {"val_f1_macro", c.val_f1_macro},
              {"epoch_losses", c.epoch_losses}};
    cells.push_back(std::move(j));
  }
  json rows = json::array();
  for (const auto& r : report.rows) {
    json metrics = json::object();
    for (const auto& [name, ms] : r.metrics) metrics[name] = {{"mean", ms.first}, {"std", ms.second}};
    rows.push_back({{"variant", to_string(r.variant)}, {"seeds_ok", r.seeds_ok}, {"metrics", metrics}});
  }
  return {{"heldout_domain", report.heldout_domain}, {"subsets", report.subsets}, {"cells", cells}, {"rows", rows}};
}

BenchmarkReport benchmark_from_json(const json& j) {
  try {
    BenchmarkReport r;
    r.heldout_domain = j.at("heldout_domain").get<std::string>();
    r.subsets = j.at("subsets").get<std::vector<std::string>>();
    for (const auto& c : j.at("cells")) {
      BenchmarkCell cell;
      cell.variant = parse_variant(c.at("variant").get<std::string>());
      cell.seed = c.at("seed");
      cell.ok = c.at("ok");
      cell.error = c.at("error").get<std::string>();
      cell.f1_human = c.at("f1_human");
      cell.f1_generated = c.at("f1_generated");
      cell.f1_macro = c.at("f1_macro");
      cell.tpr_at_1pct_fpr = c.at("tpr_at_1pct_fpr");
      cell.subset_f1 = c.at("subset_f1").get<std::map<std::string, double>>();
      cell.val_f1_macro = c.at("val_f1_macro");
      cell.epoch_losses = c.at("epoch_losses").get<std::vector<double>>();
      r.cells.push_back(std::move(cell));
    }
    for (const auto& row : j.at("rows")) {
      BenchmarkRow br;
      br.variant = parse_variant(row.at("variant").get<std::string>());
      br.seeds_ok = row.at("seeds_ok");
      for (const auto& [name, ms] : row.at("metrics").items())
        br.metrics[name] = {ms.at("mean").get<double>(), ms.at("std").get<double>()};
      r.rows.push_back(std::move(br));
    }
    return r;
  } catch (const json::exception& e) {
    throw ParseError(std::string("benchmark report: ") + e.what());
  }
}

std::string benchmark_csv(const BenchmarkReport& report) {
  std::vector<std::string> columns;
  for (const auto& s : report.subsets) columns.push_back("subset_" + s);
  for (const char* c : {"f1_human", "f1_generated", "f1_macro", "tpr_at_1pct_fpr"}) columns.emplace_back(c);
  std::string out = "variant,seeds_ok";
  for (const auto& c : columns) out += "," + c + "_mean," + c + "_std";
  out += '\n';
  for (const auto& r : report.rows) {
    out += std::string(to_string(r.variant)) + "," + std::to_string(r.seeds_ok);
    for (const auto& c : columns) {
      auto it = r.metrics.find(c);
      if (it == r.metrics.end())
        out += ",,";
      else
        out += "," + format_double(it->second.first) + "," + format_double(it->second.second);
    }
    out += '\n';
  }
  return out;
}

void write_benchmark(const BenchmarkReport& report, const std::filesystem::path& dir) {
  write_file_atomic(dir / "benchmark.json", to_json(report).dump(2) + "\n");
  write_file_atomic(dir / "benchmark.csv", benchmark_csv(report));
}

DriftDecaySpec drift_decay_preset() {
  DriftDecaySpec s;
  s.train = desk_train_config();
  s.train.ablation = Variant::no_moe;
  s.train.weights = {0.0, 1.0, 0.0};
  s.train.epochs = 6;
  return s;
}

PlainDetector train_plain_detector(const DriftDecaySpec& spec) {
  SyntheticFamilySpec synth = spec.synth;
  synth.drift_levels = {0.0};
  synth.n_human = spec.n_train_human;
  auto corpus = synth_generate(synth, spec.n_train_per_family, derive_seed(spec.seed, "decay-train"));
  std::map<std::string, TokenProbMatrix> matrices;
  for (std::size_t i = 0; i < corpus.samples.size(); ++i) matrices.emplace(corpus.samples[i].id, corpus.matrices[i]);
  auto [train, val] = stratified_split(corpus.samples, spec.train.val_fraction, spec.seed);
  TrainConfig cfg = spec.train;
  cfg.seed = spec.seed;
  auto model = build_variant(cfg, synth.registry());
  const auto train_set = prepare_from(*model, train, matrices);
  const auto val_set = prepare_from(*model, val, matrices);
  auto result = train_prepared(std::move(model), train_set, val_set, cfg);
  return {std::move(result.model), result.best_val, true};
}

DriftCurve drift_decay_experiment(const DriftDecaySpec& spec, const PlainDetector& detector) {
  if (!detector.trained || !detector.model) throw StateError("drift decay needs a trained detector");
  if (spec.grid.empty()) throw ConfigError("drift grid is empty");
  if (spec.n_test_per_level < 1) throw ConfigError("n_test_per_level must be >= 1");
  const auto n_fam = static_cast<int>(spec.synth.n_families());
  const int per_family = (spec.n_test_per_level + n_fam - 1) / n_fam;
  DriftCurve curve;
  curve.val_accuracy = detector.val.accuracy;
  for (std::size_t level = 0; level < spec.grid.size(); ++level) {
    SyntheticFamilySpec synth = spec.synth;
    synth.drift_levels = {spec.grid[level]};
    synth.n_human = per_family * n_fam;
    auto corpus = synth_generate(synth, per_family, derive_seed(derive_seed(spec.seed, "decay-test"), level));
    std::vector<PreparedSample> slice;
    for (std::size_t i = 0; i < corpus.samples.size(); ++i) slice.push_back(detector.model->prepare(corpus.samples[i], corpus.matrices[i]));
    curve.drift.push_back(spec.grid[level]);
    curve.accuracy.push_back(evaluate(*detector.model, slice).accuracy);
  }
  curve.spearman = spearman(curve.drift, curve.accuracy);
  return curve;
}

void write_drift_curve(const DriftCurve& curve, const std::filesystem::path& dir) {
  std::string csv = "drift,accuracy\n";
  for (std::size_t i = 0; i < curve.drift.size(); ++i)
    csv += format_double(curve.drift[i]) + "," + format_double(curve.accuracy[i]) + "\n";
  write_file_atomic(dir / "drift_decay.csv", csv);
  write_file_atomic(dir / "drift_decay.svg",
                    line_chart_svg(curve.drift, curve.accuracy, "Detection accuracy vs. fine-tuning drift", "drift",
                                   "accuracy (%)"));
  json j = {{"drift", curve.drift}, {"accuracy", curve.accuracy}, {"val_accuracy", curve.val_accuracy}};
  j["spearman"] = std::isnan(curve.spearman) ? json(nullptr) : json(curve.spearman);
  write_file_atomic(dir / "drift_decay.json", j.dump(2) + "\n");
}

Heatmap similarity_heatmap(const HeatmapSpec& spec) {
  SyntheticFamilySpec synth = spec.synth;
  synth.drift_levels = {0.0};
  for (double d : spec.drifts)
    if (d != 0.0) synth.drift_levels.push_back(d);
  synth.n_human = 0;
  synth.others_signature.reset();
  const auto corpus = synth_generate(synth, spec.n_per_cell, spec.seed);
  const auto registry = synth.registry();
  std::vector<TokenProbMatrix> probe, reference;
  std::vector<std::size_t> probe_labels, reference_labels;
  for (std::size_t i = 0; i < corpus.samples.size(); ++i) {
    const auto& s = corpus.samples[i];
    const auto label = *registry.family_index(*s.family_label);
    auto aligned = align_length(corpus.matrices[i], static_cast<std::size_t>(spec.aligned_length));
    if (s.ft_domain && *s.ft_domain == drift_domain(0.0)) {
      reference.push_back(std::move(aligned));
      reference_labels.push_back(label);
    } else {
      probe.push_back(std::move(aligned));
      probe_labels.push_back(label);
    }
  }
  if (probe.empty()) throw ConfigError("heatmap needs at least one non-zero drift level");
  Heatmap h;
  h.families = synth.families;
  h.values = family_similarity_matrix(probe, probe_labels, reference, reference_labels, registry.family_count(),
                                      spec.space);
  h.gap = diagonal_gap(h.values);
  return h;
}

void write_heatmap(const Heatmap& heatmap, const std::filesystem::path& dir) {
  std::string csv = "family";
  for (const auto& f : heatmap.families) csv += ",base_" + f;
  csv += '\n';
  for (std::size_t a = 0; a < heatmap.values.size(); ++a) {
    csv += heatmap.families[a];
    for (double v : heatmap.values[a]) csv += "," + format_double(v);
    csv += '\n';
  }
  write_file_atomic(dir / "similarity_heatmap.csv", csv);
  write_file_atomic(dir / "similarity_heatmap.svg",
                    heatmap_svg(heatmap.values, heatmap.families, heatmap.families,
                                "Cosine similarity to base-model centroids"));
  write_file_atomic(dir / "similarity_heatmap.json",
                    json({{"families", heatmap.families}, {"values", heatmap.values}, {"diagonal_gap", heatmap.gap}})
                            .dump(2) +
                        "\n");
}

}  // namespace kinscope
