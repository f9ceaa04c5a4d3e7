#include "app/workflows.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>

#include <json.hpp>

#include "core/dataset.hpp"
#include "core/errors.hpp"
#include "core/io.hpp"
#include "eval/experiments.hpp"
#include "eval/metrics.hpp"
#include "scorer/provider.hpp"
#include "scorer/synthetic.hpp"
#include "trainer/checkpoint.hpp"
#include "trainer/train.hpp"

namespace kinscope::app {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path output_dir(const RunConfig& cfg) {
  fs::path dir = cfg.output_dir.empty() ? fs::path(".") : fs::path(cfg.output_dir);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory '" + dir.string() + "': " + ec.message());
  return dir;
}

const std::string& require(const std::string& value, const char* what) {
  if (value.empty()) throw ConfigError(std::string("missing ") + what);
  return value;
}

DatasetManifest load_manifest(const RunConfig& cfg, FamilyRegistry registry) {
  LoadOptions opts;
  opts.registry = std::move(registry);
  if (!cfg.heldout_domain.empty()) opts.heldout_domain = cfg.heldout_domain;
  return load_dataset(require(cfg.manifest_path, "manifest path (--manifest)"), opts);
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

LoadedCheckpoint load_model(const RunConfig& cfg) {
  return load_checkpoint(require(cfg.checkpoint_path, "checkpoint path (--checkpoint)"));
}

}  // namespace

void run_synth(const RunConfig& cfg, const LineSink& out) {
  const auto spec = cfg.benchmark_spec();
  auto data = make_benchmark_data(spec, cfg.seed);
  for (auto& s : data.samples)
    if (s.is_generated() && s.ft_domain == spec.heldout_domain()) s.split = Split::test;
  DatasetManifest manifest{data.samples, data.registry, spec.heldout_domain()};
  validate_manifest(manifest);
  std::vector<TokenProbMatrix> matrices;
  matrices.reserve(data.samples.size());
  for (const auto& s : data.samples) matrices.push_back(data.matrices.at(s.id));
  const auto dir = output_dir(cfg);
  save_dataset(manifest, dir / "manifest.jsonl");
  write_score_file(matrices, data.registry, dir / "scores.jsonl");
  out("wrote " + std::to_string(data.samples.size()) + " samples to " + (dir / "manifest.jsonl").string() + " and " +
      (dir / "scores.jsonl").string());
}

void run_score(const RunConfig& cfg, const LineSink& out) {
  SyntheticScoreProvider provider(cfg.synthetic_spec(), cfg.seed);
  const auto manifest = load_manifest(cfg, provider.registry());
  std::vector<TokenProbMatrix> matrices;
  matrices.reserve(manifest.samples.size());
  for (const auto& s : manifest.samples) matrices.push_back(provider.score(s));
  const auto path = output_dir(cfg) / "scores.jsonl";
  write_score_file(matrices, manifest.registry, path);
  out("scored " + std::to_string(matrices.size()) + " samples under " +
      std::to_string(manifest.registry.model_count()) + " models into " + path.string());
}

void run_train(const RunConfig& cfg, const LineSink& out) {
  const auto registry = cfg.registry();
  const auto manifest = load_manifest(cfg, registry);
  const auto scores = FileScoreProvider::from_file(registry, require(cfg.scores_path, "score file (--scores)"));
  TrainConfig tc = cfg.train;
  tc.seed = cfg.seed;
  const auto dir = output_dir(cfg);
  TrainOptions opts;
  opts.checkpoint_path = dir / "checkpoint.ckpt";
  opts.on_epoch = [&](const EpochLog& log) {
    out("epoch " + std::to_string(log.epoch) + " loss " + fmt("%.4f", log.train.total) + " val_f1_macro " +
        fmt("%.2f", log.val.f1_macro));
  };
  const auto result = train(manifest, scores, tc, opts);
  write_file_atomic(dir / "training_report.json", training_report(result, tc).dump(2) + "\n");
  out("best epoch " + std::to_string(result.best_epoch) + " val_f1_macro " + fmt("%.2f", result.best_val.f1_macro) +
      "; checkpoint " + opts.checkpoint_path->string());
}

void run_detect(const RunConfig& cfg, const LineSink& out) {
  const auto ckpt = load_model(cfg);
  const auto& model = *ckpt.model;
  const auto& registry = model.config().registry;
  const auto manifest = load_manifest(cfg, registry);
  const auto scores = FileScoreProvider::from_file(registry, require(cfg.scores_path, "score file (--scores)"));
  const auto prepared = prepare_all(model, manifest.samples, &scores);
  const auto preds = model.predict(prepared);
  const auto names = registry.family_names();
  std::string all;
  for (const auto& p : preds) {
    json fam = json::object();
    for (std::size_t i = 0; i < names.size(); ++i) fam[names[i]] = p.family_probs[i];
    const json line = {{"id", p.id},
                       {"y_B", p.y_b},
                       {"family_probs", fam},
                       {"verdict", p.y_b >= cfg.threshold ? "generated" : "human"}};
    const auto text = line.dump();
    out(text);
    all += text + "\n";
  }
  write_file_atomic(output_dir(cfg) / "detections.jsonl", all);
}

void run_eval(const RunConfig& cfg, const LineSink& out) {
  const auto ckpt = load_model(cfg);
  const auto& model = *ckpt.model;
  const auto& registry = model.config().registry;
  const auto manifest = load_manifest(cfg, registry);
  const auto scores = FileScoreProvider::from_file(registry, require(cfg.scores_path, "score file (--scores)"));

  std::vector<LabeledSample> test;
  for (const auto& s : manifest.samples)
    if (s.split == Split::test || (s.is_generated() && !manifest.heldout_domain.empty() && s.ft_domain &&
                                   *s.ft_domain == manifest.heldout_domain))
      test.push_back(s);
  const bool whole = test.empty();
  if (whole) test = manifest.samples;
  const auto prepared = prepare_all(model, test, &scores);
  const auto preds = model.predict(prepared);

  std::vector<ScoredLabel> scored;
  std::vector<ScoredLabel> humans;
  std::map<std::string, std::vector<ScoredLabel>> subsets;
  std::vector<FamilyPrediction> fam_preds;
  std::vector<std::size_t> fam_labels;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const ScoredLabel sl{preds[i].y_b, prepared[i].label};
    scored.push_back(sl);
    if (prepared[i].family < 0) {
      humans.push_back(sl);
      continue;
    }
    subsets[registry.family_name(static_cast<std::size_t>(prepared[i].family))].push_back(sl);
    fam_preds.push_back({preds[i].family_probs});
    fam_labels.push_back(static_cast<std::size_t>(prepared[i].family));
  }
  EvalReport report = binary_metrics(scored, cfg.threshold);
  try {
    report.tpr_at_1pct_fpr = tpr_at_fpr(scored, cfg.fpr);
  } catch (const DataError&) {
    report.degenerate.push_back("tpr_at_fpr");
  }
  json subset_f1 = json::object();
  if (!fam_labels.empty()) {
    const auto fm = family_metrics(fam_preds, fam_labels, registry.family_count());
    for (std::size_t f = 0; f < registry.family_count(); ++f)
      if (fm.support[f] > 0) report.per_family_f1[registry.family_name(f)] = fm.f1[f];
  }
  for (auto& [name, s] : subsets) {
    s.insert(s.end(), humans.begin(), humans.end());
    subset_f1[name] = binary_metrics(s, cfg.threshold).f1_macro;
  }
  json j = to_json(report);
  j["fpr_budget"] = cfg.fpr;
  j["evaluated"] = whole ? "all samples" : "test split";
  j["n_samples"] = test.size();
  j["subset_f1_macro"] = subset_f1;
  j["checkpoint"] = cfg.checkpoint_path;
  const auto path = output_dir(cfg) / "eval_report.json";
  write_file_atomic(path, j.dump(2) + "\n");
  std::string line = "f1_macro " + fmt("%.2f", report.f1_macro) + " accuracy " + fmt("%.2f", report.accuracy);
  if (report.tpr_at_1pct_fpr) line += " tpr@" + fmt("%g", cfg.fpr) + " " + fmt("%.2f", *report.tpr_at_1pct_fpr);
  out(line);
  out("wrote " + path.string());
}

void run_benchmark(const RunConfig& cfg, const LineSink& out) {
  const auto spec = cfg.benchmark_spec();
  const auto report = kinscope::run_benchmark(spec, cfg.bench_variants, [&](const std::string& s) { out(s); });
  const auto dir = output_dir(cfg);
  write_benchmark(report, dir);
  for (const auto& row : report.rows) {
    std::string line = std::string(to_string(row.variant)) + " seeds_ok " + std::to_string(row.seeds_ok);
    if (auto it = row.metrics.find("f1_macro"); it != row.metrics.end())
      line += " f1_macro " + fmt("%.2f", it->second.first) + " +- " + fmt("%.2f", it->second.second);
    out(line);
  }
  out("wrote " + (dir / "benchmark.json").string());
}

void run_simulate(const RunConfig& cfg, std::string_view mode, const LineSink& out) {
  const auto dir = output_dir(cfg);
  if (mode == "drift") {
    const auto spec = cfg.decay_spec();
    const auto detector = train_plain_detector(spec);
    const auto curve = drift_decay_experiment(spec, detector);
    write_drift_curve(curve, dir);
    for (std::size_t i = 0; i < curve.drift.size(); ++i)
      out("drift " + fmt("%.2f", curve.drift[i]) + " accuracy " + fmt("%.2f", curve.accuracy[i]));
    out("spearman " + (std::isnan(curve.spearman) ? std::string("nan") : fmt("%.3f", curve.spearman)));
  } else if (mode == "heatmap") {
    const auto hm = similarity_heatmap(cfg.heatmap_spec());
    write_heatmap(hm, dir);
    out("diagonal gap " + fmt("%.4f", hm.gap));
  } else {
    throw ConfigError("simulate mode must be 'drift' or 'heatmap', got '" + std::string(mode) + "'");
  }
  out("wrote results to " + dir.string());
}

}  // namespace kinscope::app
