#include <cstdio>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "kinscope/kinscope.h"

namespace {

struct Common {
  std::string config;
  std::string seed;
  std::string output_dir;
  std::vector<std::string> sets;
};

struct Flags {
  std::string checkpoint;
  std::string scores;
  std::string manifest;
  std::string threshold;
  std::string fpr;
  std::string variants;
  std::string seeds;
  std::string mode;
};

struct UsageError {
  std::string message;
};

struct RuntimeError {
  ks_status status;
  std::string message;
};

void print_line(const char* line, void*) {
  std::fputs(line, stdout);
  std::fputc('\n', stdout);
  std::fflush(stdout);
}

std::string one_line(std::string s) {
  for (char& c : s)
    if (c == '\n' || c == '\r') c = ' ';
  return s;
}

using ConfigPtr = std::unique_ptr<ks_config, decltype(&ks_config_destroy)>;

void check(ks_status s) {
  if (s != KS_OK) throw RuntimeError{s, ks_last_error()};
}

/// Flag values are validated by the config layer; a rejection is a usage error.
void set(ks_config* cfg, const char* key, const std::string& value) {
  if (value.empty()) return;
  if (ks_config_set(cfg, key, value.c_str()) != KS_OK) throw UsageError{ks_last_error()};
}

ConfigPtr build_config(const Common& common, const Flags& flags) {
  ks_config* raw = nullptr;
  if (!common.config.empty())
    check(ks_config_load(common.config.c_str(), &raw));
  else
    check(ks_config_create(&raw));
  ConfigPtr cfg(raw, &ks_config_destroy);
  for (const auto& kv : common.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw UsageError{"--set expects key=value, got '" + kv + "'"};
    set(cfg.get(), kv.substr(0, eq).c_str(), kv.substr(eq + 1));
  }
  set(cfg.get(), "seed", common.seed);
  set(cfg.get(), "paths.output_dir", common.output_dir);
  set(cfg.get(), "paths.checkpoint", flags.checkpoint);
  set(cfg.get(), "paths.scores", flags.scores);
  set(cfg.get(), "paths.manifest", flags.manifest);
  set(cfg.get(), "eval.threshold", flags.threshold);
  set(cfg.get(), "eval.fpr", flags.fpr);
  set(cfg.get(), "bench.variants", flags.variants);
  set(cfg.get(), "bench.seeds", flags.seeds);
  return cfg;
}

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--config", c.config, "key = value configuration file")->check(CLI::ExistingFile);
  sub->add_option("--seed", c.seed, "seed for every random choice (default 0)");
  sub->add_option("--output-dir", c.output_dir, "directory receiving all outputs (default .)");
  sub->add_option("--set", c.sets, "override one config key, key=value (repeatable)");
}

void add_data(CLI::App* sub, Flags& f, bool checkpoint) {
  sub->add_option("--manifest,--input", f.manifest, "dataset manifest (JSON lines)");
  sub->add_option("--scores", f.scores, "score file (JSON lines)");
  if (checkpoint) sub->add_option("--checkpoint", f.checkpoint, "model checkpoint");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"kinscope: family-aware detection of machine-generated text"};
  app.require_subcommand(1);
  app.set_version_flag("--version", ks_version());
  Common common;
  Flags flags;

  auto* score = app.add_subcommand("score", "score a manifest with the synthetic provider");
  add_common(score, common);
  score->add_option("--manifest,--input", flags.manifest, "dataset manifest (JSON lines)");

  auto* synth = app.add_subcommand("synth", "generate a synthetic benchmark corpus");
  add_common(synth, common);

  auto* train = app.add_subcommand("train", "train a detector");
  add_common(train, common);
  add_data(train, flags, false);

  auto* detect = app.add_subcommand("detect", "print one JSON verdict per sample");
  add_common(detect, common);
  add_data(detect, flags, true);
  detect->add_option("--threshold", flags.threshold, "decision threshold on y_B (default 0.5)");

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on the test split");
  add_common(eval, common);
  add_data(eval, flags, true);
  eval->add_option("--threshold", flags.threshold, "decision threshold on y_B (default 0.5)");
  eval->add_option("--fpr", flags.fpr, "false-positive budget for TPR (default 0.01)");

  auto* bench = app.add_subcommand("benchmark", "variant x seed grid on the synthetic benchmark");
  add_common(bench, common);
  bench->add_option("--spec", common.config, "benchmark configuration file (alias of --config)")
      ->check(CLI::ExistingFile);
  bench->add_option("--variants", flags.variants, "comma list of full,no_bfe,no_cl,no_moe");
  bench->add_option("--seeds", flags.seeds, "number of seeds (seed+1 .. seed+n)");

  auto* sim = app.add_subcommand("simulate", "synthetic drift-decay curve or family similarity heatmap");
  add_common(sim, common);
  sim->add_option("mode", flags.mode, "drift or heatmap")->required()->check(CLI::IsMember({"drift", "heatmap"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::fprintf(stderr, "error: usage: %s\n", one_line(e.what()).c_str());
    return 2;
  }

  try {
    auto cfg = build_config(common, flags);
    const ks_config* c = cfg.get();
    if (score->parsed()) check(ks_run_score(c, print_line, nullptr));
    if (synth->parsed()) check(ks_run_synth(c, print_line, nullptr));
    if (train->parsed()) check(ks_run_train(c, print_line, nullptr));
    if (detect->parsed()) check(ks_run_detect(c, print_line, nullptr));
    if (eval->parsed()) check(ks_run_eval(c, print_line, nullptr));
    if (bench->parsed()) check(ks_run_benchmark(c, print_line, nullptr));
    if (sim->parsed()) check(ks_run_simulate(c, flags.mode.c_str(), print_line, nullptr));
  } catch (const UsageError& e) {
    std::fprintf(stderr, "error: usage: %s\n", one_line(e.message).c_str());
    return 2;
  } catch (const RuntimeError& e) {
    std::fprintf(stderr, "error: %s: %s\n", ks_status_name(e.status), one_line(e.message).c_str());
    return 1;
  }
  return 0;
}
