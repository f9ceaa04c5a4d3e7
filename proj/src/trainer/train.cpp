#include "trainer/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "core/errors.hpp"
#include "core/random.hpp"
#include "trainer/checkpoint.hpp"

namespace kinscope {

using nlohmann::json;

const char* to_string(LrSchedule s) noexcept { return s == LrSchedule::linear ? "linear" : "constant"; }

LrSchedule parse_lr_schedule(std::string_view text) {
  if (text == "constant") return LrSchedule::constant;
  if (text == "linear") return LrSchedule::linear;
  throw ConfigError("unknown lr schedule '" + std::string(text) + "'");
}

LossWeights TrainConfig::effective_weights() const {
  LossWeights w = weights;
  if (ablation == Variant::no_cl) w.lambda3 = 0.0;
  return w;
}

void TrainConfig::validate() const {
  if (epochs < 0) throw ConfigError("train.epochs must be >= 0");
  if (batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
  if (effective_weights().lambda3 > 0.0 && batch_size < 2)
    throw ConfigError("train.batch_size must be >= 2 when the contrastive loss is enabled");
  if (!(grad_clip >= 0.0)) throw ConfigError("train.grad_clip must be >= 0");
  if (!(val_fraction > 0.0 && val_fraction < 1.0)) throw ConfigError("train.val_fraction must lie in (0, 1)");
  for (double l : {weights.lambda1, weights.lambda2, weights.lambda3})
    if (!(l >= 0.0) || !std::isfinite(l)) throw ConfigError("loss weights must be finite and >= 0");
  encoder.validate();
  contrastive.validate();
  heads.validate();
}

std::unique_ptr<DetectorModel> build_variant(const TrainConfig& cfg, const FamilyRegistry& registry) {
  cfg.validate();
  ModelConfig m;
  m.registry = registry;
  m.variant = cfg.ablation;
  m.encoder = cfg.encoder;
  m.contrastive = cfg.contrastive;
  m.heads = cfg.heads;
  m.text_features = cfg.text_features;
  m.init_seed = derive_seed(cfg.seed, "init");
  return std::make_unique<DetectorModel>(std::move(m));
}

std::vector<PreparedSample> prepare_all(const DetectorModel& model, std::span<const LabeledSample> samples,
                                        const ScoreProvider* provider) {
  std::vector<PreparedSample> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(model.prepare(s, provider));
  return out;
}

EvalReport evaluate(const DetectorModel& model, std::span<const PreparedSample> samples, double threshold) {
  const auto preds = model.predict(samples);
  std::vector<ScoredLabel> scored;
  scored.reserve(preds.size());
  for (std::size_t i = 0; i < preds.size(); ++i) scored.push_back({preds[i].y_b, samples[i].label});
  return binary_metrics(scored, threshold);
}

TrainResult train(const DatasetManifest& data, const ScoreProvider& scores, const TrainConfig& cfg,
                  const TrainOptions& options) {
  const auto parts = split_by_unseen_domain(data.samples, data.heldout_domain, cfg.val_fraction, cfg.seed);
  if (parts.train.empty() || parts.val.empty()) throw DataError("train and validation splits must be non-empty");
  auto model = build_variant(cfg, data.registry);
  const auto train_set = prepare_all(*model, parts.train, &scores);
  const auto val_set = prepare_all(*model, parts.val, &scores);
  return train_prepared(std::move(model), train_set, val_set, cfg, options);
}

namespace {

json checkpoint_metadata(const EpochLog& log, const TrainConfig& cfg) {
  return {{"epoch", log.epoch}, {"val_f1_macro", log.val.f1_macro}, {"seed", cfg.seed}};
}

}  // namespace

TrainResult train_prepared(std::unique_ptr<DetectorModel> model, std::span<const PreparedSample> train_set,
                           std::span<const PreparedSample> val_set, const TrainConfig& cfg,
                           const TrainOptions& options) {
  cfg.validate();
  if (!model) throw StateError("no model to train");
  if (train_set.empty() || val_set.empty()) throw DataError("train and validation splits must be non-empty");
  const auto weights = cfg.effective_weights();
  auto& store = model->params();
  Optimizer optimizer(cfg.optimizer, store);

  std::vector<int> groups;
  groups.reserve(train_set.size());
  for (const auto& s : train_set) groups.push_back(s.group);

  TrainResult result;
  auto best = store.snapshot();
  double best_f1 = -1.0;
  double best_log_loss = 0.0;
  const std::int64_t steps_per_epoch = (static_cast<std::int64_t>(train_set.size()) + cfg.batch_size - 1) / cfg.batch_size;
  const std::int64_t total_steps = steps_per_epoch * cfg.epochs;

  std::vector<std::size_t> order(train_set.size());
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 shuffle_rng(derive_seed(cfg.seed, "shuffle") ^ static_cast<std::uint64_t>(epoch));
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    LossBundle sum{0.0, 0.0, 0.0, 0.0, 0.0, weights};
    std::int64_t step = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += static_cast<std::size_t>(cfg.batch_size), ++step) {
      const std::size_t end = std::min(order.size(), begin + static_cast<std::size_t>(cfg.batch_size));
      const std::span<const std::size_t> batch(order.data() + begin, end - begin);
      const auto pairs = make_augmented_batch(batch, groups, derive_seed(cfg.seed, static_cast<std::uint64_t>(epoch),
                                                                         static_cast<std::uint64_t>(step)));
      std::vector<const PreparedSample*> originals, augmented;
      for (const auto& p : pairs) {
        originals.push_back(&train_set[p.original]);
        augmented.push_back(&train_set[p.augmented]);
      }
      BatchLoss loss;
      bool finite = true;
      try {
        loss = compute_batch_loss(*model, originals, augmented, weights);
        finite = std::isfinite(loss.values.total);
      } catch (const NumericError&) {
        finite = false;
      }
      if (!finite) {
        store.restore(best);
        if (options.checkpoint_path && best_f1 < 0.0) save_checkpoint(*model, *options.checkpoint_path);
        throw NumericError("training diverged (non-finite loss) at epoch " + std::to_string(epoch) + " step " +
                           std::to_string(step + 1) + "; last good parameters kept");
      }
      store.zero_grad();
      ag::backward(loss.total);
      clip_grad_norm(store, cfg.grad_clip);
      double lr_scale = 1.0;
      if (cfg.lr_schedule == LrSchedule::linear)
        lr_scale = 1.0 - static_cast<double>(optimizer.steps()) / static_cast<double>(std::max<std::int64_t>(1, total_steps));
      optimizer.step(store, lr_scale);

      sum.total += loss.values.total;
      sum.l_f += loss.values.l_f;
      sum.l_f_aug += loss.values.l_f_aug;
      sum.l_b += loss.values.l_b;
      sum.l_c += loss.values.l_c;
    }
    EpochLog log;
    log.epoch = epoch;
    const double n = static_cast<double>(step);
    log.train = {sum.total / n, sum.l_f / n, sum.l_f_aug / n, sum.l_b / n, sum.l_c / n, weights};
    log.val = evaluate(*model, val_set);
    // Ties on macro F1 go to the lower validation log-loss.
    if (log.val.f1_macro > best_f1 || (log.val.f1_macro == best_f1 && log.val.log_loss < best_log_loss)) {
      best_f1 = log.val.f1_macro;
      best_log_loss = log.val.log_loss;
      best = store.snapshot();
      result.best_epoch = epoch;
      if (options.checkpoint_path) {
        auto current = store.snapshot();
        round_params_to_float(store);
        save_checkpoint(*model, *options.checkpoint_path, checkpoint_metadata(log, cfg));
        store.restore(current);
      }
    }
    result.epochs.push_back(log);
    if (options.on_epoch) options.on_epoch(log);
  }
  store.restore(best);
  round_params_to_float(store);
  result.best_val = evaluate(*model, val_set);
  if (options.checkpoint_path && cfg.epochs == 0) save_checkpoint(*model, *options.checkpoint_path);
  result.model = std::move(model);
  return result;
}

json to_json(const LossBundle& b) {
  return {{"total", b.total}, {"L_F", b.l_f}, {"L_F_aug", b.l_f_aug}, {"L_B", b.l_b}, {"L_C", b.l_c},
          {"lambda", {b.weights.lambda1, b.weights.lambda2, b.weights.lambda3}}};
}

json to_json(const EvalReport& r) {
  json j = {{"f1_human", r.f1_human},
            {"f1_generated", r.f1_generated},
            {"f1_macro", r.f1_macro},
            {"accuracy", r.accuracy},
            {"log_loss", r.log_loss},
            {"threshold", r.threshold},
            {"confusion",
             {{"true_generated", r.confusion.true_generated},
              {"false_generated", r.confusion.false_generated},
              {"true_human", r.confusion.true_human},
              {"false_human", r.confusion.false_human}}},
            {"degenerate", r.degenerate}};
  j["tpr_at_1pct_fpr"] = r.tpr_at_1pct_fpr ? json(*r.tpr_at_1pct_fpr) : json(nullptr);
  if (!r.per_family_f1.empty()) j["per_family_f1"] = r.per_family_f1;
  return j;
}

json to_json(const TrainConfig& c) {
  return {{"learning_rate", c.optimizer.learning_rate},
          {"optimizer", to_string(c.optimizer.kind)},
          {"beta1", c.optimizer.beta1},
          {"beta2", c.optimizer.beta2},
          {"epsilon", c.optimizer.epsilon},
          {"weight_decay", c.optimizer.weight_decay},
          {"batch_size", c.batch_size},
          {"epochs", c.epochs},
          {"grad_clip", c.grad_clip},
          {"lr_schedule", to_string(c.lr_schedule)},
          {"seed", c.seed},
          {"val_fraction", c.val_fraction},
          {"lambda", {c.weights.lambda1, c.weights.lambda2, c.weights.lambda3}},
          {"ablation", to_string(c.ablation)},
          {"encoder", to_json(c.encoder)}};
}

json training_report(const TrainResult& result, const TrainConfig& cfg) {
  json epochs = json::array();
  for (const auto& e : result.epochs) epochs.push_back({{"epoch", e.epoch}, {"train_loss", to_json(e.train)}, {"val", to_json(e.val)}});
  return {{"config", to_json(cfg)},
          {"epochs", epochs},
          {"best_epoch", result.best_epoch},
          {"best_val", to_json(result.best_val)}};
}

}  // namespace kinscope
