#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>

#include "core/errors.hpp"
#include "scorer/synthetic.hpp"
#include "test_util.hpp"
#include "trainer/checkpoint.hpp"
#include "trainer/loss.hpp"
#include "trainer/optimizer.hpp"
#include "trainer/train.hpp"

namespace kinscope {
namespace {

using testing::tiny_config;

// ---- total_loss ----

TEST(TotalLoss, DefaultWeightsArithmetic) {
  const auto b = total_loss(1.0, 2.0, 3.0, 4.0, LossWeights{});
  EXPECT_EQ(b.total, 8.0);
  EXPECT_EQ(b.l_c, 4.0);
}

TEST(TotalLoss, ZeroContrastiveWeight) {
  const auto b = total_loss(0.3, 0.7, 1.1, 123.0, {1.5, 2.0, 0.0});
  EXPECT_EQ(b.total, 1.5 * (0.3 + 0.7) + 2.0 * 1.1);
}

TEST(TotalLoss, RandomMatchesRecomputation) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.0, 5.0);
  for (int i = 0; i < 200; ++i) {
    const double lf = u(rng), la = u(rng), lb = u(rng), lc = u(rng) - 2.5;
    const LossWeights w{u(rng), u(rng), u(rng)};
    EXPECT_NEAR(total_loss(lf, la, lb, lc, w).total, w.lambda1 * (lf + la) + w.lambda2 * lb + w.lambda3 * lc, 1e-12);
  }
}

TEST(TotalLoss, NaNComponentNamed) {
  const double nan = std::numeric_limits<double>::quiet_NaN();
  try {
    total_loss(1.0, 1.0, nan, 1.0, {});
    FAIL();
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("L_B"), std::string::npos);
  }
  try {
    total_loss(1.0, 1.0, 1.0, nan, {});
    FAIL();
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("L_C"), std::string::npos);
  }
}

// ---- fixtures ----

/// Two base models, random matrices, two generated families plus humans.
struct SmallBatch {
  std::unique_ptr<DetectorModel> model;
  std::vector<PreparedSample> samples;
  std::vector<const PreparedSample*> originals, augmented;

  SmallBatch(const TrainConfig& cfg, std::uint64_t seed) {
    model = build_variant(cfg, FamilyRegistry::from_ids({"a", "b"}, false));
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> len(6, 24);
    const char* fam[] = {"a", "b"};
    for (int i = 0; i < 8; ++i) {
      const auto s = i % 4 == 3 ? testing::human("h" + std::to_string(i))
                                : testing::generated("g" + std::to_string(i), fam[i % 2], "base");
      auto m = TokenProbMatrix::from_rows(s.id, {testing::random_row(rng, len(rng)), testing::random_row(rng, len(rng))});
      samples.push_back(model->prepare(s, m));
    }
    // Batch of 4; partners share the original's group.
    for (int i : {0, 1, 2, 3}) originals.push_back(&samples[i]);
    for (int i : {4, 5, 6, 7}) augmented.push_back(&samples[i]);
  }
};

TrainConfig grad_config(std::uint64_t seed) {
  auto cfg = tiny_config();
  cfg.seed = seed;
  return cfg;
}

/// Spread biases away from zero so no coordinate sits on a flat spot.
void jitter(nn::ParamStore& store, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-0.3, 0.3);
  for (const auto& [name, v] : store.entries())
    if (name.find("bias") != std::string::npos || name.find("beta") != std::string::npos)
      for (auto& x : v->value) x = u(rng);
}

TEST(BatchLoss, GradientsMatchFiniteDifferences) {
  for (std::uint64_t point = 0; point < 10; ++point) {
    SmallBatch b(grad_config(point), 40 + point);
    auto& store = b.model->params();
    jitter(store, 80 + point);
    const LossWeights w{};
    store.zero_grad();
    ag::backward(compute_batch_loss(*b.model, b.originals, b.augmented, w).total);
    auto objective = [&] {
      ag::NoGradGuard g;
      return compute_batch_loss(*b.model, b.originals, b.augmented, w).values.total;
    };
    std::mt19937_64 rng(point);
    const double h = 1e-6;
    for (const auto& [name, v] : store.entries()) {
      if (name.rfind("text", 0) == 0) continue;  // only the no_bfe variant reads these
      std::uniform_int_distribution<std::size_t> pick(0, v->size() - 1);
      for (int probe = 0; probe < 2; ++probe) {
        const std::size_t j = pick(rng);
        const double keep = v->value[j];
        v->value[j] = keep + h;
        const double plus = objective();
        v->value[j] = keep - h;
        const double minus = objective();
        v->value[j] = keep;
        const double numeric = (plus - minus) / (2 * h);
        const double analytic = v->grad[j];
        const double scale = std::max({std::abs(numeric), std::abs(analytic), 1e-3});
        EXPECT_LE(std::abs(numeric - analytic) / scale, 1e-4) << name << "[" << j << "] point " << point;
      }
    }
  }
}

TEST(BatchLoss, ComponentsRecombine) {
  SmallBatch b(grad_config(3), 5);
  const auto loss = compute_batch_loss(*b.model, b.originals, b.augmented, LossWeights{});
  const auto& v = loss.values;
  EXPECT_NEAR(loss.total->value[0], v.l_f + v.l_f_aug + v.l_b + 0.5 * v.l_c, 1e-9);
  EXPECT_NEAR(v.total, loss.total->value[0], 1e-12);
}

TEST(BatchLoss, HumanOnlyBatchHasNoFamilyLoss) {
  SmallBatch b(grad_config(3), 5);
  const PreparedSample* hum[] = {&b.samples[3], &b.samples[7]};
  const PreparedSample* hum_aug[] = {&b.samples[7], &b.samples[3]};
  const auto loss = compute_batch_loss(*b.model, hum, hum_aug, LossWeights{});
  EXPECT_EQ(loss.values.l_f, 0.0);
  EXPECT_EQ(loss.values.l_f_aug, 0.0);
  EXPECT_GT(loss.values.l_b, 0.0);
}

TEST(BatchLoss, MismatchedPairsRejected) {
  SmallBatch b(grad_config(3), 5);
  EXPECT_THROW(compute_batch_loss(*b.model, b.originals, std::span(b.augmented).first(3), LossWeights{}), ShapeError);
}

TEST(Variants, NoClGradientsEqualFullWithoutContrastive) {
  auto full_cfg = grad_config(11);
  full_cfg.weights.lambda3 = 0.0;
  auto nocl_cfg = grad_config(11);
  nocl_cfg.ablation = Variant::no_cl;
  SmallBatch full(full_cfg, 12), nocl(nocl_cfg, 12);
  ASSERT_EQ(full.model->params().snapshot(), nocl.model->params().snapshot());
  full.model->params().zero_grad();
  nocl.model->params().zero_grad();
  ag::backward(compute_batch_loss(*full.model, full.originals, full.augmented, full_cfg.effective_weights()).total);
  ag::backward(compute_batch_loss(*nocl.model, nocl.originals, nocl.augmented, nocl_cfg.effective_weights()).total);
  const auto& a = full.model->params().entries();
  const auto& b = nocl.model->params().entries();
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    ASSERT_EQ(a[i].second->grad.size(), b[i].second->grad.size()) << a[i].first;
    for (std::size_t j = 0; j < a[i].second->grad.size(); ++j)
      ASSERT_EQ(a[i].second->grad[j], b[i].second->grad[j]) << a[i].first << "[" << j << "]";
  }
}

TEST(Variants, NoClForcesZeroContrastiveWeight) {
  auto cfg = tiny_config();
  cfg.ablation = Variant::no_cl;
  EXPECT_EQ(cfg.effective_weights().lambda3, 0.0);
  cfg.batch_size = 1;
  EXPECT_NO_THROW(cfg.validate());
  cfg.ablation = Variant::full;
  EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(Variants, UnknownVariantRejected) {
  EXPECT_THROW(parse_variant("no_everything"), ConfigError);
  EXPECT_EQ(parse_variant("no_moe"), Variant::no_moe);
}

TEST(Variants, NoBfeIgnoresProbabilities) {
  auto cfg = tiny_config();
  cfg.ablation = Variant::no_bfe;
  auto model = build_variant(cfg, FamilyRegistry::from_ids({"a", "b"}, false));
  EXPECT_FALSE(model->uses_probability_features());
  const auto s = testing::generated("g", "a", "base");
  std::mt19937_64 rng(1);
  const auto m1 = TokenProbMatrix::from_rows("g", {testing::random_row(rng, 10), testing::random_row(rng, 10)});
  const auto m2 = TokenProbMatrix::from_rows("g", {testing::random_row(rng, 7), testing::random_row(rng, 12)});
  const std::vector<PreparedSample> a{model->prepare(s, m1)}, b{model->prepare(s, m2)};
  EXPECT_EQ(model->predict(a)[0].y_b, model->predict(b)[0].y_b);
}

// ---- optimizer ----

TEST(Optimizer, SmallSgdStepDescends) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    SmallBatch b(grad_config(20 + seed), 30 + seed);
    auto& store = b.model->params();
    const LossWeights w{};
    store.zero_grad();
    auto loss = compute_batch_loss(*b.model, b.originals, b.augmented, w);
    ag::backward(loss.total);
    const double g2 = std::pow(grad_norm(store), 2);
    const double eps = 1e-5;
    OptimizerConfig oc;
    oc.kind = OptimizerKind::sgd;
    oc.learning_rate = eps;
    Optimizer opt(oc, store);
    opt.step(store);
    ag::NoGradGuard guard;
    const double after = compute_batch_loss(*b.model, b.originals, b.augmented, w).values.total;
    const double predicted = -eps * g2;
    EXPECT_LT(after, loss.values.total);
    EXPECT_NEAR((after - loss.values.total) / predicted, 1.0, 0.05) << "seed " << seed;
  }
}

TEST(Optimizer, ClipBoundsGlobalNorm) {
  SmallBatch b(grad_config(1), 2);
  auto& store = b.model->params();
  store.zero_grad();
  ag::backward(compute_batch_loss(*b.model, b.originals, b.augmented, LossWeights{}).total);
  const double before = grad_norm(store);
  ASSERT_GT(before, 0.01);
  EXPECT_EQ(clip_grad_norm(store, 0.01), before);
  EXPECT_NEAR(grad_norm(store), 0.01, 1e-12);
  EXPECT_EQ(clip_grad_norm(store, 0.0), grad_norm(store));
}

TEST(Optimizer, ParseKinds) {
  EXPECT_EQ(parse_optimizer("sgd"), OptimizerKind::sgd);
  EXPECT_EQ(parse_optimizer("adam"), OptimizerKind::adam);
  EXPECT_THROW(parse_optimizer("lbfgs"), ConfigError);
}

// ---- training loop ----

struct Corpus {
  std::vector<PreparedSample> train, val;
};

Corpus small_corpus(const DetectorModel& model, std::uint64_t seed) {
  SyntheticFamilySpec spec;
  spec.drift_levels = {0.0};
  spec.n_human = 24;
  spec.length_min = 12;
  spec.length_max = 20;
  const auto corpus = synth_generate(spec, 8, seed);
  Corpus c;
  for (std::size_t i = 0; i < corpus.samples.size(); ++i) {
    auto p = model.prepare(corpus.samples[i], corpus.matrices[i]);
    (i % 4 == 0 ? c.val : c.train).push_back(std::move(p));
  }
  return c;
}

const FamilyRegistry& three() {
  static const auto r = FamilyRegistry::from_ids({"llama", "gemma", "mistral"}, false);
  return r;
}

TEST(Train, ZeroLearningRateKeepsParameters) {
  auto cfg = tiny_config();
  cfg.optimizer.learning_rate = 0.0;
  cfg.epochs = 1;
  auto model = build_variant(cfg, three());
  const auto initial = model->params().snapshot();
  auto data = small_corpus(*model, 1);
  data.train.resize(8);
  const auto result = train_prepared(std::move(model), data.train, data.val, cfg);
  EXPECT_EQ(result.model->params().snapshot(), initial);
}

TEST(Train, InitialisationIsFloat32) {
  auto model = build_variant(tiny_config(), three());
  for (const auto& [name, v] : model->params().entries())
    for (double x : v->value) ASSERT_EQ(static_cast<double>(static_cast<float>(x)), x) << name;
}

TEST(Train, DeterministicGivenSeed) {
  auto run = [] {
    auto cfg = tiny_config();
    cfg.seed = 5;
    auto model = build_variant(cfg, three());
    const auto data = small_corpus(*model, 2);
    return train_prepared(std::move(model), data.train, data.val, cfg);
  };
  const auto a = run();
  const auto b = run();
  ASSERT_EQ(a.epochs.size(), b.epochs.size());
  for (std::size_t e = 0; e < a.epochs.size(); ++e) {
    EXPECT_EQ(a.epochs[e].train.total, b.epochs[e].train.total);
    EXPECT_EQ(a.epochs[e].train.l_c, b.epochs[e].train.l_c);
    EXPECT_EQ(a.epochs[e].val.f1_macro, b.epochs[e].val.f1_macro);
  }
  EXPECT_EQ(a.model->params().snapshot(), b.model->params().snapshot());
}

TEST(Train, SeedChangesRun) {
  auto run = [](std::uint64_t seed) {
    auto cfg = tiny_config();
    cfg.seed = seed;
    auto model = build_variant(cfg, three());
    const auto data = small_corpus(*model, 2);
    return train_prepared(std::move(model), data.train, data.val, cfg).epochs[0].train.total;
  };
  EXPECT_NE(run(1), run(2));
}

TEST(Train, SaveLoadPreservesMetrics) {
  testing::TempDir dir("trainer");
  auto cfg = tiny_config();
  cfg.epochs = 3;
  auto model = build_variant(cfg, three());
  const auto data = small_corpus(*model, 3);
  const auto path = dir.path() / "m.ckpt";
  const auto result = train_prepared(std::move(model), data.train, data.val, cfg, {path, {}});
  save_checkpoint(*result.model, path);
  const auto loaded = load_checkpoint(path);
  const auto before = evaluate(*result.model, data.val);
  const auto after = evaluate(*loaded.model, data.val);
  EXPECT_NEAR(before.f1_macro, after.f1_macro, 1e-6);
  EXPECT_NEAR(before.log_loss, after.log_loss, 1e-6);
  const auto p = result.model->predict(data.val);
  const auto q = loaded.model->predict(data.val);
  for (std::size_t i = 0; i < p.size(); ++i) {
    EXPECT_NEAR(p[i].y_b, q[i].y_b, 1e-6);
    for (std::size_t k = 0; k < p[i].family_probs.size(); ++k)
      EXPECT_NEAR(p[i].family_probs[k], q[i].family_probs[k], 1e-6);
  }
  EXPECT_EQ(loaded.model->config(), result.model->config());
}

TEST(Train, BestCheckpointWrittenDuringTraining) {
  testing::TempDir dir("trainer");
  auto cfg = tiny_config();
  cfg.epochs = 3;
  auto model = build_variant(cfg, three());
  const auto data = small_corpus(*model, 3);
  const auto path = dir.path() / "best.ckpt";
  const auto result = train_prepared(std::move(model), data.train, data.val, cfg, {path, {}});
  const auto loaded = load_checkpoint(path);
  EXPECT_EQ(loaded.metadata.at("epoch").get<int>(), result.best_epoch);
  EXPECT_EQ(loaded.model->params().snapshot(), result.model->params().snapshot());
}

TEST(Train, DetectionOnlyWeightsStillTrain) {
  auto cfg = tiny_config();
  cfg.weights = {0.0, 1.0, 0.0};
  cfg.epochs = 3;
  auto model = build_variant(cfg, three());
  const auto data = small_corpus(*model, 4);
  const auto result = train_prepared(std::move(model), data.train, data.val, cfg);
  ASSERT_EQ(result.epochs.size(), 3u);
  for (const auto& e : result.epochs) {
    EXPECT_TRUE(std::isfinite(e.train.total));
    EXPECT_TRUE(std::isfinite(e.val.log_loss));
  }
}

TEST(Train, DivergenceKeepsLastGoodCheckpoint) {
  testing::TempDir dir("trainer");
  auto cfg = tiny_config();
  cfg.epochs = 3;
  auto model = build_variant(cfg, three());
  const auto data = small_corpus(*model, 5);
  const auto path = dir.path() / "good.ckpt";
  DetectorModel* raw = model.get();
  std::vector<std::vector<double>> good;
  TrainOptions options{path, [&](const EpochLog&) {
                         // Poison one weight after the first epoch is checkpointed.
                         good = raw->params().snapshot();
                         raw->params().entries()[0].second->value[0] = std::numeric_limits<double>::quiet_NaN();
                       }};
  EXPECT_THROW(train_prepared(std::move(model), data.train, data.val, cfg, options), NumericError);
  const auto loaded = load_checkpoint(path);
  for (const auto& [name, v] : loaded.model->params().entries())
    for (double x : v->value) ASSERT_TRUE(std::isfinite(x)) << name;
  EXPECT_EQ(loaded.metadata.at("epoch").get<int>(), 1);
}

TEST(Train, EmptySplitsRejected) {
  auto cfg = tiny_config();
  auto model = build_variant(cfg, three());
  const auto data = small_corpus(*model, 6);
  EXPECT_THROW(train_prepared(std::move(model), data.train, {}, cfg), DataError);
}

TEST(Train, ReportListsEveryEpoch) {
  auto cfg = tiny_config();
  auto model = build_variant(cfg, three());
  const auto data = small_corpus(*model, 7);
  const auto result = train_prepared(std::move(model), data.train, data.val, cfg);
  const auto report = training_report(result, cfg);
  ASSERT_EQ(report.at("epochs").size(), 2u);
  EXPECT_TRUE(report.at("epochs")[0].at("train_loss").contains("L_C"));
  EXPECT_EQ(report.at("best_epoch").get<int>(), result.best_epoch);
}

}  // namespace
}  // namespace kinscope
