#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "core/errors.hpp"
#include "encoder/encoder.hpp"
#include "test_util.hpp"

namespace kinscope {
namespace {

using testing::random_row;

EncoderConfig small_config() {
  EncoderConfig c;
  c.d = 8;
  c.aligned_length = 16;
  c.conv_channels = {4, 4, 4};
  c.kernel_sizes = {3, 3, 3};
  c.transformer_layers = 2;
  c.attention_heads = 2;
  c.ff_dim = 16;
  return c;
}

struct Fixture {
  nn::ParamStore store;
  ProbabilityEncoder encoder;

  Fixture(const EncoderConfig& cfg, int models, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    encoder = ProbabilityEncoder(cfg, models, store, rng);
  }
};

TokenProbMatrix random_matrix(std::mt19937_64& rng, int models, std::size_t min_len, std::size_t max_len,
                              std::size_t aligned) {
  std::uniform_int_distribution<std::size_t> len(min_len, max_len);
  std::vector<std::vector<double>> rows;
  for (int i = 0; i < models; ++i) rows.push_back(random_row(rng, len(rng)));
  return align_length(TokenProbMatrix::from_rows("m", std::move(rows)), aligned);
}

// ---- independent reference forward pass ----

const std::vector<double>& P(const nn::ParamStore& s, const std::string& name) { return s.find(name)->value; }

double ref_gelu(double x) {
  const double c = std::sqrt(2.0 / 3.14159265358979323846);
  return 0.5 * x * (1.0 + std::tanh(c * (x + 0.044715 * x * x * x)));
}

using Mat = std::vector<std::vector<double>>;  // rows x cols

Mat ref_dense(const Mat& x, const std::vector<double>& w, const std::vector<double>& b) {
  const std::size_t in = x[0].size(), out = b.size();
  Mat y(x.size(), std::vector<double>(out));
  for (std::size_t r = 0; r < x.size(); ++r)
    for (std::size_t o = 0; o < out; ++o) {
      double acc = b[o];
      for (std::size_t i = 0; i < in; ++i) acc += x[r][i] * w[i * out + o];
      y[r][o] = acc;
    }
  return y;
}

Mat ref_norm(const Mat& x, const std::vector<double>& gamma, const std::vector<double>& beta) {
  Mat y = x;
  for (std::size_t r = 0; r < x.size(); ++r) {
    const double n = static_cast<double>(x[r].size());
    double mean = 0.0, var = 0.0;
    for (double v : x[r]) mean += v / n;
    for (double v : x[r]) var += (v - mean) * (v - mean) / n;
    for (std::size_t k = 0; k < x[r].size(); ++k)
      y[r][k] = (x[r][k] - mean) / std::sqrt(var + 1e-5) * gamma[k] + beta[k];
  }
  return y;
}

Mat ref_attention(const Mat& q, const Mat& k, const Mat& v, int heads) {
  const std::size_t t = q.size(), d = q[0].size(), dh = d / heads;
  Mat out(t, std::vector<double>(d, 0.0));
  for (int h = 0; h < heads; ++h)
    for (std::size_t i = 0; i < t; ++i) {
      std::vector<double> w(t);
      for (std::size_t j = 0; j < t; ++j) {
        double dot = 0.0;
        for (std::size_t e = 0; e < dh; ++e) dot += q[i][h * dh + e] * k[j][h * dh + e];
        w[j] = dot / std::sqrt(static_cast<double>(dh));
      }
      const double mx = *std::max_element(w.begin(), w.end());
      double z = 0.0;
      for (auto& x : w) z += (x = std::exp(x - mx));
      for (std::size_t j = 0; j < t; ++j)
        for (std::size_t e = 0; e < dh; ++e) out[i][h * dh + e] += w[j] / z * v[j][h * dh + e];
    }
  return out;
}

Mat add(const Mat& a, const Mat& b) {
  Mat c = a;
  for (std::size_t r = 0; r < a.size(); ++r)
    for (std::size_t k = 0; k < a[r].size(); ++k) c[r][k] += b[r][k];
  return c;
}

/// Layer-by-layer evaluation straight from the named parameters.
Mat reference_encode(const nn::ParamStore& s, const EncoderConfig& cfg, const TokenProbMatrix& m) {
  const int models = static_cast<int>(m.model_count());
  const int len = cfg.aligned_length;
  Mat features;
  for (int i = 0; i < models; ++i) {
    Mat x(2, std::vector<double>(len));  // channels x tokens
    for (int l = 0; l < len; ++l) {
      const bool ok = m.mask[i][l] != 0;
      x[0][l] = ok ? m.logprobs[i][l] : 0.0;
      x[1][l] = ok ? 1.0 : 0.0;
    }
    for (std::size_t c = 0; c < cfg.conv_channels.size(); ++c) {
      const auto& w = P(s, "encoder.conv" + std::to_string(c) + ".weight");
      const auto& b = P(s, "encoder.conv" + std::to_string(c) + ".bias");
      const int cout = cfg.conv_channels[c], cin = static_cast<int>(x.size()), k = cfg.kernel_sizes[c];
      Mat y(cout, std::vector<double>(len));
      for (int o = 0; o < cout; ++o)
        for (int l = 0; l < len; ++l) {
          double acc = b[o];
          for (int ci = 0; ci < cin; ++ci)
            for (int t = 0; t < k; ++t) {
              const int src = l + t - k / 2;
              if (src >= 0 && src < len) acc += w[(o * cin + ci) * k + t] * x[ci][src];
            }
          y[o][l] = m.mask[i][l] ? ref_gelu(acc) : 0.0;
        }
      x = std::move(y);
    }
    std::vector<double> pooled(x.size(), 0.0);
    for (std::size_t c = 0; c < x.size(); ++c) {
      double best = -std::numeric_limits<double>::infinity();
      for (int l = 0; l < len; ++l)
        if (m.mask[i][l]) best = std::max(best, x[c][l]);
      if (best > -std::numeric_limits<double>::infinity()) pooled[c] = best;
    }
    auto e = ref_dense(Mat{pooled}, P(s, "encoder.to_model_dim.weight"), P(s, "encoder.to_model_dim.bias"))[0];
    const auto& emb = P(s, "encoder.model_embedding");
    for (int k = 0; k < cfg.d; ++k) e[k] += emb[i * cfg.d + k];
    features.push_back(e);
  }
  for (int l = 0; l < cfg.transformer_layers; ++l) {
    const std::string p = "encoder.layer" + std::to_string(l);
    auto dense = [&](const Mat& x, const std::string& n) { return ref_dense(x, P(s, n + ".weight"), P(s, n + ".bias")); };
    const auto att = ref_attention(dense(features, p + ".attn.query"), dense(features, p + ".attn.key"),
                                   dense(features, p + ".attn.value"), cfg.attention_heads);
    auto h = ref_norm(add(features, dense(att, p + ".attn.output")), P(s, p + ".norm1.gamma"), P(s, p + ".norm1.beta"));
    auto f = dense(h, p + ".ff.fc0");
    for (auto& row : f)
      for (auto& v : row) v = ref_gelu(v);
    features = ref_norm(add(h, dense(f, p + ".ff.fc1")), P(s, p + ".norm2.gamma"), P(s, p + ".norm2.beta"));
  }
  return features;
}

// ---- align_length ----

TEST(AlignLength, ExactLengthUnchanged) {
  auto m = align_length(TokenProbMatrix::from_rows("a", {{-1, -2, -3, -4, -5}}), 5);
  EXPECT_EQ(m.logprobs[0], (std::vector<double>{-1, -2, -3, -4, -5}));
  EXPECT_EQ(m.mask[0], (std::vector<std::uint8_t>{1, 1, 1, 1, 1}));
  EXPECT_EQ(m.aligned_length, 5u);
}

TEST(AlignLength, ShortRowPadded) {
  auto m = align_length(TokenProbMatrix::from_rows("a", {{-1, -2, -3}}), 5);
  EXPECT_EQ(m.logprobs[0], (std::vector<double>{-1, -2, -3, 0, 0}));
  EXPECT_EQ(m.mask[0], (std::vector<std::uint8_t>{1, 1, 1, 0, 0}));
}

TEST(AlignLength, LongRowMatchesSlice) {
  std::mt19937_64 rng(7);
  const auto row = random_row(rng, 700);
  auto m = align_length(TokenProbMatrix::from_rows("a", {row, {-0.5}}), 512);
  ASSERT_EQ(m.logprobs[0].size(), 512u);
  for (std::size_t j = 0; j < 512; ++j) EXPECT_EQ(m.logprobs[0][j], row[j]);
  EXPECT_TRUE(std::all_of(m.mask[0].begin(), m.mask[0].end(), [](auto b) { return b == 1; }));
  EXPECT_EQ(std::count(m.mask[1].begin(), m.mask[1].end(), 1), 1);
}

TEST(AlignLength, ExistingMaskCarried) {
  auto m = TokenProbMatrix::from_rows("a", {{-1, -2, -3, -4}});
  m.mask[0] = {1, 0, 1, 1};
  auto a = align_length(m, 6);
  EXPECT_EQ(a.mask[0], (std::vector<std::uint8_t>{1, 0, 1, 1, 0, 0}));
}

TEST(AlignLength, ZeroLengthRejected) {
  EXPECT_THROW(align_length(TokenProbMatrix::from_rows("a", {{-1}}), 0), ConfigError);
}

// ---- encode ----

TEST(Encode, ShapeAndFinite) {
  Fixture f(small_config(), 3, 1);
  std::mt19937_64 rng(2);
  auto out = encode(random_matrix(rng, 3, 5, 30, 16), f.encoder);
  EXPECT_EQ(out.models, 3);
  EXPECT_EQ(out.d, 8);
  ASSERT_EQ(out.values.size(), 24u);
  for (double v : out.values) EXPECT_TRUE(std::isfinite(v));
}

TEST(Encode, MatchesReferenceForward) {
  const auto cfg = small_config();
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    Fixture f(cfg, 3, seed);
    // Non-trivial biases and norm affines so every term is exercised.
    std::mt19937_64 rng(100 + seed);
    std::uniform_real_distribution<double> u(-0.5, 0.5);
    for (const auto& [name, v] : f.store.entries())
      if (name.find("bias") != std::string::npos || name.find("norm") != std::string::npos)
        for (auto& x : v->value) x += u(rng);
    const auto m = random_matrix(rng, 3, 4, 24, 16);
    const auto out = encode(m, f.encoder);
    const auto ref = reference_encode(f.store, cfg, m);
    for (int i = 0; i < 3; ++i)
      for (int k = 0; k < cfg.d; ++k) EXPECT_NEAR(out.at(i, k), ref[i][k], 1e-9) << "seed " << seed;
  }
}

TEST(Encode, ZeroWeightsPropagateBiases) {
  const auto cfg = small_config();
  Fixture f(cfg, 2, 3);
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (const auto& [name, v] : f.store.entries()) {
    const bool bias_like = name.find("bias") != std::string::npos || name.find("beta") != std::string::npos ||
                           name.find("gamma") != std::string::npos;
    for (auto& x : v->value) x = bias_like ? u(rng) : 0.0;
  }
  const auto m = random_matrix(rng, 2, 3, 20, 16);
  const auto out = encode(m, f.encoder);
  const auto ref = reference_encode(f.store, cfg, m);
  for (int i = 0; i < 2; ++i)
    for (int k = 0; k < cfg.d; ++k) EXPECT_NEAR(out.at(i, k), ref[i][k], 1e-9);
  // Input-independent with zero weights: every model row sees the same bias chain.
  const auto other = encode(random_matrix(rng, 2, 3, 20, 16), f.encoder);
  for (std::size_t j = 0; j < out.values.size(); ++j) EXPECT_NEAR(out.values[j], other.values[j], 1e-12);
}

TEST(Encode, AllZeroParametersGiveZero) {
  Fixture f(small_config(), 2, 3);
  for (const auto& [_, v] : f.store.entries()) std::fill(v->value.begin(), v->value.end(), 0.0);
  std::mt19937_64 rng(5);
  const auto out = encode(random_matrix(rng, 2, 3, 20, 16), f.encoder);
  for (double v : out.values) EXPECT_EQ(v, 0.0);
}

void check_mask_invariance(const EncoderConfig& cfg) {
  Fixture f(cfg, 3, 11);
  std::mt19937_64 rng(12);
  auto a = random_matrix(rng, 3, 4, 12, cfg.aligned_length);
  auto b = a;
  std::uniform_real_distribution<double> u(-30.0, 0.0);
  for (std::size_t i = 0; i < b.model_count(); ++i)
    for (std::size_t j = 0; j < b.aligned_length; ++j)
      if (!b.mask[i][j]) b.logprobs[i][j] = u(rng);
  ASSERT_NE(a.logprobs, b.logprobs);
  EXPECT_EQ(encode(a, f.encoder).values, encode(b, f.encoder).values);
}

TEST(Encode, MaskedPositionsIgnored) { check_mask_invariance(small_config()); }

TEST(Encode, MaskedPositionsIgnoredTokenAxis) {
  auto cfg = small_config();
  cfg.attention_axis = AttentionAxis::tokens;
  check_mask_invariance(cfg);
}

TEST(Encode, NaNAtMaskedPositionIgnored) {
  Fixture f(small_config(), 2, 1);
  std::mt19937_64 rng(3);
  auto a = random_matrix(rng, 2, 4, 8, 16);
  auto b = a;
  b.logprobs[0][15] = std::numeric_limits<double>::quiet_NaN();
  ASSERT_FALSE(b.mask[0][15]);
  EXPECT_EQ(encode(a, f.encoder).values, encode(b, f.encoder).values);
}

TEST(Encode, NaNInputRejected) {
  Fixture f(small_config(), 2, 1);
  std::mt19937_64 rng(3);
  auto m = random_matrix(rng, 2, 16, 16, 16);
  m.logprobs[1][4] = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(encode(m, f.encoder), DataError);
}

TEST(Encode, NonFiniteOutputRaises) {
  Fixture f(small_config(), 2, 1);
  f.store.find("encoder.model_embedding")->value[0] = std::numeric_limits<double>::infinity();
  std::mt19937_64 rng(3);
  EXPECT_THROW(encode(random_matrix(rng, 2, 16, 16, 16), f.encoder), NumericError);
}

TEST(Encode, UnalignedRejected) {
  Fixture f(small_config(), 1, 1);
  EXPECT_THROW(encode(TokenProbMatrix::from_rows("x", {{-1.0}}), f.encoder), DataError);
}

TEST(Encode, WrongShapeRejected) {
  Fixture f(small_config(), 2, 1);
  std::mt19937_64 rng(3);
  EXPECT_THROW(encode(random_matrix(rng, 3, 4, 8, 16), f.encoder), ShapeError);
  EXPECT_THROW(encode(random_matrix(rng, 2, 4, 8, 12), f.encoder), ShapeError);
}

TEST(Encode, Deterministic) {
  std::mt19937_64 rng(9);
  const auto m = random_matrix(rng, 3, 4, 20, 16);
  Fixture f1(small_config(), 3, 21), f2(small_config(), 3, 21);
  EXPECT_EQ(encode(m, f1.encoder).values, encode(m, f2.encoder).values);
  EXPECT_EQ(encode(m, f1.encoder).values, encode(m, f1.encoder).values);
}

TEST(Encode, BatchedForwardMatchesSingle) {
  Fixture f(small_config(), 2, 4);
  std::mt19937_64 rng(5);
  const auto a = make_encoder_input(random_matrix(rng, 2, 4, 20, 16));
  const auto b = make_encoder_input(random_matrix(rng, 2, 4, 20, 16));
  ag::NoGradGuard guard;
  const EncoderInput* both[] = {&a, &b};
  const EncoderInput* only_b[] = {&b};
  const auto joint = f.encoder.forward(both)->value;
  const auto single = f.encoder.forward(only_b)->value;
  for (std::size_t j = 0; j < single.size(); ++j) EXPECT_EQ(joint[single.size() + j], single[j]);
}

TEST(Encode, InvalidConfigRejected) {
  auto cfg = small_config();
  cfg.attention_heads = 3;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = small_config();
  cfg.kernel_sizes = {3, 4, 3};
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = small_config();
  cfg.conv_channels = {4, 4};
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = small_config();
  cfg.d = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
}

// Swapping model rows must change the output: rows are bound to models.
TEST(Encode, NotPermutationCovariantAfterTraining) {
  const auto cfg = small_config();
  Fixture f(cfg, 2, 31);
  std::mt19937_64 rng(32);
  std::vector<EncoderInput> inputs;
  for (int i = 0; i < 8; ++i) inputs.push_back(make_encoder_input(random_matrix(rng, 2, 6, 16, 16)));
  std::vector<const EncoderInput*> batch;
  for (const auto& in : inputs) batch.push_back(&in);
  // A few descent steps on a target that separates the two model slots.
  std::vector<double> target(8 * 2 * cfg.d);
  for (std::size_t j = 0; j < target.size(); ++j) target[j] = (j / cfg.d) % 2 ? 1.0 : -1.0;
  const auto tgt = ag::constant(target, {8, 2, cfg.d});
  for (int step = 0; step < 20; ++step) {
    f.store.zero_grad();
    auto loss = ag::sum_rows(ag::reshape(ag::mul(f.encoder.forward(batch), tgt), {1, 8 * 2 * cfg.d}));
    ag::backward(loss);
    for (const auto& [_, v] : f.store.entries())
      for (std::size_t j = 0; j < v->size(); ++j) v->value[j] += 0.01 * v->grad[j];
  }
  auto m = random_matrix(rng, 2, 6, 16, 16);
  auto swapped = m;
  std::swap(swapped.logprobs[0], swapped.logprobs[1]);
  std::swap(swapped.mask[0], swapped.mask[1]);
  const auto a = encode(m, f.encoder);
  const auto b = encode(swapped, f.encoder);
  double diff = 0.0;
  for (int k = 0; k < cfg.d; ++k) diff = std::max({diff, std::abs(a.at(0, k) - b.at(1, k)), std::abs(a.at(1, k) - b.at(0, k))});
  EXPECT_GT(diff, 1e-3);
}

// Analytic vs central-difference gradients of a fixed linear read-out.
TEST(Encode, GradientsMatchFiniteDifferences) {
  const auto cfg = small_config();
  for (std::uint64_t point = 0; point < 10; ++point) {
    Fixture f(cfg, 2, 500 + point);
    std::mt19937_64 rng(600 + point);
    std::uniform_real_distribution<double> u(-0.3, 0.3);
    for (const auto& [name, v] : f.store.entries())
      if (name.find("bias") != std::string::npos || name.find("beta") != std::string::npos)
        for (auto& x : v->value) x = u(rng);
    std::vector<EncoderInput> inputs;
    for (int i = 0; i < 4; ++i) inputs.push_back(make_encoder_input(random_matrix(rng, 2, 6, 16, 16)));
    std::vector<const EncoderInput*> batch;
    for (const auto& in : inputs) batch.push_back(&in);
    std::vector<double> w(4 * 2 * cfg.d);
    for (auto& x : w) x = u(rng);
    const auto weights = ag::constant(w, {4, 2, cfg.d});
    auto objective = [&] {
      return ag::sum_rows(ag::reshape(ag::mul(f.encoder.forward(batch), weights), {1, static_cast<int>(w.size())}));
    };
    f.store.zero_grad();
    ag::backward(objective());
    const double h = 1e-6;
    for (const auto& [name, v] : f.store.entries()) {
      std::uniform_int_distribution<std::size_t> pick(0, v->size() - 1);
      for (int probe = 0; probe < 3; ++probe) {
        const std::size_t j = pick(rng);
        const double keep = v->value[j];
        double plus, minus;
        {
          ag::NoGradGuard g;
          v->value[j] = keep + h;
          plus = objective()->value[0];
          v->value[j] = keep - h;
          minus = objective()->value[0];
        }
        v->value[j] = keep;
        const double numeric = (plus - minus) / (2 * h);
        const double analytic = v->grad[j];
        const double scale = std::max({std::abs(numeric), std::abs(analytic), 1e-3});
        EXPECT_LE(std::abs(numeric - analytic) / scale, 1e-4) << name << "[" << j << "] point " << point;
      }
    }
  }
}

}  // namespace
}  // namespace kinscope
