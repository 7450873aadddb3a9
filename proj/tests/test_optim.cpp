#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include <nlohmann/json.hpp>

#include "lsel/dataset.hpp"
#include "lsel/errors.hpp"
#include "lsel/optim.hpp"
#include "lsel/synth.hpp"
#include "lsel/train.hpp"
#include "support.hpp"

namespace lsel::optim {
namespace {

TEST(CosineLr, Endpoints) {
  const CosineSchedule s{1e-3, 1e-5, 100};
  EXPECT_DOUBLE_EQ(cosine_lr(s, 0), 1e-3);
  EXPECT_NEAR(cosine_lr(s, 100), 1e-5, 1e-18);
  EXPECT_NEAR(cosine_lr(s, 50), (1e-3 + 1e-5) / 2, 1e-18);
  EXPECT_DOUBLE_EQ(cosine_lr(s, 1000), 1e-5);
  EXPECT_THROW(cosine_lr(CosineSchedule{1e-3, 0.0, 0}, 0), DomainError);
}

TEST(CosineLr, NonIncreasingAndBounded) {
  const CosineSchedule s{5e-5, 0.0, 977};
  double prev = s.lr0;
  for (std::size_t t = 0; t <= 977; ++t) {
    const double lr = cosine_lr(s, t);
    EXPECT_LE(lr, prev);
    EXPECT_GE(lr, s.lr_min);
    EXPECT_LE(lr, s.lr0);
    prev = lr;
  }
}

TEST(AdamW, ZeroGradientNoDecayIsIdentity) {
  Vector theta{1.0, -2.0, 3.5};
  const Vector grad(3, 0.0);
  AdamWState st;
  st.hyper.weight_decay = 0.0;
  for (int i = 0; i < 5; ++i) ASSERT_TRUE(adamw_step({theta}, {grad}, st, 0.1));
  EXPECT_EQ(theta, (Vector{1.0, -2.0, 3.5}));
  EXPECT_EQ(st.step, 5u);
}

TEST(AdamW, FirstStepHandValue) {
  Vector theta{1.0};
  const Vector grad{1.0};
  AdamWState st;
  st.hyper.weight_decay = 0.0;
  adamw_step({theta}, {grad}, st, 0.1);
  // m_hat = v_hat = 1 after bias correction.
  EXPECT_NEAR(theta[0], 1.0 - 0.1 * (1.0 / (1.0 + 1e-8)), 1e-15);
  EXPECT_NEAR(theta[0], 0.9, 1e-8);
}

TEST(AdamW, DecoupledDecay) {
  Vector theta{1.0};
  const Vector grad{0.0};
  AdamWState st;
  st.hyper.weight_decay = 0.1;
  adamw_step({theta}, {grad}, st, 0.1);
  EXPECT_DOUBLE_EQ(theta[0], 0.99);
}

TEST(AdamW, MatchesIndependentMultiStepRecurrence) {
  std::mt19937_64 rng(8);
  Vector theta = testing::gaussian_vector(4, rng);
  Vector ref = theta, m(4, 0.0), v(4, 0.0);
  AdamWState st;
  const auto& hp = st.hyper;
  for (int t = 1; t <= 25; ++t) {
    const Vector g = testing::gaussian_vector(4, rng);
    const double lr = 0.01 * (1.0 + 0.1 * t);
    adamw_step({theta}, {g}, st, lr);
    for (std::size_t i = 0; i < 4; ++i) {
      m[i] = hp.beta1 * m[i] + (1 - hp.beta1) * g[i];
      v[i] = hp.beta2 * v[i] + (1 - hp.beta2) * g[i] * g[i];
      const double mh = m[i] / (1 - std::pow(hp.beta1, t));
      const double vh = v[i] / (1 - std::pow(hp.beta2, t));
      ref[i] -= lr * (mh / (std::sqrt(vh) + hp.eps) + hp.weight_decay * ref[i]);
    }
    for (std::size_t i = 0; i < 4; ++i) ASSERT_NEAR(theta[i], ref[i], 1e-12);
  }
  for (const auto& vv : st.v)
    for (double x : vv) EXPECT_GE(x, 0.0);
}

TEST(AdamW, NonFiniteGradientRefusesStep) {
  Vector theta{1.0, 2.0};
  AdamWState st;
  adamw_step({theta}, {Vector{0.5, 0.5}}, st, 0.1);
  const Vector before = theta;
  const AdamWState state_before = st;
  EXPECT_FALSE(adamw_step({theta}, {Vector{std::nan(""), 0.0}}, st, 0.1));
  EXPECT_FALSE(adamw_step({theta}, {Vector{0.0, INFINITY}}, st, 0.1));
  EXPECT_EQ(theta, before);
  EXPECT_EQ(st, state_before);
}

TEST(AdamW, ConvexQuadraticDecreasesAfterWarmup) {
  // L = sum_i c_i (x_i - t_i)^2 with distinct curvatures.
  const Vector c{1.0, 4.0, 0.25}, target{1.0, -2.0, 3.0};
  Vector x{5.0, 5.0, -5.0};
  auto loss = [&] {
    double l = 0;
    for (std::size_t i = 0; i < 3; ++i) l += c[i] * (x[i] - target[i]) * (x[i] - target[i]);
    return l;
  };
  AdamWState st;
  st.hyper.weight_decay = 0.0;
  double prev = loss();
  for (int step = 0; step < 300; ++step) {
    Vector g(3);
    for (std::size_t i = 0; i < 3; ++i) g[i] = 2 * c[i] * (x[i] - target[i]);
    adamw_step({x}, {g}, st, 1e-3);
    const double now = loss();
    if (step >= 10) {
      EXPECT_LT(now, prev) << "step " << step;
    }
    prev = now;
  }
}

TEST(ClipGradNorm, RescalesOnlyAboveThreshold) {
  Vector a{3.0}, b{4.0};
  EXPECT_DOUBLE_EQ(clip_grad_norm({a, b}, 10.0), 5.0);
  EXPECT_EQ(a[0], 3.0);
  EXPECT_DOUBLE_EQ(clip_grad_norm({a, b}, 1.0), 5.0);
  EXPECT_NEAR(std::hypot(a[0], b[0]), 1.0, 1e-15);
}

TEST(FiniteDiff, QuadraticAndConstant) {
  const Vector theta{3.0};
  const Vector analytic{6.0};
  EXPECT_LE(finite_diff_check([](std::span<const double> p) { return p[0] * p[0]; }, theta, analytic, 1e-5), 1e-9);
  const Vector zero{0.0, 0.0};
  EXPECT_EQ(finite_diff_check([](std::span<const double>) { return 7.0; }, zero, zero, 1e-5), 0.0);
  EXPECT_THROW(finite_diff_check([](std::span<const double>) { return std::nan(""); }, zero, zero, 1e-5),
               NumericalError);
  const Vector wrong{5.0};
  EXPECT_GT(finite_diff_check([](std::span<const double> p) { return p[0] * p[0]; }, theta, wrong, 1e-5), 0.1);
}

TEST(FiniteDiff, FlattenUnflattenRoundTrip) {
  Vector a{1, 2}, b{3, 4, 5};
  const Vector flat = flatten({a, b});
  EXPECT_EQ(flat, (Vector{1, 2, 3, 4, 5}));
  Vector c(2), d(3);
  unflatten(flat, {c, d});
  EXPECT_EQ(c, a);
  EXPECT_EQ(d, b);
  EXPECT_THROW(unflatten(Vector{1.0}, {c, d}), DomainError);
}

// ---------------------------------------------------------------------------
// Two-stage training on a small planted benchmark.

struct SmallData {
  LabeledFeatures train, val;
};

SmallData small_data(std::uint64_t seed = 3, double shift = 2.0) {
  synth::SynthConfig cfg;
  cfg.n_editors = 4;
  cfg.samples_per_editor = 30;
  cfg.n_layers = 3;
  cfg.dim = 16;
  cfg.informative_layer = 1;
  cfg.shift = shift;
  cfg.seed = seed;
  const auto bm = synth::generate_benchmark(cfg);
  return {gather_layer(bm.manifest, bm.real, bm.edited, 1, Split::train),
          gather_layer(bm.manifest, bm.real, bm.edited, 1, Split::val)};
}

TrainConfig small_config() {
  TrainConfig cfg;
  cfg.layer = 1;
  cfg.embed_dim = 32;
  cfg.rank = 4;
  cfg.hidden = 32;
  cfg.adapter_epochs = 3;
  cfg.head_epochs = 3;
  cfg.batch = 16;
  cfg.seed = 5;
  return cfg;
}

TEST(Train, ZeroEpochsKeepsInitialization) {
  const auto d = small_data();
  auto cfg = small_config();
  cfg.adapter_epochs = cfg.head_epochs = 0;
  const auto res = train(d.train, d.val, cfg);
  EXPECT_TRUE(res.trace.empty());
  EXPECT_EQ(res.best_adapter_epoch, 0u);
  EXPECT_EQ(res.best_head_epoch, 0u);
  EXPECT_EQ(res.checkpoint, initialize_checkpoint(d.train, cfg));
}

TEST(Train, InitializationDetails) {
  const auto d = small_data();
  const auto cfg = small_config();
  const auto ckpt = initialize_checkpoint(d.train, cfg);
  EXPECT_EQ(ckpt.layer, 1u);
  EXPECT_EQ(ckpt.encoder.out_dim(), 32u);
  EXPECT_EQ(ckpt.encoder.rank(), 4u);
  QualityScores mean{};
  double n = 0;
  for (const auto& s : d.train.scores) {
    if (!s) continue;
    for (std::size_t k = 0; k < 3; ++k) mean[k] += (*s)[k];
    n += 1;
  }
  for (std::size_t k = 0; k < 3; ++k) EXPECT_NEAR(ckpt.quality.b2[k], mean[k] / n, 1e-12);
  // The normalizer standardizes the training rows.
  double m0 = 0;
  for (const auto& x : d.train.feats) m0 += ckpt.normalizer.apply(x)[0];
  EXPECT_NEAR(m0 / static_cast<double>(d.train.size()), 0.0, 1e-9);
}

TEST(Train, DeterministicTraceAndCheckpoint) {
  const auto d = small_data();
  const auto cfg = small_config();
  const auto a = train(d.train, d.val, cfg);
  const auto b = train(d.train, d.val, cfg);
  EXPECT_EQ(a.trace, b.trace);
  EXPECT_EQ(a.checkpoint, b.checkpoint);
  auto other = cfg;
  other.seed = 6;
  EXPECT_NE(train(d.train, d.val, other).trace, a.trace);
}

TEST(Train, TraceCoversBothStagesWithScheduledRates) {
  const auto d = small_data();
  const auto cfg = small_config();
  const auto res = train(d.train, d.val, cfg);
  const std::size_t n_real = d.train.count(0);
  const std::size_t adapter_steps = cfg.adapter_epochs * ((n_real + cfg.batch - 1) / cfg.batch);
  ASSERT_GT(res.trace.size(), adapter_steps);
  EXPECT_EQ(res.trace.front().stage, "contrastive");
  EXPECT_DOUBLE_EQ(res.trace.front().lr, cfg.lr_adapter);
  EXPECT_EQ(res.trace[adapter_steps].stage, "heads");
  EXPECT_DOUBLE_EQ(res.trace[adapter_steps].lr, cfg.lr_heads);
  for (std::size_t i = 1; i < res.trace.size(); ++i) {
    // Each stage counts its own steps under its own schedule.
    if (res.trace[i].stage == res.trace[i - 1].stage) {
      EXPECT_EQ(res.trace[i].step, res.trace[i - 1].step + 1);
      EXPECT_LE(res.trace[i].lr, res.trace[i - 1].lr);
    } else {
      EXPECT_EQ(res.trace[i].step, 0u);
    }
  }
  EXPECT_LE(res.best_adapter_epoch, cfg.adapter_epochs);
  EXPECT_LE(res.best_head_epoch, cfg.head_epochs);

  std::ostringstream out;
  write_loss_trace(res.trace, out);
  std::istringstream in(out.str());
  std::string line;
  std::size_t lines = 0;
  while (std::getline(in, line)) {
    const auto j = nlohmann::json::parse(line);
    EXPECT_TRUE(j.contains("step") && j.contains("stage") && j.contains("lr") && j.contains("loss"));
    ++lines;
  }
  EXPECT_EQ(lines, res.trace.size());
}

TEST(Train, ContrastiveLossBeatsIndifferenceOnSeparableData) {
  const auto d = small_data(4, 3.0);
  auto cfg = small_config();
  cfg.batch = 8;
  const std::size_t steps_per_epoch = (d.train.count(0) + cfg.batch - 1) / cfg.batch;
  cfg.adapter_epochs = (500 + steps_per_epoch - 1) / steps_per_epoch;
  cfg.head_epochs = 0;
  const auto res = train(d.train, d.val, cfg);
  ASSERT_GE(res.trace.size(), 500u);
  double tail = 0;
  for (std::size_t i = res.trace.size() - 20; i < res.trace.size(); ++i) tail += res.trace[i].loss;
  EXPECT_LT(tail / 20.0, std::log(2.0));
}

TEST(Train, DivergenceAbortsWithTrace) {
  const auto d = small_data();
  auto cfg = small_config();
  cfg.adapter_epochs = 0;
  cfg.lr_heads = 1e300;
  try {
    train(d.train, d.val, cfg);
    FAIL() << "expected divergence";
  } catch (const TrainingDiverged& e) {
    EXPECT_FALSE(e.trace().empty());
    EXPECT_EQ(e.trace().back().stage, "heads");
  }
}

TEST(Train, EmptyTrainSplitRejected) {
  const auto d = small_data();
  EXPECT_THROW(train(LabeledFeatures{}, d.val, small_config()), DataError);
}

}  // namespace
}  // namespace lsel::optim
