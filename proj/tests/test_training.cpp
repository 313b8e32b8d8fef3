#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "styleswin/gradcheck.hpp"
#include "styleswin/training.hpp"
#include "test_util.hpp"

using namespace styleswin;
using namespace styleswin::testing;

namespace {

const double kLog2 = std::log(2.0);

GeneratorConfig micro_generator() {
  GeneratorConfig c;
  c.start_size = 4;
  c.target_size = 8;
  c.scales = {{8, 2, 2}, {4, 4, 2}};
  c.z_dim = 4;
  c.w_dim = 4;
  c.mapping_depth = 2;
  c.mlp_ratio = 2.0;
  c.spe_divisor = 4.0;
  return c;
}

DiscriminatorConfig micro_discriminator() {
  DiscriminatorConfig c;
  c.image_size = 8;
  c.channels = {4, 6, 8};
  return c;
}

TrainConfig micro_train() {
  TrainConfig t;
  t.batch_size = 2;
  t.total_iters = 10;
  t.r1_interval = 2;
  return t;
}

/// Flattened two-layer discriminator used to probe R1 second derivatives.
struct TinyD {
  Linear l1, l2;
  Tensor operator()(const Tensor& x) const {
    const Tensor flat = reshape(x, {x.dim(0), -1});
    return reshape(l2(leaky_relu(l1(flat))), {x.dim(0)});
  }
};

}  // namespace

TEST(Losses, ZeroLogitsAnalytic) {
  const Tensor zero = Tensor::zeros({4});
  EXPECT_NEAR(loss_d(zero, zero).item(), 2 * kLog2, 1e-12);
  EXPECT_NEAR(loss_g(zero).item(), kLog2, 1e-12);
  EXPECT_NEAR(loss_d(zero, zero).item() + loss_g(zero).item(), 3 * kLog2, 1e-9);
}

TEST(Losses, SaturatedLimits) {
  const Tensor big = Tensor::full({3}, 60.0);
  EXPECT_LT(loss_d(big, neg(big)).item(), 1e-20);
  EXPECT_LT(loss_g(big).item(), 1e-20);
  // Softplus form stays finite where log(sigmoid) would underflow.
  EXPECT_NEAR(loss_g(Tensor::full({1}, -800.0)).item(), 800.0, 1e-9);
}

TEST(Losses, GradientsMatchFiniteDifferences) {
  const Tensor r = random_tensor({5}, 1, 2.0), f = random_tensor({5}, 2, 2.0);
  EXPECT_LT(finite_diff_check([&] { return loss_d(r, f); }, {r, f}).max_rel_error, 1e-4);
  EXPECT_LT(finite_diff_check([&] { return loss_g(f); }, {f}).max_rel_error, 1e-4);
}

TEST(R1, QuadraticDiscriminatorAnalytic) {
  const double gamma = 3.0;
  const Tensor x = random_tensor({3, 2, 2, 3}, 3);
  const auto d = [](const Tensor& t) { return sum(square(t), {1, 2, 3}) * 0.5; };
  double expected = 0;
  for (double v : x.data()) expected += v * v;
  expected = gamma * expected / 3.0;
  EXPECT_NEAR(r1_penalty(d, x, gamma).item(), expected, 1e-6);
}

TEST(R1, ConstantDiscriminatorIsZero) {
  const Tensor x = random_tensor({2, 2, 2, 1}, 4);
  const auto d = [](const Tensor& t) { return sum(t * 0.0, {1, 2, 3}) + 1.0; };
  EXPECT_EQ(r1_penalty(d, x, 10.0).item(), 0.0);
}

TEST(R1, ParameterGradientMatchesFiniteDifferences) {
  Rng rng(5);
  const TinyD d{Linear{randn({12, 6}, rng, 0.5), randn({6}, rng, 0.1)},
                Linear{randn({6, 1}, rng, 0.5), randn({1}, rng, 0.1)}};
  const Tensor x = random_tensor({3, 2, 2, 3}, 6);
  const auto r = finite_diff_check([&] { return r1_penalty(std::cref(d), x, 2.0); },
                                   {d.l1.weight, d.l1.bias, d.l2.weight});
  EXPECT_LT(r.max_rel_error, 1e-3);
}

TEST(R1, LazyIntervalScaling) {
  Rng rng(7);
  const Discriminator d(micro_discriminator(), rng);
  const Tensor x = random_tensor({2, 8, 8, 3}, 8, 0.5);
  const auto fn = [&](const Tensor& t) { return d.forward(t); };
  const std::int64_t interval = 16;
  double every_step = 0;
  for (std::int64_t i = 0; i < interval; ++i) every_step += r1_penalty(fn, x, 10.0).item();
  const double lazy = r1_penalty(fn, x, 10.0).item() * double(interval);
  EXPECT_NEAR(lazy, every_step, 1e-6);
  EXPECT_GT(lazy, 0.0);
}

TEST(Augment, ZeroProbabilitiesAreIdentity) {
  const Tensor x = random_tensor({3, 8, 8, 3}, 9);
  Rng rng(10);
  EXPECT_TRUE(bit_equal(augment(x, AugmentationSpec::identity(), rng), x));
}

TEST(Augment, DeterministicPerSeed) {
  const Tensor x = random_tensor({4, 8, 8, 3}, 11);
  Rng a(12), b(12);
  const Tensor ya = augment(x, {}, a);
  EXPECT_TRUE(bit_equal(ya, augment(x, {}, b)));
  EXPECT_FALSE(bit_equal(ya, x));
}

TEST(Augment, TranslationBoundIsEighthOfSize) {
  const std::int64_t s = 32;
  Tensor x = Tensor::zeros({1, s, s, 1});
  x.mutable_data()[16 * s + 16] = 1.0;
  AugmentationSpec spec = AugmentationSpec::identity();
  spec.translation_p = 1.0;
  Rng rng(13);
  std::int64_t widest = 0;
  for (int trial = 0; trial < 400; ++trial) {
    const Tensor y = augment(x, spec, rng);
    const auto d = y.data();
    const auto it = std::find(d.begin(), d.end(), 1.0);
    ASSERT_NE(it, d.end());
    const std::int64_t pos = it - d.begin();
    const std::int64_t dy = pos / s - 16, dx = pos % s - 16;
    widest = std::max({widest, std::abs(dy), std::abs(dx)});
  }
  EXPECT_EQ(widest, 4);
}

TEST(Augment, CutoutMasksHalfSizeSquare) {
  const Tensor x = Tensor::ones({2, 16, 16, 3});
  AugmentationSpec spec = AugmentationSpec::identity();
  spec.cutout_p = 1.0;
  Rng rng(14);
  const Tensor y = augment(x, spec, rng);
  const auto d = y.data();
  EXPECT_EQ(std::count(d.begin(), d.end(), 0.0), 2 * 8 * 8 * 3);
}

TEST(Augment, FlipMirrorsColumns) {
  const Tensor x = random_tensor({1, 4, 4, 2}, 15);
  AugmentationSpec spec = AugmentationSpec::identity();
  spec.flip_p = 1.0;
  Rng rng(16);
  const Tensor y = augment(x, spec, rng);
  for (std::int64_t i = 0; i < 4; ++i)
    for (std::int64_t j = 0; j < 4; ++j)
      for (std::int64_t c = 0; c < 2; ++c) EXPECT_EQ(y.at({0, i, j, c}), x.at({0, i, 3 - j, c}));
}

TEST(Augment, ColorJitterIsAffinePerChannel) {
  const Tensor x = Tensor::zeros({1, 2, 2, 3});
  AugmentationSpec spec = AugmentationSpec::identity();
  spec.color_p = 1.0;
  Rng rng(17);
  const Tensor y = augment(x, spec, rng);
  const double b = y.at({0, 0, 0, 0});
  EXPECT_LE(std::abs(b), 0.5);
  for (double v : y.data()) EXPECT_EQ(v, b);
}

TEST(BCR, IdentityAugmentationOrZeroWeightIsZero) {
  Rng rng(18);
  const Discriminator d(micro_discriminator(), rng);
  const auto fn = [&](const Tensor& t) { return d.forward(t); };
  const Tensor real = random_tensor({2, 8, 8, 3}, 19), fake = random_tensor({2, 8, 8, 3}, 20);
  Rng a(21);
  EXPECT_EQ(bcr_loss(fn, real, fake, AugmentationSpec::identity(), 10, 10, a).item(), 0.0);
  EXPECT_EQ(bcr_loss(fn, real, fake, {}, 0, 0, a).item(), 0.0);
  EXPECT_GT(bcr_loss(fn, real, fake, {}, 10, 10, a).item(), 0.0);
}

TEST(BCR, MatchesDirectFormula) {
  const auto d = [](const Tensor& t) { return mean(t, {1, 2, 3}); };
  const Tensor real = random_tensor({3, 8, 8, 1}, 22), fake = random_tensor({3, 8, 8, 1}, 23);
  Rng a(24), b(24);
  const double got = bcr_loss(d, real, fake, {}, 2.0, 5.0, a).item();
  const Tensor ra = augment(real, {}, b), fa = augment(fake, {}, b);
  auto msd = [](const Tensor& p, const Tensor& q) {
    double s = 0;
    for (std::size_t i = 0; i < p.data().size(); ++i) s += std::pow(p.data()[i] - q.data()[i], 2);
    return s / double(p.numel());
  };
  EXPECT_NEAR(got, 2.0 * msd(d(real), d(ra)) + 5.0 * msd(d(fake), d(fa)), 1e-12);
}

TEST(Adam, FirstStepIsSignedLearningRate) {
  Tensor p = Tensor::from({3}, {1.0, 2.0, 3.0});
  const Tensor g = Tensor::from({3}, {0.5, -2.0, 0.0});
  AdamState s = AdamState::zeros_like({p});
  adam_step({p}, {g}, s, 0.1, 0.0, 0.99, 1e-8);
  EXPECT_NEAR(p.data()[0], 0.9, 1e-7);
  EXPECT_NEAR(p.data()[1], 2.1, 1e-7);
  EXPECT_EQ(p.data()[2], 3.0);
}

TEST(Adam, QuadraticBowlConverges) {
  // Components of comparable magnitude: with β1 = 0 a coordinate whose optimum
  // lies within lr of the start keeps oscillating at amplitude ~lr.
  const Tensor target = Tensor::from({6}, {0.8, -1.2, 0.5, 1.5, -0.7, 1.0});
  Tensor theta = Tensor::zeros({6});
  AdamState s = AdamState::zeros_like({theta});
  for (int i = 0; i < 200; ++i) {
    std::vector<double> g(6);
    for (int j = 0; j < 6; ++j) g[j] = 2.0 * (theta.data()[j] - target.data()[j]);
    adam_step({theta}, {Tensor::from({6}, g)}, s, 0.1, 0.0, 0.99);
  }
  EXPECT_LT(max_abs_diff(theta, target) * std::sqrt(6.0), 1e-3);
}

TEST(EMA, DecayEndpointsAndFixedPoint) {
  const ParamList live = {{"a", random_tensor({4}, 26)}};
  const ParamList ema = {{"a", random_tensor({4}, 27)}};
  const Tensor before = ema[0].second.clone();
  ema_update(ema, live, 1.0);
  EXPECT_TRUE(bit_equal(ema[0].second, before));
  ema_update(ema, live, 0.0);
  EXPECT_TRUE(bit_equal(ema[0].second, live[0].second));
  for (int i = 0; i < 50; ++i) ema_update(ema, live, 0.9978);
  EXPECT_TRUE(bit_equal(ema[0].second, live[0].second));
  EXPECT_THROW(ema_update(ema, {{"b", random_tensor({4}, 28)}}, 0.5), ContractError);
  EXPECT_THROW(ema_update(ema, {{"a", random_tensor({5}, 28)}}, 0.5), ContractError);
}

TEST(Schedules, LinearLearningRateDecay) {
  TrainConfig c;
  c.total_iters = 100;
  c.lr_decay_start = 60;
  EXPECT_EQ(lr_schedule(59, c), std::make_pair(5e-5, 2e-4));
  EXPECT_EQ(lr_schedule(100, c), std::make_pair(0.0, 0.0));
  const auto [g, d] = lr_schedule(80, c);
  EXPECT_NEAR(g, 2.5e-5, 1e-18);
  EXPECT_NEAR(d, 1e-4, 1e-18);
  c.lr_decay_start = -1;
  EXPECT_EQ(lr_schedule(99, c), std::make_pair(5e-5, 2e-4));
}

TEST(Schedules, TvAnnealing) {
  TrainConfig c;
  c.total_iters = 100;
  c.tv_anneal_end_iter = 40;
  EXPECT_EQ(tv_weight(0, c), 10.0);
  EXPECT_NEAR(tv_weight(20, c), 5.0, 1e-12);
  EXPECT_EQ(tv_weight(40, c), 0.0);
  EXPECT_EQ(tv_weight(90, c), 0.0);
}

TEST(Config, RecipeDefaults) {
  const TrainConfig t;
  EXPECT_EQ(t.lr_g, 5e-5);
  EXPECT_EQ(t.lr_d, 2e-4);
  EXPECT_EQ(t.lr_ratio(), 4.0);
  EXPECT_EQ(t.beta1, 0.0);
  EXPECT_EQ(t.beta2, 0.99);
  EXPECT_EQ(t.r1_interval, 16);
  EXPECT_EQ(t.bcr_lambda_real, 10.0);
  EXPECT_EQ(t.bcr_lambda_fake, 10.0);
  EXPECT_EQ(t.ema_decay, 0.9978);
  const AugmentationSpec a;
  EXPECT_EQ(a.flip_p, 0.5);
  EXPECT_EQ(a.color_p, 1.0);
  EXPECT_EQ(a.translation_p, 1.0);
  EXPECT_EQ(a.cutout_p, 1.0);
  EXPECT_EQ(a.translation_frac, 0.125);
  EXPECT_EQ(a.cutout_frac, 0.5);
}

TEST(Config, Validation) {
  TrainConfig t;
  t.r1_interval = 0;
  EXPECT_THROW(t.validate(), ConfigError);
  t = TrainConfig{};
  t.r1_gamma = -1;
  EXPECT_THROW(t.validate(), ConfigError);
  AugmentationSpec a;
  a.flip_p = 1.5;
  EXPECT_THROW(a.validate(), ConfigError);
}

TEST(Trainer, IdenticalSeedsGiveBitIdenticalMetrics) {
  Trainer a(micro_generator(), micro_discriminator(), micro_train(), {});
  Trainer b(micro_generator(), micro_discriminator(), micro_train(), {});
  const Tensor real = random_tensor({2, 8, 8, 3}, 29, 0.5);
  for (int i = 0; i < 3; ++i) {
    const MetricsRow ra = a.step(real), rb = b.step(real);
    EXPECT_TRUE(bit_identical(ra, rb)) << "iteration " << i;
    EXPECT_GT(ra.loss_d, 0.0);
    EXPECT_TRUE(std::isfinite(ra.grad_norm_g));
  }
}

TEST(Trainer, R1OnlyOnScheduledIterations) {
  Trainer t(micro_generator(), micro_discriminator(), micro_train(), {});
  const Tensor real = random_tensor({2, 8, 8, 3}, 30, 0.5);
  EXPECT_GT(t.step(real).r1, 0.0);
  EXPECT_EQ(t.step(real).r1, 0.0);
  EXPECT_GT(t.step(real).r1, 0.0);
}

TEST(Trainer, ZeroLearningRatesFreezeParameters) {
  TrainConfig cfg = micro_train();
  cfg.lr_g = 0;
  cfg.lr_d = 0;
  Trainer t(micro_generator(), micro_discriminator(), cfg, {});
  const auto before_g = t.generator().clone().parameters();
  std::vector<Tensor> before_d;
  for (const auto& [n, p] : t.discriminator().parameters()) before_d.push_back(p.clone());
  const Tensor real = random_tensor({2, 8, 8, 3}, 31, 0.5);
  for (int i = 0; i < 2; ++i) t.step(real);
  const auto after_g = t.generator().parameters();
  for (std::size_t i = 0; i < after_g.size(); ++i)
    EXPECT_TRUE(bit_equal(after_g[i].second, before_g[i].second)) << after_g[i].first;
  const auto after_d = t.discriminator().parameters();
  for (std::size_t i = 0; i < after_d.size(); ++i)
    EXPECT_TRUE(bit_equal(after_d[i].second, before_d[i])) << after_d[i].first;
}

TEST(Trainer, NonFiniteLossNamesTheTerm) {
  Trainer t(micro_generator(), micro_discriminator(), micro_train(), {});
  Tensor real = random_tensor({2, 8, 8, 3}, 32);
  real.mutable_data()[5] = std::numeric_limits<double>::quiet_NaN();
  try {
    t.step(real);
    FAIL() << "expected TrainingFault";
  } catch (const TrainingFault& e) {
    EXPECT_EQ(e.term(), "loss_d");
    EXPECT_EQ(e.iteration(), 0);
  }
}
