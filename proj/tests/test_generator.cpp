#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "styleswin/generator.hpp"
#include "styleswin/gradcheck.hpp"
#include "test_util.hpp"

using namespace styleswin;
using namespace styleswin::testing;

namespace {

GeneratorConfig micro_config() {
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

void randomize(Tensor& t, std::uint64_t seed, double scale) {
  Tensor r = random_tensor(t.shape(), seed, scale);
  auto d = t.mutable_data();
  auto s = r.data();
  std::copy(s.begin(), s.end(), d.begin());
}

}  // namespace

TEST(SPE, OriginIsSinZeroCosOne) {
  const Tensor e = spe_encode(4, 4, 16);
  for (std::int64_t c = 0; c < 16; ++c) EXPECT_EQ(e.at({0, 0, c}), c % 2 == 0 ? 0.0 : 1.0);
}

TEST(SPE, FirstFrequencyIsOne) {
  const Tensor e = spe_encode(4, 5, 8);
  EXPECT_DOUBLE_EQ(e.at({3, 2, 0}), std::sin(3.0));
  EXPECT_DOUBLE_EQ(e.at({3, 2, 1}), std::cos(3.0));
  EXPECT_DOUBLE_EQ(e.at({3, 2, 4}), std::sin(2.0));
  EXPECT_DOUBLE_EQ(e.at({3, 2, 5}), std::cos(2.0));
  // Second frequency 1e-8 with the verbatim exponent.
  EXPECT_NEAR(e.at({3, 2, 2}), std::sin(3e-8), 1e-20);
}

TEST(SPE, RotationIdentity) {
  for (double divisor : {1.0, 16.0}) {
    const std::int64_t n = 12, c = 16, half = c / 2;
    const Tensor e = spe_encode(n, n, c, divisor);
    // Row position p on the first half of channels, column position on the second.
    auto at = [&](bool rows, std::int64_t p, std::int64_t other, std::int64_t ch) {
      return rows ? e.at({p, other, ch}) : e.at({other, p, half + ch});
    };
    double worst = 0;
    for (std::int64_t k = 0; k < c / 4; ++k) {
      const double omega = 1.0 / std::pow(10000.0, 2.0 * double(k) / divisor);
      for (std::int64_t delta = 1; delta < 4; ++delta) {
        const double cs = std::cos(omega * double(delta)), sn = std::sin(omega * double(delta));
        for (bool rows : {true, false}) {
          for (std::int64_t p = 0; p + delta < n; ++p) {
            const std::int64_t other = (p * 5) % n;
            const double s0 = at(rows, p, other, 2 * k), c0 = at(rows, p, other, 2 * k + 1);
            const double s1 = at(rows, p + delta, other, 2 * k);
            const double c1 = at(rows, p + delta, other, 2 * k + 1);
            worst = std::max(worst, std::abs(s1 - (s0 * cs + c0 * sn)));
            worst = std::max(worst, std::abs(c1 - (c0 * cs - s0 * sn)));
          }
        }
      }
    }
    EXPECT_LT(worst, 1e-9) << "divisor " << divisor;
  }
}

TEST(SPE, RejectsChannelsNotDivisibleByFour) {
  EXPECT_THROW(spe_encode(4, 4, 6), ConfigError);
}

TEST(ToRGB, ZeroWeightsAndShape) {
  const Linear zero = Linear::zeros(5, 3);
  const Tensor y = zero(random_tensor({2, 4, 4, 5}, 1));
  EXPECT_EQ(y.shape(), (Shape{2, 4, 4, 3}));
  for (double v : y.data()) EXPECT_EQ(v, 0.0);
}

TEST(ToRGB, GradientMatchesFiniteDifferences) {
  Rng rng(2);
  const Linear rgb{glorot_normal({5, 3}, 5, 3, rng, 0.02), random_tensor({3}, 3)};
  const Tensor x = random_tensor({2, 3, 3, 5}, 4);
  const auto r =
      finite_diff_check([&] { return weighted_sum(rgb(x)); }, {x, rgb.weight, rgb.bias});
  EXPECT_LT(r.max_rel_error, 1e-4);
}

TEST(GeneratorConfig, DeskDefaults) {
  const auto c = GeneratorConfig::desk();
  ASSERT_EQ(c.num_scales(), 4);
  EXPECT_EQ(c.scales[0].channels, 128);
  EXPECT_EQ(c.scales[0].window, 4);
  EXPECT_EQ(c.scales[0].heads, 8);
  EXPECT_EQ(c.scales[3].channels, 32);
  EXPECT_EQ(c.scales[3].window, 8);
  EXPECT_EQ(c.style, StyleVariant::AdaIN);
  EXPECT_EQ(GeneratorConfig::desk(16).num_scales(), 3);
}

TEST(GeneratorConfig, Validation) {
  auto c = micro_config();
  c.target_size = 12;
  EXPECT_THROW(c.validate(), ConfigError);
  c = micro_config();
  c.scales[1].heads = 3;
  EXPECT_THROW(c.validate(), ConfigError);
  c = micro_config();
  c.scales[0].window = 8;
  EXPECT_THROW(c.validate(), ConfigError);
  c = micro_config();
  c.scales.pop_back();
  EXPECT_THROW(c.validate(), ConfigError);
  c = micro_config();
  c.scales[1] = {6, 4, 2};
  EXPECT_THROW(c.validate(), ConfigError);
  c.use_spe = false;
  EXPECT_NO_THROW(c.validate());
}

TEST(Generator, OutputShapeAndDeterminism) {
  Rng rng(5);
  auto cfg = GeneratorConfig::desk(16);
  cfg.mlp_ratio = 1.0;
  const Generator g(cfg, rng);
  const Tensor z = random_tensor({2, 128}, 6);
  const Tensor a = g.forward(z);
  EXPECT_EQ(a.shape(), (Shape{2, 16, 16, 3}));
  EXPECT_TRUE(bit_equal(a, g.forward(z)));
}

TEST(Generator, SameSeedSameParameters) {
  Rng r1(7), r2(7);
  const Generator a(micro_config(), r1), b(micro_config(), r2);
  const auto pa = a.parameters(), pb = b.parameters();
  ASSERT_EQ(pa.size(), pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) EXPECT_TRUE(bit_equal(pa[i].second, pb[i].second));
}

TEST(Generator, NonFiniteActivationsNameTheScale) {
  Rng rng(8);
  Generator g(micro_config(), rng);
  Tensor bad = g.constant_input().clone();
  bad.mutable_data()[0] = std::numeric_limits<double>::quiet_NaN();
  g.set_constant_input(bad);
  try {
    g.forward(random_tensor({1, 4}, 9));
    FAIL() << "expected NumericalError";
  } catch (const NumericalError& e) {
    EXPECT_NE(std::string(e.what()).find("4x4"), std::string::npos) << e.what();
  }
}

TEST(Generator, MicroConfigGradientMatchesFiniteDifferences) {
  Rng rng(10);
  const Generator g(micro_config(), rng);
  ParamList params = g.parameters();
  std::uint64_t seed = 100;
  for (auto& [name, t] : params) {
    if (name.find("rpe_table") != std::string::npos) randomize(t, seed++, 0.3);
  }
  const Tensor z = random_tensor({2, 4}, 11);
  auto leaves = tensors_of(params);
  leaves.push_back(z);
  const auto r =
      finite_diff_check([&] { return weighted_sum(g.forward(z)); }, leaves, 1e-5, 6);
  EXPECT_LT(r.max_rel_error, 1e-3) << "tensor " << params[std::min(r.worst_tensor, params.size() - 1)].first
                                   << " analytic " << r.analytic << " numeric " << r.numeric;
}

TEST(Generator, EveryStyleVariantRuns) {
  for (auto v : {StyleVariant::AdaIN, StyleVariant::AdaLN, StyleVariant::AdaBN,
                 StyleVariant::AdaRMSNorm, StyleVariant::ModulatedMLP,
                 StyleVariant::CrossAttention, StyleVariant::None}) {
    auto cfg = micro_config();
    cfg.style = v;
    Rng rng(12);
    const Generator g(cfg, rng);
    const Tensor y = g.forward(random_tensor({2, 4}, 13));
    EXPECT_EQ(y.shape(), (Shape{2, 8, 8, 3})) << to_string(v);
    EXPECT_TRUE(all_finite(y)) << to_string(v);
  }
}

TEST(Generator, BaselineHasNoMappingNetwork) {
  auto cfg = micro_config();
  cfg.style = StyleVariant::None;
  cfg.attention = BlockAttention::Swin;
  Rng rng(14);
  const Generator g(cfg, rng);
  for (const auto& [name, t] : g.parameters()) {
    EXPECT_EQ(name.find("mapping"), std::string::npos) << name;
    EXPECT_EQ(name.find("style"), std::string::npos) << name;
  }
  EXPECT_FALSE(g.constant_input().defined());
}

TEST(Generator, ToroidalTranslationEquivariance) {
  GeneratorConfig cfg;
  cfg.start_size = 8;
  cfg.target_size = 8;
  cfg.scales = {{8, 4, 2}};
  cfg.z_dim = 4;
  cfg.w_dim = 4;
  cfg.mapping_depth = 2;
  cfg.mlp_ratio = 2.0;
  cfg.use_spe = false;
  cfg.use_rpe = false;
  Rng rng(15);
  Generator g(cfg, rng);
  const Tensor z = random_tensor({2, 4}, 16);
  const Tensor base_input = g.constant_input().clone();
  const Tensor y = g.forward(z);
  g.set_constant_input(roll2d(base_input, 4, 4));
  const Tensor shifted = g.forward(z);
  EXPECT_LT(max_abs_diff(shifted, roll2d(y, 4, 4)), 1e-5);
}

TEST(Generator, DoublingTargetAddsOneStage) {
  auto small = GeneratorConfig::desk(16);
  auto large = GeneratorConfig::desk(32);
  Rng r1(17), r2(17);
  const std::int64_t delta = Generator(large, r1).parameter_count() -
                             Generator(small, r2).parameter_count();
  // Oracle: projection 64->32, two AdaIN double-attention blocks at C=32 with
  // h=4, κ=8, mlp hidden 4·32, and a 32->3 tRGB.
  const std::int64_t c = 32, prev = 64, h = 4, k = 8, hidden = 4 * c, w = 128;
  const std::int64_t affine = w * 2 * c + 2 * c;
  const std::int64_t attention = 4 * (c * c + c) + (2 * k - 1) * (2 * k - 1) * h;
  const std::int64_t mlp = c * hidden + hidden + hidden * c + c;
  const std::int64_t block = 2 * affine + attention + mlp;
  const std::int64_t expected = (prev * c + c) + 2 * block + (c * 3 + 3);
  EXPECT_EQ(delta, expected);
}

TEST(Generator, CloneIsIndependent) {
  Rng rng(18);
  const Generator g(micro_config(), rng);
  const Generator copy = g.clone();
  const Tensor z = random_tensor({1, 4}, 19);
  EXPECT_TRUE(bit_equal(g.forward(z), copy.forward(z)));
  auto p = copy.parameters();
  p.back().second.mutable_data()[0] += 1.0;
  EXPECT_FALSE(bit_equal(g.forward(z), copy.forward(z)));
}

TEST(LatentLerp, EndpointsAndSymmetry) {
  const Tensor z0 = random_tensor({2, 6}, 20);
  const Tensor z1 = random_tensor({2, 6}, 21);
  EXPECT_TRUE(bit_equal(latent_lerp(z0, z1, 0.0), z0));
  EXPECT_TRUE(bit_equal(latent_lerp(z0, z1, 1.0), z1));
  const Tensor mid = latent_lerp(z0, neg(z0), 0.5);
  for (double v : mid.data()) EXPECT_EQ(v, 0.0);
  EXPECT_THROW(latent_lerp(z0, z1, 1.5), ContractError);
}
