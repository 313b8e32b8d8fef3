#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <cmath>

#include "styleswin/discriminator.hpp"
#include "styleswin/gradcheck.hpp"
#include "test_util.hpp"

using namespace styleswin;
using namespace styleswin::testing;

namespace {

double exact_spectral_norm(const Tensor& w) {
  const std::int64_t rows = w.numel() / w.dim(w.rank() - 1), cols = w.dim(w.rank() - 1);
  Eigen::MatrixXd m(rows, cols);
  for (std::int64_t i = 0; i < rows; ++i)
    for (std::int64_t j = 0; j < cols; ++j) m(i, j) = w.data()[i * cols + j];
  return Eigen::JacobiSVD<Eigen::MatrixXd>(m).singularValues()(0);
}

DiscriminatorConfig small_config(DiscriminatorKind kind, std::int64_t size) {
  DiscriminatorConfig c;
  c.kind = kind;
  c.image_size = size;
  c.channels = {4, 6, 8, 8, 8};
  return c;
}

void zero_all(const ParamList& params) {
  for (const auto& [name, t] : params) {
    Tensor h = t;
    for (auto& v : h.mutable_data()) v = 0.0;
  }
}

void expect_grad_ok(const GradCheckResult& r, double tol) {
  EXPECT_LT(r.max_rel_error, tol) << "tensor " << r.worst_tensor << " index " << r.worst_index
                                  << " analytic " << r.analytic << " numeric " << r.numeric;
}

}  // namespace

TEST(Haar, ConstantImageHasOnlyLowBand) {
  const Tensor x = Tensor::full({1, 4, 6, 2}, 1.5);
  const HaarCoeffs c = haar_dwt(x);
  EXPECT_EQ(c.ll.shape(), (Shape{1, 2, 3, 2}));
  for (double v : c.ll.data()) EXPECT_DOUBLE_EQ(v, 3.0);
  for (const Tensor* t : {&c.lh, &c.hl, &c.hh})
    for (double v : t->data()) EXPECT_DOUBLE_EQ(v, 0.0);
}

TEST(Haar, SingleBlockBands) {
  // a b / c d = 1 2 / 3 5
  const Tensor x = Tensor::from({1, 2, 2, 1}, {1, 2, 3, 5});
  const HaarCoeffs c = haar_dwt(x);
  EXPECT_DOUBLE_EQ(c.ll.item(), (1 + 2 + 3 + 5) / 2.0);
  EXPECT_DOUBLE_EQ(c.lh.item(), (1 + 2 - 3 - 5) / 2.0);
  EXPECT_DOUBLE_EQ(c.hl.item(), (1 - 2 + 3 - 5) / 2.0);
  EXPECT_DOUBLE_EQ(c.hh.item(), (1 - 2 - 3 + 5) / 2.0);
}

TEST(Haar, ReconstructionAndParseval) {
  const Tensor x = random_tensor({2, 8, 6, 3}, 1);
  const HaarCoeffs c = haar_dwt(x);
  EXPECT_LT(max_abs_diff(haar_idwt(c), x), 1e-6);
  double energy = 0;
  for (const Tensor* t : {&c.ll, &c.lh, &c.hl, &c.hh}) energy += sum(square(*t)).item();
  EXPECT_NEAR(energy, sum(square(x)).item(), 1e-5);
  EXPECT_LT(max_abs_diff(haar_dwt_packed(haar_idwt_packed(haar_dwt_packed(x))), haar_dwt_packed(x)),
            1e-12);
}

TEST(Haar, RejectsOddSize) {
  EXPECT_THROW(haar_dwt(Tensor::zeros({1, 3, 4, 1})), ContractError);
}

TEST(Haar, GradientMatchesFiniteDifferences) {
  const Tensor x = random_tensor({1, 4, 4, 2}, 2);
  expect_grad_ok(finite_diff_check([](const Tensor& t) { return weighted_sum(haar_dwt_packed(t)); }, x),
                 1e-4);
  const Tensor p = random_tensor({1, 2, 2, 8}, 3);
  expect_grad_ok(finite_diff_check([](const Tensor& t) { return weighted_sum(haar_idwt_packed(t)); }, p),
                 1e-4);
}

TEST(SpectralNorm, DiagonalConverges) {
  Rng rng(4);
  const Tensor w = Tensor::from({2, 2}, {3, 0, 0, 1});
  auto sn = SpectralNorm::init(2, 2, rng);
  for (int i = 0; i < 20; ++i) sn.power_iteration(w);
  EXPECT_NEAR(sn.sigma(w).item(), exact_spectral_norm(w), 1e-3);
  EXPECT_NEAR(exact_spectral_norm(sn.normalize(w)), 1.0, 1e-3);
}

TEST(SpectralNorm, OrthogonalMatrixUnchanged) {
  Rng rng(5);
  const double c = std::cos(0.7), s = std::sin(0.7);
  const Tensor w = Tensor::from({2, 2}, {c, -s, s, c});
  auto sn = SpectralNorm::init(2, 2, rng);
  for (int i = 0; i < 3; ++i) sn.power_iteration(w);
  EXPECT_NEAR(sn.sigma(w).item(), 1.0, 1e-3);
  EXPECT_LT(max_abs_diff(sn.normalize(w), w), 1e-3);
}

TEST(SpectralNorm, RankOneExactAfterOneStep) {
  Rng rng(6);
  const Tensor a = Tensor::from({3, 1}, {0.6, 0.0, 0.8});
  const Tensor b = Tensor::from({1, 2}, {1 / std::sqrt(2.0), -1 / std::sqrt(2.0)});
  const Tensor w = matmul(a, b);
  auto sn = SpectralNorm::init(3, 2, rng);
  const Tensor out = spectral_normalize(w, sn);
  EXPECT_NEAR(sn.sigma(w).item(), 1.0, 1e-12);
  EXPECT_LT(max_abs_diff(out, w), 1e-12);
}

TEST(SpectralNorm, ZeroWeightIsGuarded) {
  Rng rng(7);
  auto sn = SpectralNorm::init(3, 4, rng);
  const Tensor out = spectral_normalize(Tensor::zeros({3, 4}), sn);
  for (double v : out.data()) EXPECT_EQ(v, 0.0);
  for (double v : sn.u.data()) EXPECT_TRUE(std::isfinite(v));
}

TEST(SpectralNorm, WarmedUpNormStaysNearOne) {
  Rng rng(8);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Tensor w = random_tensor({27, 6}, 100 + seed);
    auto sn = SpectralNorm::init(27, 6, rng);
    for (int i = 0; i < 20; ++i) sn.power_iteration(w);
    const double s = exact_spectral_norm(sn.normalize(w));
    EXPECT_GE(s, 0.9);
    EXPECT_LE(s, 1.1);
  }
}

TEST(SpectralNorm, GradientMatchesFiniteDifferences) {
  Rng rng(9);
  const Tensor w = random_tensor({5, 3}, 10);
  auto sn = SpectralNorm::init(5, 3, rng);
  for (int i = 0; i < 5; ++i) sn.power_iteration(w);
  expect_grad_ok(finite_diff_check([&] { return weighted_sum(sn.normalize(w)); }, {w}), 1e-4);
}

TEST(TotalVariation, ConstantIsZero) {
  EXPECT_EQ(tv_loss(Tensor::full({2, 5, 5, 3}, 0.4)).item(), 0.0);
}

TEST(TotalVariation, RampSlope) {
  Tensor x = Tensor::zeros({1, 6, 6, 1});
  auto d = x.mutable_data();
  for (int i = 0; i < 6; ++i)
    for (int j = 0; j < 6; ++j) d[i * 6 + j] = -0.3 * j;
  EXPECT_NEAR(tv_loss(x).item(), 0.3, 1e-12);
}

TEST(TotalVariation, GradientMatchesFiniteDifferences) {
  const Tensor x = random_tensor({1, 4, 4, 2}, 11);
  expect_grad_ok(finite_diff_check([](const Tensor& t) { return tv_loss(t); }, x), 1e-4);
}

TEST(DiscriminatorConfig, Validation) {
  auto c = small_config(DiscriminatorKind::Wavelet, 12);
  EXPECT_THROW(c.validate(), ConfigError);
  c = small_config(DiscriminatorKind::Wavelet, 4);
  EXPECT_THROW(c.validate(), ConfigError);
  c = small_config(DiscriminatorKind::Wavelet, 32);
  c.channels = {4, 4};
  EXPECT_THROW(c.validate(), ConfigError);
  EXPECT_EQ(parse_discriminator_kind("patch"), DiscriminatorKind::Patch);
  EXPECT_THROW(parse_discriminator_kind("stylegan"), ConfigError);
}

TEST(WaveletDiscriminator, ShapeContract) {
  Rng rng(12);
  const Discriminator d(small_config(DiscriminatorKind::Wavelet, 32), rng);
  EXPECT_EQ(d.forward(random_tensor({3, 32, 32, 3}, 13)).shape(), (Shape{3}));
}

TEST(WaveletDiscriminator, ZeroWeightsGiveZeroLogits) {
  Rng rng(14);
  const Discriminator d(small_config(DiscriminatorKind::Wavelet, 16), rng);
  zero_all(d.parameters());
  const Tensor logits = d.forward(random_tensor({2, 16, 16, 3}, 15));
  for (double v : logits.data()) EXPECT_EQ(v, 0.0);
}

TEST(WaveletDiscriminator, GradientMatchesFiniteDifferences) {
  Rng rng(16);
  Discriminator d(small_config(DiscriminatorKind::Wavelet, 16), rng);
  for (int i = 0; i < 3; ++i) d.power_iteration();
  const Tensor x = random_tensor({2, 16, 16, 3}, 17);
  auto leaves = tensors_of(d.parameters());
  leaves.push_back(x);
  expect_grad_ok(finite_diff_check([&] { return weighted_sum(d.forward(x)); }, leaves, 1e-5, 10),
                 1e-3);
}

TEST(WaveletDiscriminator, CombinedSpatialAddsConvLogit) {
  Rng rng(18);
  auto cfg = small_config(DiscriminatorKind::Wavelet, 16);
  cfg.combine_spatial = true;
  const Discriminator d(cfg, rng);
  bool has_conv = false, has_wavelet = false;
  for (const auto& [name, t] : d.parameters()) {
    has_conv |= name.rfind("conv.", 0) == 0;
    has_wavelet |= name.rfind("wavelet.", 0) == 0;
  }
  EXPECT_TRUE(has_conv);
  EXPECT_TRUE(has_wavelet);
  EXPECT_EQ(d.forward(random_tensor({2, 16, 16, 3}, 19)).shape(), (Shape{2}));
}

TEST(ConvDiscriminator, ShapeAndGradient) {
  Rng rng(20);
  const Discriminator d(small_config(DiscriminatorKind::Conv, 8), rng);
  const Tensor x = random_tensor({2, 8, 8, 3}, 21);
  EXPECT_EQ(d.forward(x).shape(), (Shape{2}));
  auto leaves = tensors_of(d.parameters());
  leaves.push_back(x);
  expect_grad_ok(finite_diff_check([&] { return weighted_sum(d.forward(x)); }, leaves, 1e-5, 10),
                 1e-3);
}

TEST(PatchDiscriminator, ShapeContract) {
  Rng rng(22);
  const Discriminator d(small_config(DiscriminatorKind::Patch, 32), rng);
  EXPECT_EQ(d.forward(random_tensor({2, 32, 32, 3}, 23)).shape(), (Shape{2, 8, 8}));
}

TEST(PatchDiscriminator, TranslationPermutesInteriorLogits) {
  Rng rng(24);
  const Discriminator d(small_config(DiscriminatorKind::Patch, 32), rng);
  const Tensor x = random_tensor({1, 32, 32, 3}, 25);
  const Tensor a = d.forward(x);
  const Tensor b = d.forward(roll2d(x, 4, 4));
  double worst = 0;
  for (std::int64_t p = 1; p <= 6; ++p)
    for (std::int64_t q = 1; q <= 6; ++q)
      worst = std::max(worst, std::abs(b.at({0, p + 1, q + 1}) - a.at({0, p, q})));
  EXPECT_LT(worst, 1e-12);
}

TEST(PatchDiscriminator, GradientMatchesFiniteDifferences) {
  Rng rng(26);
  const Discriminator d(small_config(DiscriminatorKind::Patch, 8), rng);
  const Tensor x = random_tensor({1, 8, 8, 3}, 27);
  auto leaves = tensors_of(d.parameters());
  leaves.push_back(x);
  expect_grad_ok(finite_diff_check([&] { return weighted_sum(d.forward(x)); }, leaves, 1e-5, 10),
                 1e-3);
}

TEST(Discriminator, SecondOrderThroughWaveletDiscriminator) {
  Rng rng(28);
  const Discriminator d(small_config(DiscriminatorKind::Wavelet, 8), rng);
  const Tensor x = random_tensor({2, 8, 8, 3}, 29);
  auto penalty = [&] {
    EnableGradGuard guard;
    Tensor xi = x.detach();
    xi.set_requires_grad(true);
    const Tensor g = grad(sum(d.forward(xi)), {xi}, true)[0];
    return sum(square(g));
  };
  expect_grad_ok(finite_diff_check(penalty, tensors_of(d.parameters()), 1e-5, 8), 1e-3);
}

TEST(Discriminator, BuffersTrackPowerIteration) {
  Rng rng(30);
  Discriminator d(small_config(DiscriminatorKind::Conv, 8), rng);
  const auto before = d.buffers();
  ASSERT_FALSE(before.empty());
  const Tensor u0 = before.front().second.clone();
  d.power_iteration();
  EXPECT_FALSE(bit_equal(d.buffers().front().second, u0));
  auto cfg = small_config(DiscriminatorKind::Conv, 8);
  cfg.spectral_norm = false;
  EXPECT_TRUE(Discriminator(cfg, rng).buffers().empty());
}
