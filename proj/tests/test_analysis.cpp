#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "styleswin/analysis.hpp"
#include "test_util.hpp"

using namespace styleswin;
using namespace styleswin::testing;

namespace {

const double kPi = std::numbers::pi;

std::vector<double> ramp(std::int64_t n) {
  std::vector<double> s(n);
  for (std::int64_t i = 0; i < n; ++i) s[i] = -1.0 + 2.0 * double(i) / double(n - 1);
  return s;
}

/// Image tiled from κ×κ blocks with i.i.d. N(0,1) offsets.
Tensor blocky_image(std::int64_t n, std::int64_t k, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> offsets(n / k * (n / k));
  for (auto& o : offsets) o = rng.normal();
  std::vector<double> img(n * n);
  for (std::int64_t i = 0; i < n; ++i)
    for (std::int64_t j = 0; j < n; ++j) img[i * n + j] = offsets[(i / k) * (n / k) + j / k];
  return Tensor::from({n, n}, img);
}

/// Circular κ×κ box filter.
Tensor box_blur(const Tensor& img, std::int64_t k) {
  const std::int64_t n = img.dim(0);
  std::vector<double> out(n * n, 0.0);
  for (std::int64_t i = 0; i < n; ++i)
    for (std::int64_t j = 0; j < n; ++j)
      for (std::int64_t a = 0; a < k; ++a)
        for (std::int64_t b = 0; b < k; ++b)
          out[i * n + j] += img.at({(i + a - k / 2 + n) % n, (j + b - k / 2 + n) % n});
  for (auto& v : out) v /= double(k * k);
  return Tensor::from({n, n}, out);
}

/// Torus-smooth low-frequency gradient.
Tensor smooth_image(std::int64_t n) {
  std::vector<double> img(n * n);
  for (std::int64_t i = 0; i < n; ++i)
    for (std::int64_t j = 0; j < n; ++j)
      img[i * n + j] = 0.5 * std::cos(2 * kPi * i / n) + 0.3 * std::sin(2 * kPi * j / n);
  return Tensor::from({n, n}, img);
}

double naive_dft_abs(const std::vector<double>& img, std::int64_t n, std::int64_t u,
                     std::int64_t v) {
  std::complex<double> acc = 0;
  for (std::int64_t r = 0; r < n; ++r)
    for (std::int64_t c = 0; c < n; ++c)
      acc += img[r * n + c] * std::polar(1.0, -2 * kPi * double(u * r + v * c) / double(n));
  return std::abs(acc);
}

}  // namespace

TEST(Demo1D, ConstantSignalHasUnitRatio) {
  const auto r = demo_1d_window_attention(std::vector<double>(32, 0.7), 8, 1);
  EXPECT_EQ(r.boundary_jump_ratio, 1.0);
  for (double v : r.output) EXPECT_NEAR(v, r.output[0], 1e-12);
}

TEST(Demo1D, SingleWindowHasUnitRatio) {
  EXPECT_EQ(demo_1d_window_attention(ramp(8), 8, 2).boundary_jump_ratio, 1.0);
}

TEST(Demo1D, RampShowsBoundaryJumps) {
  std::vector<double> ratios;
  for (std::uint64_t seed = 0; seed < 10; ++seed)
    ratios.push_back(demo_1d_window_attention(ramp(64), 8, seed).boundary_jump_ratio);
  std::nth_element(ratios.begin(), ratios.begin() + 5, ratios.end());
  EXPECT_GT(ratios[5], 2.0);
}

TEST(Demo1D, RejectsRaggedSignal) {
  EXPECT_THROW(demo_1d_window_attention(ramp(10), 8, 0), ContractError);
}

TEST(FFT, MatchesNaiveDft) {
  const Tensor img = random_tensor({8, 8}, 3);
  const std::vector<double> v(img.data().begin(), img.data().end());
  const auto f = fft2(v, 8);
  for (std::int64_t u = 0; u < 8; ++u)
    for (std::int64_t w = 0; w < 8; ++w)
      EXPECT_NEAR(std::abs(f[u * 8 + w]), naive_dft_abs(v, 8, u, w), 1e-10);
}

TEST(FFT, InverseRoundTrip) {
  std::vector<std::complex<double>> a(16);
  for (int i = 0; i < 16; ++i) a[i] = {std::sin(i * 1.3), std::cos(i * 0.7)};
  auto b = a;
  fft(b);
  fft(b, true);
  for (int i = 0; i < 16; ++i) EXPECT_NEAR(std::abs(a[i] - b[i]), 0.0, 1e-12);
  std::vector<std::complex<double>> bad(12);
  EXPECT_THROW(fft(bad), ContractError);
}

TEST(Spectrum, ConstantImageOnlyDc) {
  const auto s = fft2_log_magnitude(Tensor::full({16, 16}, 0.3));
  for (std::int64_t r = 0; r < 16; ++r)
    for (std::int64_t c = 0; c < 16; ++c) {
      if (r == 8 && c == 8) {
        EXPECT_NEAR(s.at(r, c), std::log1p(0.3 * 256), 1e-12);
      } else {
        EXPECT_LT(s.at(r, c), 1e-12);
      }
    }
}

TEST(Spectrum, HorizontalCosineHasTwoPeaks) {
  const std::int64_t n = 16, f = 3;
  std::vector<double> img(n * n);
  for (std::int64_t i = 0; i < n; ++i)
    for (std::int64_t j = 0; j < n; ++j) img[i * n + j] = std::cos(2 * kPi * f * j / n);
  const auto s = fft2_log_magnitude(Tensor::from({n, n}, img));
  for (std::int64_t r = 0; r < n; ++r)
    for (std::int64_t c = 0; c < n; ++c) {
      const bool peak = r == n / 2 && (c == n / 2 + f || c == n / 2 - f);
      if (peak) {
        EXPECT_NEAR(s.at(r, c), std::log1p(n * n / 2.0), 1e-9);
      } else {
        EXPECT_LT(s.at(r, c), 1e-9) << r << "," << c;
      }
    }
}

TEST(Spectrum, ImpulseIsFlat) {
  std::vector<double> img(64, 0.0);
  img[4 * 8 + 4] = 1.0;
  const auto s = fft2_log_magnitude(Tensor::from({8, 8}, img));
  for (double v : s.log_magnitude) EXPECT_NEAR(v, std::log(2.0), 1e-12);
}

TEST(Spectrum, RealImageIsPointSymmetric) {
  const auto s = fft2_log_magnitude(random_tensor({16, 16, 3}, 4));
  for (std::int64_t r = 1; r < 16; ++r)
    for (std::int64_t c = 1; c < 16; ++c) EXPECT_NEAR(s.at(r, c), s.at(16 - r, 16 - c), 1e-6);
}

TEST(BlockingScore, BlockyBeatsBlurredByFive) {
  double worst = 1e300;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Tensor img = blocky_image(32, 8, seed);
    worst = std::min(worst, blocking_score(img, 8) / blocking_score(box_blur(img, 8), 8));
  }
  EXPECT_GE(worst, 5.0);
}

TEST(BlockingScore, SmoothGradientIsLow) { EXPECT_LT(blocking_score(smooth_image(32), 8), 0.05); }

TEST(BlockingScore, ConstantIsZeroAndDcInvariant) {
  EXPECT_EQ(blocking_score(Tensor::full({16, 16}, 2.0), 4), 0.0);
  const Tensor img = blocky_image(32, 8, 5);
  EXPECT_NEAR(blocking_score(img, 8), blocking_score(img + 3.0, 8), 1e-12);
}

TEST(BlockingScore, RejectsNonDividingWindow) {
  EXPECT_THROW(blocking_score(Tensor::zeros({16, 16}), 5), ContractError);
}

TEST(Footprint, PointwiseNetworkHasUnitWidth) {
  const auto net = make_probe_network(ProbeStack::Pointwise, 4, 2, 4, 3, 1);
  const auto r = footprint_probe(net, {1, 16, 16, 4}, 5, 9, 3);
  for (std::size_t d = 0; d < r.rows.size(); ++d) {
    EXPECT_EQ(r.rows[d], 1);
    EXPECT_EQ(r.cols[d], 1);
  }
}

TEST(Footprint, RegularWindowIsConfined) {
  const auto net = make_probe_network(ProbeStack::Swin, 4, 2, 8, 1, 2);
  const auto r = footprint_probe(net, {1, 32, 32, 4}, 16, 16, 1);
  EXPECT_EQ(r.rows[0], 8);
  EXPECT_EQ(r.cols[0], 8);
}

TEST(Footprint, WidthsAreMonotoneAndDoubleIsWider) {
  const Shape shape{1, 32, 32, 4};
  const auto dbl = footprint_probe(make_probe_network(ProbeStack::Double, 4, 2, 8, 3, 3), shape,
                                   16, 16, 3);
  const auto swin = footprint_probe(make_probe_network(ProbeStack::Swin, 4, 2, 8, 3, 3), shape,
                                    16, 16, 3);
  for (std::size_t d = 0; d < 3; ++d) {
    if (d > 0) {
      EXPECT_GE(dbl.rows[d], dbl.rows[d - 1]);
    }
    EXPECT_GT(dbl.rows[d], swin.rows[d]);
    EXPECT_GT(dbl.cols[d], swin.cols[d]);
  }
  // Union of the regular and half-shifted windows around the probe.
  EXPECT_EQ(dbl.rows[0], 12);
}

TEST(Frechet, IdenticalBatchesAreZero) {
  const Tensor x = random_tensor({80, 8, 8, 3}, 6);
  EXPECT_NEAR(proxy_distance(x, x), 0.0, 1e-6);
}

TEST(Frechet, MeanShiftConvergesToSquaredNorm) {
  Rng rng(7);
  const std::int64_t n = 20000, d = 4;
  Eigen::MatrixXd a(n, d), b(n, d);
  const Eigen::RowVector4d mu(1.0, -0.5, 0.25, 2.0);
  for (std::int64_t i = 0; i < n; ++i)
    for (std::int64_t j = 0; j < d; ++j) {
      a(i, j) = rng.normal();
      b(i, j) = rng.normal() + mu(j);
    }
  EXPECT_NEAR(frechet_distance(a, b), mu.squaredNorm(), 0.05);
}

TEST(Frechet, SymmetricAndScaleSensitive) {
  const Tensor x = random_tensor({70, 8, 8, 1}, 8), y = random_tensor({70, 8, 8, 1}, 9);
  EXPECT_NEAR(proxy_distance(x, y), proxy_distance(y, x), 1e-9);
  EXPECT_GT(proxy_distance(x, x * 2.0), 0.0);
}

TEST(Frechet, SingularCovarianceIsRegularized) {
  Eigen::MatrixXd a = Eigen::MatrixXd::Random(5, 8), b = Eigen::MatrixXd::Random(5, 8);
  bool reg = false;
  const double d = frechet_distance(a, b, &reg);
  EXPECT_TRUE(reg);
  EXPECT_TRUE(std::isfinite(d));
}
