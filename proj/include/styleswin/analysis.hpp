#pragma once

#include <complex>
#include <cstdint>
#include <functional>
#include <vector>

#include <Eigen/Dense>

#include "styleswin/tensor.hpp"

namespace styleswin {

struct WindowDemoResult {
  std::vector<double> output;
  double boundary_jump_ratio = 1.0;
};

/// One random-projection attention head applied independently to each
/// length-κ window of a scalar signal. The ratio compares mean |Δ| across
/// window boundaries with mean |Δ| inside windows (1 when undefined).
WindowDemoResult demo_1d_window_attention(const std::vector<double>& signal, std::int64_t window,
                                          std::uint64_t seed, std::int64_t embed_dim = 16);

/// In-place radix-2 FFT; size must be a power of two.
void fft(std::vector<std::complex<double>>& a, bool inverse = false);
/// Row-major 2D FFT of an n×n grid.
std::vector<std::complex<double>> fft2(const std::vector<double>& img, std::int64_t n);

/// log(1+|F|) of the centered DFT of a square grayscale image.
struct Spectrum2D {
  std::int64_t size = 0;
  std::vector<double> log_magnitude;  // row-major, DC at (size/2, size/2)

  double at(std::int64_t row, std::int64_t col) const { return log_magnitude[row * size + col]; }
};

/// [H,W], [H,W,C] or [1,H,W,C] image reduced to a row-major grayscale grid
/// by averaging channels.
std::vector<double> to_grayscale(const Tensor& img, std::int64_t* size);

Spectrum2D fft2_log_magnitude(const Tensor& img);

/// Share of non-DC spectral power within ±1 bin of the window lattice
/// {(m1·S/κ, m2·S/κ)} \ {DC}. The radius drops to 0 when S/κ ≤ 2, where ±1
/// neighborhoods would tile the whole plane.
double blocking_score(const Tensor& img, std::int64_t window);
/// Mean blocking score over the images of a [B,H,W,C] batch.
double mean_blocking_score(const Tensor& batch, std::int64_t window);

struct FootprintReport {
  /// Per depth: number of input rows / columns with any |∂y/∂x| > 1e-9.
  std::vector<std::int64_t> rows;
  std::vector<std::int64_t> cols;
  /// Channel-summed |∂y/∂x| over the [H,W] input grid at the deepest probe.
  std::vector<double> deepest_map;
};

/// `forward(x, depth)` maps [1,H,W,C] to [1,H,W,C'] through `depth` blocks.
/// Probes the channel-sum of the output at (row, col) for depths 1..max_depth.
FootprintReport footprint_probe(const std::function<Tensor(const Tensor&, std::int64_t)>& forward,
                                const Shape& input_shape, std::int64_t row, std::int64_t col,
                                std::int64_t max_depth, std::uint64_t seed = 0);

enum class ProbeStack { Double, Swin, Pointwise };

/// LayerNorm transformer stack for footprint probing: Double = double-attention
/// blocks, Swin = alternating regular/shifted blocks, Pointwise = MLP-only
/// blocks. Weights are drawn at unit scale (N(0, 1/fan_in), RPE N(0, 1)) so
/// that every structurally present path clears the probe threshold.
using ProbeNetwork = std::function<Tensor(const Tensor&, std::int64_t)>;
ProbeNetwork make_probe_network(ProbeStack stack, std::int64_t dim, std::int64_t heads,
                                std::int64_t window, std::int64_t max_depth, std::uint64_t seed);

/// Fréchet distance between Gaussian fits of the rows of two feature
/// matrices. Singular covariances are regularized with 1e-6·I.
double frechet_distance(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b,
                        bool* regularized = nullptr);

/// Fréchet distance of 64-d random projections of flattened images; the
/// projection is a frozen function of `seed` and the image size.
double proxy_distance(const Tensor& real, const Tensor& fake, std::uint64_t seed = 0x5eed);

}  // namespace styleswin
