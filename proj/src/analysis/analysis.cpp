#include "styleswin/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <memory>
#include <mutex>
#include <numbers>
#include <set>
#include <utility>

#include "styleswin/attention.hpp"
#include "styleswin/ops.hpp"
#include "styleswin/random.hpp"

namespace styleswin {

namespace {

Eigen::MatrixXd random_matrix(std::int64_t rows, std::int64_t cols, Rng& rng, double stddev) {
  Eigen::MatrixXd m(rows, cols);
  for (std::int64_t i = 0; i < rows; ++i)
    for (std::int64_t j = 0; j < cols; ++j) m(i, j) = stddev * rng.normal();
  return m;
}

bool is_power_of_two(std::int64_t n) { return n > 0 && (n & (n - 1)) == 0; }

}  // namespace

WindowDemoResult demo_1d_window_attention(const std::vector<double>& signal, std::int64_t window,
                                          std::uint64_t seed, std::int64_t embed_dim) {
  const std::int64_t n = static_cast<std::int64_t>(signal.size());
  if (window <= 0 || n % window != 0)
    throw ContractError("demo_1d: signal length must be a multiple of the window");
  Rng rng(seed);
  const double s = 1.0 / std::sqrt(double(embed_dim));
  const Eigen::VectorXd lift = random_matrix(embed_dim, 1, rng, 1.0);
  const Eigen::VectorXd offset = random_matrix(embed_dim, 1, rng, 1.0);
  const Eigen::MatrixXd wq = random_matrix(embed_dim, embed_dim, rng, s);
  const Eigen::MatrixXd wk = random_matrix(embed_dim, embed_dim, rng, s);
  const Eigen::MatrixXd wv = random_matrix(embed_dim, embed_dim, rng, s);
  const Eigen::VectorXd wo = random_matrix(embed_dim, 1, rng, s);

  Eigen::MatrixXd tokens(embed_dim, n);
  for (std::int64_t t = 0; t < n; ++t) tokens.col(t) = signal[t] * lift + offset;
  const Eigen::MatrixXd q = wq * tokens, k = wk * tokens, v = wv * tokens;

  WindowDemoResult result;
  result.output.resize(n);
  for (std::int64_t w0 = 0; w0 < n; w0 += window) {
    const Eigen::MatrixXd logits =
        q.middleCols(w0, window).transpose() * k.middleCols(w0, window) * s;
    for (std::int64_t i = 0; i < window; ++i) {
      Eigen::RowVectorXd p = (logits.row(i).array() - logits.row(i).maxCoeff()).exp();
      p /= p.sum();
      result.output[w0 + i] = wo.dot(v.middleCols(w0, window) * p.transpose());
    }
  }

  double across = 0, within = 0;
  std::int64_t n_across = 0, n_within = 0;
  for (std::int64_t t = 1; t < n; ++t) {
    const double d = std::abs(result.output[t] - result.output[t - 1]);
    if (t % window == 0) {
      across += d;
      ++n_across;
    } else {
      within += d;
      ++n_within;
    }
  }
  if (n_across == 0 || n_within == 0) return result;
  across /= double(n_across);
  within /= double(n_within);
  const double tiny = 1e-12;
  if (within < tiny) {
    result.boundary_jump_ratio =
        across < tiny ? 1.0 : std::numeric_limits<double>::infinity();
  } else {
    result.boundary_jump_ratio = across / within;
  }
  return result;
}

void fft(std::vector<std::complex<double>>& a, bool inverse) {
  const std::size_t n = a.size();
  if (!is_power_of_two(std::int64_t(n))) throw ContractError("fft: size must be a power of two");
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double angle = 2 * std::numbers::pi / double(len) * (inverse ? 1 : -1);
    for (std::size_t i = 0; i < n; i += len) {
      for (std::size_t k = 0; k < len / 2; ++k) {
        const std::complex<double> w = std::polar(1.0, angle * double(k));
        const auto u = a[i + k], v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
      }
    }
  }
  if (inverse) {
    for (auto& x : a) x /= double(n);
  }
}

std::vector<std::complex<double>> fft2(const std::vector<double>& img, std::int64_t n) {
  if (std::int64_t(img.size()) != n * n) throw ShapeError("fft2: expected an n×n grid");
  std::vector<std::complex<double>> out(img.begin(), img.end()), line(n);
  for (std::int64_t r = 0; r < n; ++r) {
    std::copy_n(out.begin() + r * n, n, line.begin());
    fft(line);
    std::copy(line.begin(), line.end(), out.begin() + r * n);
  }
  for (std::int64_t c = 0; c < n; ++c) {
    for (std::int64_t r = 0; r < n; ++r) line[r] = out[r * n + c];
    fft(line);
    for (std::int64_t r = 0; r < n; ++r) out[r * n + c] = line[r];
  }
  return out;
}

std::vector<double> to_grayscale(const Tensor& img, std::int64_t* size) {
  Shape s = img.shape();
  if (s.size() == 4) {
    if (s[0] != 1) throw ShapeError("to_grayscale: expected a single image");
    s.erase(s.begin());
  }
  if (s.size() == 2) s.push_back(1);
  if (s.size() != 3 || s[0] != s[1]) throw ShapeError("to_grayscale: expected a square image");
  const std::int64_t n = s[0], c = s[2];
  const auto d = img.data();
  std::vector<double> gray(n * n, 0.0);
  for (std::int64_t i = 0; i < n * n; ++i) {
    for (std::int64_t ch = 0; ch < c; ++ch) gray[i] += d[i * c + ch];
    gray[i] /= double(c);
  }
  if (size) *size = n;
  return gray;
}

Spectrum2D fft2_log_magnitude(const Tensor& img) {
  std::int64_t n = 0;
  const auto gray = to_grayscale(img, &n);
  const auto f = fft2(gray, n);
  Spectrum2D s;
  s.size = n;
  s.log_magnitude.resize(n * n);
  for (std::int64_t r = 0; r < n; ++r)
    for (std::int64_t c = 0; c < n; ++c) {
      const std::int64_t rr = (r + n / 2) % n, cc = (c + n / 2) % n;
      s.log_magnitude[rr * n + cc] = std::log1p(std::abs(f[r * n + c]));
    }
  return s;
}

double blocking_score(const Tensor& img, std::int64_t window) {
  std::int64_t n = 0;
  const auto gray = to_grayscale(img, &n);
  if (window <= 0 || n % window != 0)
    throw ContractError("blocking_score: window must divide the image size");
  const auto f = fft2(gray, n);
  const std::int64_t step = n / window;
  const std::int64_t radius = step > 2 ? 1 : 0;
  std::set<std::pair<std::int64_t, std::int64_t>> bins;
  for (std::int64_t m1 = 0; m1 < window; ++m1)
    for (std::int64_t m2 = 0; m2 < window; ++m2) {
      if (m1 == 0 && m2 == 0) continue;
      for (std::int64_t d1 = -radius; d1 <= radius; ++d1)
        for (std::int64_t d2 = -radius; d2 <= radius; ++d2)
          bins.emplace(((m1 * step + d1) % n + n) % n, ((m2 * step + d2) % n + n) % n);
    }
  bins.erase({0, 0});
  double total = 0;
  for (std::int64_t i = 1; i < n * n; ++i) total += std::norm(f[i]);
  // Round-off floor: a constant image leaves only ~1e-30 of non-DC power.
  double dc = std::norm(f[0]);
  if (total <= 1e-24 * std::max(1.0, dc)) return 0.0;
  double lattice = 0;
  for (const auto& [r, c] : bins) lattice += std::norm(f[r * n + c]);
  return lattice / total;
}

double mean_blocking_score(const Tensor& batch, std::int64_t window) {
  if (batch.rank() != 4) throw ShapeError("mean_blocking_score expects [B,H,W,C]");
  double s = 0;
  const std::int64_t b = batch.dim(0);
  for (std::int64_t i = 0; i < b; ++i) s += blocking_score(slice(batch, 0, i, i + 1), window);
  return b > 0 ? s / double(b) : 0.0;
}

FootprintReport footprint_probe(const std::function<Tensor(const Tensor&, std::int64_t)>& forward,
                                const Shape& input_shape, std::int64_t row, std::int64_t col,
                                std::int64_t max_depth, std::uint64_t seed) {
  if (input_shape.size() != 4 || input_shape[0] != 1)
    throw ShapeError("footprint_probe expects a [1,H,W,C] input");
  const std::int64_t h = input_shape[1], w = input_shape[2], c = input_shape[3];
  Rng rng(seed);
  Tensor x = randn(input_shape, rng);
  x.set_requires_grad(true);
  FootprintReport report;
  EnableGradGuard enable;
  for (std::int64_t depth = 1; depth <= max_depth; ++depth) {
    const Tensor y = forward(x, depth);
    Tensor mask = Tensor::zeros(y.shape());
    {
      auto m = mask.mutable_data();
      const std::int64_t cy = y.dim(3);
      for (std::int64_t ch = 0; ch < cy; ++ch) m[(row * y.dim(2) + col) * cy + ch] = 1.0;
    }
    const Tensor g = grad(sum(y * mask), {x})[0];
    const auto gd = g.data();
    std::vector<bool> rows(h, false), cols(w, false);
    report.deepest_map.assign(h * w, 0.0);
    for (std::int64_t i = 0; i < h; ++i)
      for (std::int64_t j = 0; j < w; ++j)
        for (std::int64_t ch = 0; ch < c; ++ch) {
          const double v = std::abs(gd[(i * w + j) * c + ch]);
          report.deepest_map[i * w + j] += v;
          if (v > 1e-9) rows[i] = cols[j] = true;
        }
    report.rows.push_back(std::count(rows.begin(), rows.end(), true));
    report.cols.push_back(std::count(cols.begin(), cols.end(), true));
  }
  return report;
}

ProbeNetwork make_probe_network(ProbeStack stack, std::int64_t dim, std::int64_t heads,
                                std::int64_t window, std::int64_t max_depth, std::uint64_t seed) {
  Rng rng(seed);
  auto blocks = std::make_shared<std::vector<TransformerBlockParams>>();
  for (std::int64_t i = 0; i < max_depth; ++i) {
    blocks->push_back(TransformerBlockParams::init(dim, heads, window, 2.0, rng));
    ParamList params;
    blocks->back().collect("block", params);
    for (auto& [name, t] : params) {
      const bool rpe = name.find("rpe_table") != std::string::npos;
      const bool weight = name.ends_with(".weight");
      if (!rpe && !weight) continue;
      const double stddev = rpe ? 1.0 : 1.0 / std::sqrt(double(t.dim(0)));
      const Tensor r = randn(t.shape(), rng, stddev);
      std::copy(r.data().begin(), r.data().end(), t.mutable_data().begin());
    }
  }
  return [blocks, stack](const Tensor& x, std::int64_t depth) {
    if (depth > std::int64_t(blocks->size())) throw ContractError("probe network too shallow");
    Tensor y = x;
    for (std::int64_t i = 0; i < depth; ++i) {
      const auto& b = (*blocks)[i];
      switch (stack) {
        case ProbeStack::Double:
          y = transformer_block(y, b, AttentionKind::Double, true);
          break;
        case ProbeStack::Swin:
          y = transformer_block(y, b, i % 2 == 0 ? AttentionKind::Regular : AttentionKind::Shifted,
                                true);
          break;
        case ProbeStack::Pointwise:
          y = y + b.mlp(b.norm2(y));
          break;
      }
    }
    return y;
  };
}

double frechet_distance(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, bool* regularized) {
  if (a.cols() != b.cols() || a.rows() < 2 || b.rows() < 2)
    throw ShapeError("frechet_distance: need ≥2 rows and equal feature widths");
  auto moments = [](const Eigen::MatrixXd& x) {
    const Eigen::RowVectorXd mu = x.colwise().mean();
    const Eigen::MatrixXd centered = x.rowwise() - mu;
    Eigen::MatrixXd cov = centered.transpose() * centered / double(x.rows() - 1);
    return std::make_pair(mu, Eigen::MatrixXd(0.5 * (cov + cov.transpose())));
  };
  auto [mu1, s1] = moments(a);
  auto [mu2, s2] = moments(b);
  const std::int64_t d = a.cols();
  auto singular = [d](const Eigen::MatrixXd& s) {
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(s, Eigen::EigenvaluesOnly);
    return es.eigenvalues().minCoeff() <= 1e-10 * std::max(1e-300, s.trace() / double(d));
  };
  const bool reg = singular(s1) || singular(s2);
  if (reg) {
    s1 += 1e-6 * Eigen::MatrixXd::Identity(d, d);
    s2 += 1e-6 * Eigen::MatrixXd::Identity(d, d);
    static std::once_flag warned;
    std::call_once(warned, [] {
      std::clog << "frechet_distance: singular covariance regularized with 1e-6·I\n";
    });
  }
  if (regularized) *regularized = reg;
  // tr((Σ1Σ2)^½) = tr((Σ1^½ Σ2 Σ1^½)^½), the latter symmetric.
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> e1(s1);
  const Eigen::VectorXd l1 = e1.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  const Eigen::MatrixXd root1 = e1.eigenvectors() * l1.asDiagonal() * e1.eigenvectors().transpose();
  Eigen::MatrixXd inner = root1 * s2 * root1;
  inner = 0.5 * (inner + inner.transpose());
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> e2(inner, Eigen::EigenvaluesOnly);
  const double trace_root = e2.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();
  const double dist = (mu1 - mu2).squaredNorm() + s1.trace() + s2.trace() - 2.0 * trace_root;
  return std::max(0.0, dist);
}

double proxy_distance(const Tensor& real, const Tensor& fake, std::uint64_t seed) {
  if (real.rank() < 2 || real.shape().size() != fake.shape().size())
    throw ShapeError("proxy_distance: batches must have equal image shapes");
  for (std::size_t i = 1; i < real.shape().size(); ++i)
    if (real.dim(i) != fake.dim(i)) throw ShapeError("proxy_distance: image shapes differ");
  const std::int64_t dim = real.numel() / real.dim(0);
  Rng rng(seed ^ (std::uint64_t(dim) * 0x9E3779B97F4A7C15ull));
  const Eigen::MatrixXd proj = random_matrix(dim, 64, rng, 1.0 / std::sqrt(double(dim)));
  auto features = [&](const Tensor& t) {
    const Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>
        flat(t.data().data(), t.dim(0), dim);
    return Eigen::MatrixXd(flat * proj);
  };
  return frechet_distance(features(real), features(fake));
}

}  // namespace styleswin
