#include <algorithm>
#include <cmath>

#include "styleswin/ops.hpp"

namespace styleswin {

namespace {

struct SelfRef {
  std::shared_ptr<std::weak_ptr<TensorImpl>> slot = std::make_shared<std::weak_ptr<TensorImpl>>();
  Tensor get() const { return Tensor(slot->lock()); }
  void bind(const Tensor& t) const { *slot = t.impl_ptr(); }
};

struct Taps {
  std::int64_t i0, i1;
  double w0, w1;
};

// Align-corners-false source taps for 2x upsampling of an axis of length n.
std::vector<Taps> upsample_taps(std::int64_t n) {
  std::vector<Taps> taps(static_cast<std::size_t>(2 * n));
  for (std::int64_t o = 0; o < 2 * n; ++o) {
    double src = (static_cast<double>(o) + 0.5) / 2.0 - 0.5;
    if (src < 0) src = 0;
    auto i0 = static_cast<std::int64_t>(std::floor(src));
    if (i0 > n - 1) i0 = n - 1;
    const auto i1 = std::min(i0 + 1, n - 1);
    const double lam = src - static_cast<double>(i0);
    taps[o] = {i0, i1, 1.0 - lam, lam};
  }
  return taps;
}

void check_bhwc(const Tensor& x, const char* op) {
  if (x.rank() != 4) {
    throw ShapeError(std::string(op) + " expects [B,H,W,C], got " + shape_str(x.shape()));
  }
}

}  // namespace

Tensor softmax(const Tensor& x, std::int64_t axis) {
  const auto rank = x.rank();
  if (axis < 0) axis += rank;
  if (axis < 0 || axis >= rank) throw ShapeError("softmax axis out of range for " + shape_str(x.shape()));
  const auto& s = x.shape();
  std::int64_t outer = 1, inner = 1;
  for (std::int64_t d = 0; d < axis; ++d) outer *= s[d];
  for (std::int64_t d = axis + 1; d < rank; ++d) inner *= s[d];
  const auto len = s[axis];
  auto xd = x.data();
  std::vector<double> out(xd.size());
  for (std::int64_t o = 0; o < outer; ++o) {
    for (std::int64_t i = 0; i < inner; ++i) {
      const auto base = o * len * inner + i;
      double mx = xd[base];
      for (std::int64_t k = 1; k < len; ++k) mx = std::max(mx, xd[base + k * inner]);
      double total = 0;
      for (std::int64_t k = 0; k < len; ++k) {
        const double e = std::exp(xd[base + k * inner] - mx);
        out[base + k * inner] = e;
        total += e;
      }
      const double inv = 1.0 / total;
      for (std::int64_t k = 0; k < len; ++k) out[base + k * inner] *= inv;
    }
  }
  SelfRef self;
  Tensor y = make_result("softmax", s, std::move(out), {x},
                         [self, x, axis](const Tensor& g) -> std::vector<Tensor> {
                           Tensor y = self.get();
                           if (!y.defined()) y = softmax(x, axis);
                           Tensor gy = mul(g, y);
                           return {sub(gy, mul(y, sum(gy, {axis}, true)))};
                         });
  self.bind(y);
  return y;
}

Tensor normalize(const Tensor& x, std::vector<std::int64_t> axes, double eps) {
  if (eps <= 0) throw ContractError("normalize: eps must be positive");
  Tensor xhat, rstd;
  {
    NoGradGuard guard;
    Tensor centered = sub(x, mean(x, axes, true));
    Tensor var = mean(square(centered), axes, true);
    rstd = pow(add_scalar(var, eps), -0.5);
    xhat = mul(centered, rstd);
  }
  auto xd = xhat.data();
  return make_result(
      "normalize", x.shape(), std::vector<double>(xd.begin(), xd.end()), {x},
      [xhat, rstd, axes](const Tensor& g) -> std::vector<Tensor> {
        Tensor gm = mean(g, axes, true);
        Tensor gxm = mean(mul(g, xhat), axes, true);
        return {mul(rstd, sub(sub(g, gm), mul(xhat, gxm)))};
      },
      /*higher_order=*/false);
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  return add(mul(normalize(x, {-1}, eps), gain), bias);
}

InstanceStats instance_stats(const Tensor& x, double eps) {
  check_bhwc(x, "instance_stats");
  Tensor m = mean(x, {1, 2}, true);
  Tensor var = mean(square(sub(x, m)), {1, 2}, false);
  return {reshape(m, {x.dim(0), x.dim(3)}), sqrt(add_scalar(var, eps))};
}

Tensor upsample_bilinear2x(const Tensor& x) {
  check_bhwc(x, "upsample_bilinear2x");
  const auto B = x.dim(0), H = x.dim(1), W = x.dim(2), C = x.dim(3);
  const auto ty = upsample_taps(H);
  const auto tx = upsample_taps(W);
  std::vector<double> out(static_cast<std::size_t>(B * 4 * H * W * C), 0.0);
  auto xd = x.data();
  for (std::int64_t b = 0; b < B; ++b) {
    for (std::int64_t oy = 0; oy < 2 * H; ++oy) {
      const auto& a = ty[oy];
      for (std::int64_t ox = 0; ox < 2 * W; ++ox) {
        const auto& t = tx[ox];
        double* dst = out.data() + ((b * 2 * H + oy) * 2 * W + ox) * C;
        const double* p00 = xd.data() + ((b * H + a.i0) * W + t.i0) * C;
        const double* p01 = xd.data() + ((b * H + a.i0) * W + t.i1) * C;
        const double* p10 = xd.data() + ((b * H + a.i1) * W + t.i0) * C;
        const double* p11 = xd.data() + ((b * H + a.i1) * W + t.i1) * C;
        const double w00 = a.w0 * t.w0, w01 = a.w0 * t.w1, w10 = a.w1 * t.w0, w11 = a.w1 * t.w1;
        for (std::int64_t c = 0; c < C; ++c) {
          dst[c] = w00 * p00[c] + w01 * p01[c] + w10 * p10[c] + w11 * p11[c];
        }
      }
    }
  }
  return make_result("upsample_bilinear2x", {B, 2 * H, 2 * W, C}, std::move(out), {x},
                     [](const Tensor& g) -> std::vector<Tensor> {
                       return {upsample_bilinear2x_adjoint(g)};
                     });
}

Tensor upsample_bilinear2x_adjoint(const Tensor& y) {
  check_bhwc(y, "upsample_bilinear2x_adjoint");
  if (y.dim(1) % 2 || y.dim(2) % 2) throw ShapeError("upsample adjoint needs even extents");
  const auto B = y.dim(0), H = y.dim(1) / 2, W = y.dim(2) / 2, C = y.dim(3);
  const auto ty = upsample_taps(H);
  const auto tx = upsample_taps(W);
  std::vector<double> out(static_cast<std::size_t>(B * H * W * C), 0.0);
  auto yd = y.data();
  for (std::int64_t b = 0; b < B; ++b) {
    for (std::int64_t oy = 0; oy < 2 * H; ++oy) {
      const auto& a = ty[oy];
      for (std::int64_t ox = 0; ox < 2 * W; ++ox) {
        const auto& t = tx[ox];
        const double* src = yd.data() + ((b * 2 * H + oy) * 2 * W + ox) * C;
        double* p00 = out.data() + ((b * H + a.i0) * W + t.i0) * C;
        double* p01 = out.data() + ((b * H + a.i0) * W + t.i1) * C;
        double* p10 = out.data() + ((b * H + a.i1) * W + t.i0) * C;
        double* p11 = out.data() + ((b * H + a.i1) * W + t.i1) * C;
        const double w00 = a.w0 * t.w0, w01 = a.w0 * t.w1, w10 = a.w1 * t.w0, w11 = a.w1 * t.w1;
        for (std::int64_t c = 0; c < C; ++c) {
          p00[c] += w00 * src[c];
          p01[c] += w01 * src[c];
          p10[c] += w10 * src[c];
          p11[c] += w11 * src[c];
        }
      }
    }
  }
  return make_result("upsample_bilinear2x_adjoint", {B, H, W, C}, std::move(out), {y},
                     [](const Tensor& g) -> std::vector<Tensor> {
                       return {upsample_bilinear2x(g)};
                     });
}

Tensor unfold(const Tensor& x, std::int64_t kernel, std::int64_t stride, std::int64_t padding) {
  check_bhwc(x, "unfold");
  const auto B = x.dim(0), H = x.dim(1), W = x.dim(2), C = x.dim(3);
  const auto Ho = (H + 2 * padding - kernel) / stride + 1;
  const auto Wo = (W + 2 * padding - kernel) / stride + 1;
  if (Ho <= 0 || Wo <= 0) throw ShapeError("unfold: kernel larger than padded input");
  const auto P = kernel * kernel * C;
  std::vector<double> out(static_cast<std::size_t>(B * Ho * Wo * P), 0.0);
  auto xd = x.data();
  for (std::int64_t b = 0; b < B; ++b) {
    for (std::int64_t oy = 0; oy < Ho; ++oy) {
      for (std::int64_t ox = 0; ox < Wo; ++ox) {
        double* dst = out.data() + ((b * Ho + oy) * Wo + ox) * P;
        for (std::int64_t ky = 0; ky < kernel; ++ky) {
          const auto iy = oy * stride + ky - padding;
          if (iy < 0 || iy >= H) continue;
          for (std::int64_t kx = 0; kx < kernel; ++kx) {
            const auto ix = ox * stride + kx - padding;
            if (ix < 0 || ix >= W) continue;
            std::copy_n(xd.data() + ((b * H + iy) * W + ix) * C, C, dst + (ky * kernel + kx) * C);
          }
        }
      }
    }
  }
  const Shape in_shape = x.shape();
  return make_result("unfold", {B, Ho, Wo, P}, std::move(out), {x},
                     [in_shape, kernel, stride, padding](const Tensor& g) -> std::vector<Tensor> {
                       return {fold(g, in_shape, kernel, stride, padding)};
                     });
}

Tensor fold(const Tensor& cols, const Shape& input_shape, std::int64_t kernel, std::int64_t stride,
            std::int64_t padding) {
  const auto B = input_shape[0], H = input_shape[1], W = input_shape[2], C = input_shape[3];
  const auto Ho = (H + 2 * padding - kernel) / stride + 1;
  const auto Wo = (W + 2 * padding - kernel) / stride + 1;
  const auto P = kernel * kernel * C;
  if (cols.shape() != Shape{B, Ho, Wo, P}) {
    throw ShapeError("fold: columns " + shape_str(cols.shape()) + " do not match input " +
                     shape_str(input_shape));
  }
  std::vector<double> out(static_cast<std::size_t>(B * H * W * C), 0.0);
  auto cd = cols.data();
  for (std::int64_t b = 0; b < B; ++b) {
    for (std::int64_t oy = 0; oy < Ho; ++oy) {
      for (std::int64_t ox = 0; ox < Wo; ++ox) {
        const double* src = cd.data() + ((b * Ho + oy) * Wo + ox) * P;
        for (std::int64_t ky = 0; ky < kernel; ++ky) {
          const auto iy = oy * stride + ky - padding;
          if (iy < 0 || iy >= H) continue;
          for (std::int64_t kx = 0; kx < kernel; ++kx) {
            const auto ix = ox * stride + kx - padding;
            if (ix < 0 || ix >= W) continue;
            double* dst = out.data() + ((b * H + iy) * W + ix) * C;
            const double* s = src + (ky * kernel + kx) * C;
            for (std::int64_t c = 0; c < C; ++c) dst[c] += s[c];
          }
        }
      }
    }
  }
  return make_result("fold", input_shape, std::move(out), {cols},
                     [kernel, stride, padding](const Tensor& g) -> std::vector<Tensor> {
                       return {unfold(g, kernel, stride, padding)};
                     });
}

Tensor avg_pool2x(const Tensor& x) {
  check_bhwc(x, "avg_pool2x");
  const auto B = x.dim(0), H = x.dim(1), W = x.dim(2), C = x.dim(3);
  if (H % 2 || W % 2) throw ShapeError("avg_pool2x needs even extents, got " + shape_str(x.shape()));
  return mean(reshape(x, {B, H / 2, 2, W / 2, 2, C}), {2, 4}, false);
}

}  // namespace styleswin
