#include <algorithm>
#include <cmath>
#include <numbers>

#include "styleswin/ops.hpp"

namespace styleswin {

namespace {

struct BroadcastPlan {
  Shape out;
  std::vector<std::int64_t> a_strides;
  std::vector<std::int64_t> b_strides;
};

std::vector<std::int64_t> aligned_strides(const Shape& s, std::size_t rank, const Shape& out) {
  std::vector<std::int64_t> strides(rank, 0);
  std::int64_t stride = 1;
  auto offset = rank - s.size();
  for (std::size_t i = s.size(); i-- > 0;) {
    strides[offset + i] = (s[i] == 1 && out[offset + i] != 1) ? 0 : stride;
    stride *= s[i];
  }
  return strides;
}

BroadcastPlan plan(const Shape& a, const Shape& b) {
  BroadcastPlan p;
  p.out = broadcast_shapes(a, b);
  p.a_strides = aligned_strides(a, p.out.size(), p.out);
  p.b_strides = aligned_strides(b, p.out.size(), p.out);
  return p;
}

template <class F>
std::vector<double> apply_binary(const Tensor& a, const Tensor& b, const BroadcastPlan& p, F f) {
  const auto ad = a.data();
  const auto bd = b.data();
  const auto n = shape_numel(p.out);
  std::vector<double> out(static_cast<std::size_t>(n));
  if (a.shape() == b.shape()) {
    for (std::int64_t i = 0; i < n; ++i) out[i] = f(ad[i], bd[i]);
    return out;
  }
  if (b.numel() == 1 && a.numel() == n) {
    const double bv = bd[0];
    for (std::int64_t i = 0; i < n; ++i) out[i] = f(ad[i], bv);
    return out;
  }
  if (a.numel() == 1 && b.numel() == n) {
    const double av = ad[0];
    for (std::int64_t i = 0; i < n; ++i) out[i] = f(av, bd[i]);
    return out;
  }
  // Generic walk with the innermost axis unrolled.
  const auto rank = p.out.size();
  const auto inner = p.out[rank - 1];
  const auto as = p.a_strides[rank - 1];
  const auto bs = p.b_strides[rank - 1];
  std::vector<std::int64_t> idx(rank, 0);
  std::int64_t ao = 0, bo = 0;
  for (std::int64_t base = 0; base < n; base += inner) {
    for (std::int64_t j = 0; j < inner; ++j) out[base + j] = f(ad[ao + j * as], bd[bo + j * bs]);
    for (std::size_t d = rank - 1; d-- > 0;) {
      ++idx[d];
      ao += p.a_strides[d];
      bo += p.b_strides[d];
      if (idx[d] < p.out[d]) break;
      ao -= p.a_strides[d] * idx[d];
      bo -= p.b_strides[d] * idx[d];
      idx[d] = 0;
    }
  }
  return out;
}

template <class F>
std::vector<double> apply_unary(const Tensor& x, F f) {
  auto xd = x.data();
  std::vector<double> out(xd.size());
  for (std::size_t i = 0; i < xd.size(); ++i) out[i] = f(xd[i]);
  return out;
}

// Lets a backward closure reach the op's own output without a reference cycle.
struct SelfRef {
  std::shared_ptr<std::weak_ptr<TensorImpl>> slot = std::make_shared<std::weak_ptr<TensorImpl>>();
  Tensor get() const { return Tensor(slot->lock()); }
  void bind(const Tensor& t) const { *slot = t.impl_ptr(); }
};

double gelu_value(double x) { return 0.5 * x * (1.0 + std::erf(x / std::numbers::sqrt2)); }

double gelu_d1(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x / std::numbers::sqrt2));
  const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
  return cdf + x * pdf;
}

double gelu_d2(double x) {
  const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
  return pdf * (2.0 - x * x);
}

Tensor gelu_derivative(const Tensor& x) {
  return make_result(
      "gelu_derivative", x.shape(), apply_unary(x, gelu_d1), {x},
      [x](const Tensor& g) -> std::vector<Tensor> {
        return {mul(g, Tensor::from(x.shape(), apply_unary(x, gelu_d2)))};
      },
      /*higher_order=*/false);
}

}  // namespace

Shape broadcast_shapes(const Shape& a, const Shape& b) {
  const auto rank = std::max(a.size(), b.size());
  Shape out(rank, 1);
  for (std::size_t i = 0; i < rank; ++i) {
    const auto da = i < rank - a.size() ? 1 : a[i - (rank - a.size())];
    const auto db = i < rank - b.size() ? 1 : b[i - (rank - b.size())];
    if (da != db && da != 1 && db != 1) {
      throw ShapeError("cannot broadcast " + shape_str(a) + " with " + shape_str(b));
    }
    out[i] = std::max(da, db);
  }
  return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
  auto p = plan(a.shape(), b.shape());
  auto data = apply_binary(a, b, p, [](double x, double y) { return x + y; });
  return make_result("add", p.out, std::move(data), {a, b},
                     [as = a.shape(), bs = b.shape()](const Tensor& g) -> std::vector<Tensor> {
                       return {sum_to(g, as), sum_to(g, bs)};
                     });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  auto p = plan(a.shape(), b.shape());
  auto data = apply_binary(a, b, p, [](double x, double y) { return x - y; });
  return make_result("sub", p.out, std::move(data), {a, b},
                     [as = a.shape(), bs = b.shape()](const Tensor& g) -> std::vector<Tensor> {
                       return {sum_to(g, as), sum_to(neg(g), bs)};
                     });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  auto p = plan(a.shape(), b.shape());
  auto data = apply_binary(a, b, p, [](double x, double y) { return x * y; });
  return make_result("mul", p.out, std::move(data), {a, b},
                     [a, b](const Tensor& g) -> std::vector<Tensor> {
                       Tensor ga, gb;
                       if (a.requires_grad()) ga = sum_to(mul(g, b), a.shape());
                       if (b.requires_grad()) gb = sum_to(mul(g, a), b.shape());
                       return {ga, gb};
                     });
}

Tensor div(const Tensor& a, const Tensor& b) {
  auto p = plan(a.shape(), b.shape());
  auto data = apply_binary(a, b, p, [](double x, double y) { return x / y; });
  return make_result("div", p.out, std::move(data), {a, b},
                     [a, b](const Tensor& g) -> std::vector<Tensor> {
                       Tensor ga, gb;
                       if (a.requires_grad()) ga = sum_to(div(g, b), a.shape());
                       if (b.requires_grad()) {
                         gb = sum_to(neg(div(mul(g, a), square(b))), b.shape());
                       }
                       return {ga, gb};
                     });
}

Tensor add_scalar(const Tensor& a, double s) {
  return make_result("add_scalar", a.shape(), apply_unary(a, [s](double x) { return x + s; }),
                     {a}, [](const Tensor& g) -> std::vector<Tensor> { return {g}; });
}

Tensor mul_scalar(const Tensor& a, double s) {
  return make_result("mul_scalar", a.shape(), apply_unary(a, [s](double x) { return x * s; }),
                     {a},
                     [s](const Tensor& g) -> std::vector<Tensor> { return {mul_scalar(g, s)}; });
}

Tensor neg(const Tensor& a) { return mul_scalar(a, -1.0); }

Tensor exp(const Tensor& x) {
  SelfRef self;
  Tensor out = make_result("exp", x.shape(), apply_unary(x, [](double v) { return std::exp(v); }),
                           {x}, [self, x](const Tensor& g) -> std::vector<Tensor> {
                             Tensor y = self.get();
                             if (!y.defined()) y = exp(x);
                             return {mul(g, y)};
                           });
  self.bind(out);
  return out;
}

Tensor log(const Tensor& x) {
  return make_result("log", x.shape(), apply_unary(x, [](double v) { return std::log(v); }), {x},
                     [x](const Tensor& g) -> std::vector<Tensor> { return {div(g, x)}; });
}

Tensor pow(const Tensor& x, double p) {
  return make_result("pow", x.shape(), apply_unary(x, [p](double v) { return std::pow(v, p); }),
                     {x}, [x, p](const Tensor& g) -> std::vector<Tensor> {
                       return {mul(g, mul_scalar(pow(x, p - 1.0), p))};
                     });
}

Tensor sqrt(const Tensor& x) {
  SelfRef self;
  Tensor out =
      make_result("sqrt", x.shape(), apply_unary(x, [](double v) { return std::sqrt(v); }), {x},
                  [self, x](const Tensor& g) -> std::vector<Tensor> {
                    Tensor y = self.get();
                    if (!y.defined()) y = sqrt(x);
                    return {mul_scalar(div(g, y), 0.5)};
                  });
  self.bind(out);
  return out;
}

Tensor square(const Tensor& x) {
  return make_result("square", x.shape(), apply_unary(x, [](double v) { return v * v; }), {x},
                     [x](const Tensor& g) -> std::vector<Tensor> {
                       return {mul(g, mul_scalar(x, 2.0))};
                     });
}

Tensor abs(const Tensor& x) {
  return make_result("abs", x.shape(), apply_unary(x, [](double v) { return std::abs(v); }), {x},
                     [x](const Tensor& g) -> std::vector<Tensor> {
                       auto sign = Tensor::from(x.shape(), apply_unary(x, [](double v) {
                                                  return v > 0 ? 1.0 : (v < 0 ? -1.0 : 0.0);
                                                }));
                       return {mul(g, sign)};
                     });
}

Tensor tanh(const Tensor& x) {
  SelfRef self;
  Tensor out =
      make_result("tanh", x.shape(), apply_unary(x, [](double v) { return std::tanh(v); }), {x},
                  [self, x](const Tensor& g) -> std::vector<Tensor> {
                    Tensor y = self.get();
                    if (!y.defined()) y = tanh(x);
                    return {mul(g, add_scalar(neg(square(y)), 1.0))};
                  });
  self.bind(out);
  return out;
}

Tensor sigmoid(const Tensor& x) {
  SelfRef self;
  auto f = [](double v) {
    if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
    const double e = std::exp(v);
    return e / (1.0 + e);
  };
  Tensor out = make_result("sigmoid", x.shape(), apply_unary(x, f), {x},
                           [self, x](const Tensor& g) -> std::vector<Tensor> {
                             Tensor y = self.get();
                             if (!y.defined()) y = sigmoid(x);
                             return {mul(g, mul(y, add_scalar(neg(y), 1.0)))};
                           });
  self.bind(out);
  return out;
}

Tensor softplus(const Tensor& x) {
  auto f = [](double v) { return std::max(v, 0.0) + std::log1p(std::exp(-std::abs(v))); };
  return make_result("softplus", x.shape(), apply_unary(x, f), {x},
                     [x](const Tensor& g) -> std::vector<Tensor> { return {mul(g, sigmoid(x))}; });
}

Tensor leaky_relu(const Tensor& x, double slope) {
  return make_result(
      "leaky_relu", x.shape(),
      apply_unary(x, [slope](double v) { return v > 0 ? v : slope * v; }), {x},
      [x, slope](const Tensor& g) -> std::vector<Tensor> {
        auto mask = Tensor::from(x.shape(),
                                 apply_unary(x, [slope](double v) { return v > 0 ? 1.0 : slope; }));
        return {mul(g, mask)};
      });
}

Tensor gelu(const Tensor& x) {
  return make_result("gelu", x.shape(), apply_unary(x, gelu_value), {x},
                     [x](const Tensor& g) -> std::vector<Tensor> {
                       return {mul(g, gelu_derivative(x))};
                     });
}

}  // namespace styleswin
