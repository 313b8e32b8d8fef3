#include "styleswin/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "styleswin/ops.hpp"

namespace styleswin {

namespace {

double eval_scalar(const std::function<Tensor()>& f) {
  NoGradGuard guard;
  Tensor y = f();
  if (y.numel() != 1) {
    throw ContractError("finite_diff_check: f must be scalar-valued, got " + shape_str(y.shape()));
  }
  return y.item();
}

}  // namespace

GradCheckResult finite_diff_check(const std::function<Tensor()>& f,
                                  const std::vector<Tensor>& params, double h,
                                  std::size_t max_elements) {
  std::vector<Tensor> leaves = params;
  std::vector<bool> previous;
  for (auto& p : leaves) {
    previous.push_back(p.requires_grad());
    p.set_requires_grad(true);
  }

  std::vector<Tensor> analytic;
  {
    EnableGradGuard guard;
    Tensor y = f();
    if (y.numel() != 1) {
      throw ContractError("finite_diff_check: f must be scalar-valued, got " +
                          shape_str(y.shape()));
    }
    analytic = grad(y, leaves, false);
  }

  const double base0 = eval_scalar(f);
  const double base1 = eval_scalar(f);
  if (base0 != base1) {
    throw OracleError("finite_diff_check: f is not deterministic (" + std::to_string(base0) +
                      " vs " + std::to_string(base1) + ")");
  }

  double largest = 0.0;
  for (const auto& g : analytic) {
    for (double v : g.data()) largest = std::max(largest, std::abs(v));
  }
  const double floor = std::max(1e-8, 1e-4 * largest);

  GradCheckResult result;
  for (std::size_t t = 0; t < leaves.size(); ++t) {
    auto values = leaves[t].mutable_data();
    auto ga = analytic[t].data();
    const std::size_t n = values.size();
    std::size_t stride = 1;
    if (max_elements > 0 && n > max_elements) stride = (n + max_elements - 1) / max_elements;
    for (std::size_t i = 0; i < n; i += stride) {
      const double orig = values[i];
      values[i] = orig + h;
      const double fp = eval_scalar(f);
      values[i] = orig - h;
      const double fm = eval_scalar(f);
      values[i] = orig;
      const double numeric = (fp - fm) / (2.0 * h);
      const double a = ga[i];
      const double denom = std::max({std::abs(a), std::abs(numeric), floor});
      const double rel = std::abs(a - numeric) / denom;
      ++result.elements_checked;
      if (rel > result.max_rel_error || !std::isfinite(rel)) {
        result.max_rel_error = std::isfinite(rel) ? rel : INFINITY;
        result.analytic = a;
        result.numeric = numeric;
        result.worst_tensor = t;
        result.worst_index = i;
      }
    }
  }
  for (std::size_t t = 0; t < leaves.size(); ++t) {
    if (!previous[t]) leaves[t].set_requires_grad(false);
  }
  return result;
}

GradCheckResult finite_diff_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                                  double h) {
  Tensor leaf = x.detach();
  return finite_diff_check([&] { return f(leaf); }, {leaf}, h);
}

}  // namespace styleswin
