#pragma once

#include <functional>
#include <string>
#include <vector>

#include "styleswin/tensor.hpp"

namespace styleswin {

struct GradCheckResult {
  double max_rel_error = 0.0;
  double analytic = 0.0;  // values at the worst element
  double numeric = 0.0;
  std::size_t worst_tensor = 0;
  std::size_t worst_index = 0;
  std::size_t elements_checked = 0;
};

/// Central-difference check of d f / d params against reverse-mode grads.
///
/// `f` must be scalar-valued and deterministic; it is re-evaluated at the base
/// point and an OracleError is raised if the two values differ. Relative error
/// uses max(|analytic|, |numeric|, 1e-8, 1e-4 * G) as denominator, G being the
/// largest analytic gradient magnitude in the check, so structurally zero
/// gradients are not judged against round-off noise. Parameter values are
/// perturbed in place and restored. `max_elements` > 0 checks an evenly
/// strided subset of each tensor.
GradCheckResult finite_diff_check(const std::function<Tensor()>& f,
                                  const std::vector<Tensor>& params, double h = 1e-5,
                                  std::size_t max_elements = 0);

/// Single-input form: checks d f(x) / d x.
GradCheckResult finite_diff_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                                  double h = 1e-5);

}  // namespace styleswin
