#pragma once

#include <functional>
#include <string>
#include <vector>

#include "styleswin/gradcheck.hpp"

namespace styleswin {

struct GradSuiteEntry {
  std::string name;
  bool composite = false;
  double tolerance = 0;
  GradCheckResult result;
  bool passed() const { return result.max_rel_error < tolerance; }
};

/// Finite-difference checks of every differentiable primitive (tolerance
/// 1e-4) and every composite block (1e-3), including R1 through a wavelet
/// discriminator, which needs second-order differentiation.
std::vector<GradSuiteEntry> run_gradient_suite(
    const std::function<void(const GradSuiteEntry&)>& on_entry = {});

}  // namespace styleswin
