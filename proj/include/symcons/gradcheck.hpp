#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>

#include "symcons/autodiff.hpp"

namespace symcons {

struct GradCheckOptions {
  double h = 1e-5;
  double tol = 1e-4;
  /// Coordinates checked per tensor; 0 checks every coordinate.
  std::size_t max_coords_per_tensor = 0;
  std::uint64_t seed = 0;
  /// Multiplies the analytic gradient before comparison. Only for exercising
  /// the failure path.
  double analytic_scale = 1.0;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t worst_tensor = 0;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t coords_checked = 0;
  bool passed = false;
};

/// Builds the scalar objective on a fresh tape. Parameters must be bound with
/// Tape::parameter so that backward() fills their grad buffers.
using ScalarObjective = std::function<Var(Tape&)>;

/// Central differences (f(x+h) - f(x-h)) / 2h against reverse-mode gradients.
/// Relative error per coordinate is |a - n| / max(|a|, |n|, 1e-12).
GradCheckReport gradient_check(const ScalarObjective& f, std::span<Tensor* const> params,
                               const GradCheckOptions& options = {});

}  // namespace symcons
