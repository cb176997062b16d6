#pragma once

#include <cstdint>

#include "symcons/encoder.hpp"
#include "symcons/gradcheck.hpp"
#include "symcons/objective.hpp"

namespace symcons {

struct LossCheckConfig {
  ModelConfig model{.layers = 2, .heads = 2, .d_model = 8, .d_ff = 16, .max_len = 12};
  std::size_t batch = 2;
  double lambda = 10.0;
  Divergence divergence = Divergence::kl;
  KlDirection kl_direction = KlDirection::forward;
  std::uint64_t seed = 7;
  /// Parameters are redrawn from normal(0, param_std), layer-norm gains from
  /// normal(1, param_std), so that no gradient sits at the noise floor of the
  /// finite differences.
  double param_std = 0.3;
  GradCheckOptions options;
};

/// Builds a small model and a batch of synthetic pairs, then checks the
/// gradient of the combined two-order loss against central differences for
/// every parameter.
GradCheckReport loss_gradient_check(const LossCheckConfig& config);

}  // namespace symcons
