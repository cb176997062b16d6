#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "symcons/tensor.hpp"

namespace symcons {

struct AdamWConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

/// First and second moment estimates, keyed by parameter name.
struct AdamMoments {
  std::map<std::string, std::vector<double>> first;
  std::map<std::string, std::vector<double>> second;
};

/// One decoupled-weight-decay Adam update at 1-based step t:
///   m <- b1 m + (1 - b1) g,  v <- b2 v + (1 - b2) g^2
///   p <- p - lr * (m_hat / (sqrt(v_hat) + eps) + wd * p)
/// with bias-corrected m_hat, v_hat. Decay is skipped for parameters where
/// uses_weight_decay(name) is false. Throws NumericalError naming the first
/// tensor with a non-finite gradient; no parameter is touched in that case.
void optimizer_step(std::map<std::string, Tensor>& params, AdamMoments& moments, std::size_t step,
                    const AdamWConfig& config);

}  // namespace symcons
