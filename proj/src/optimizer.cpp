#include "symcons/optimizer.hpp"

#include <cmath>

#include "symcons/encoder.hpp"
#include "symcons/errors.hpp"

namespace symcons {

void optimizer_step(std::map<std::string, Tensor>& params, AdamMoments& moments, std::size_t step,
                    const AdamWConfig& config) {
  if (step < 1) throw ContractError("optimizer_step: step must be >= 1");
  for (const auto& [name, p] : params) {
    if (p.grad.size() != p.values.size()) throw ContractError("optimizer_step: " + name + " has no gradient buffer");
    for (double g : p.grad) {
      if (!std::isfinite(g)) throw NumericalError("non-finite gradient in tensor " + name);
    }
  }

  const double t = static_cast<double>(step);
  const double bc1 = 1.0 - std::pow(config.beta1, t);
  const double bc2 = 1.0 - std::pow(config.beta2, t);
  for (auto& [name, p] : params) {
    auto& m = moments.first[name];
    auto& v = moments.second[name];
    if (m.size() != p.size()) m.assign(p.size(), 0.0);
    if (v.size() != p.size()) v.assign(p.size(), 0.0);
    const double wd = uses_weight_decay(name) ? config.weight_decay : 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double g = p.grad[i];
      m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * g;
      v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * g * g;
      const double m_hat = m[i] / bc1;
      const double v_hat = v[i] / bc2;
      p.values[i] -= config.learning_rate * (m_hat / (std::sqrt(v_hat) + config.eps) + wd * p.values[i]);
    }
  }
}

}  // namespace symcons
