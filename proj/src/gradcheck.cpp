#include "symcons/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "symcons/errors.hpp"
#include "symcons/rng.hpp"

namespace symcons {

namespace {

double evaluate(const ScalarObjective& f) {
  Tape tape(/*grad_enabled=*/false);
  const double v = f(tape).value().item();
  if (!std::isfinite(v)) throw NumericalError("gradient_check: objective is not finite");
  return v;
}

}  // namespace

GradCheckReport gradient_check(const ScalarObjective& f, std::span<Tensor* const> params,
                               const GradCheckOptions& options) {
  if (options.h < 1e-7 || options.h > 1e-3) throw ContractError("gradient_check: h must be in [1e-7, 1e-3]");

  for (Tensor* p : params) p->set_requires_grad(true);
  {
    Tape tape;
    Var out = f(tape);
    if (!std::isfinite(out.value().item())) throw NumericalError("gradient_check: objective is not finite");
    tape.backward(out);
  }

  GradCheckReport report;
  Rng rng(options.seed);
  for (std::size_t t = 0; t < params.size(); ++t) {
    Tensor& p = *params[t];
    std::vector<std::size_t> coords(p.size());
    std::iota(coords.begin(), coords.end(), 0);
    if (options.max_coords_per_tensor != 0 && coords.size() > options.max_coords_per_tensor) {
      rng.shuffle(std::span(coords));
      coords.resize(options.max_coords_per_tensor);
      std::sort(coords.begin(), coords.end());
    }
    for (std::size_t i : coords) {
      const double saved = p.values[i];
      p.values[i] = saved + options.h;
      const double up = evaluate(f);
      p.values[i] = saved - options.h;
      const double down = evaluate(f);
      p.values[i] = saved;

      const double numeric = (up - down) / (2.0 * options.h);
      const double analytic = p.grad[i] * options.analytic_scale;
      const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-12});
      const double rel = std::abs(analytic - numeric) / denom;
      ++report.coords_checked;
      if (rel > report.max_rel_error || report.coords_checked == 1) {
        report.max_rel_error = rel;
        report.worst_tensor = t;
        report.worst_index = i;
        report.worst_analytic = analytic;
        report.worst_numeric = numeric;
      }
    }
  }
  report.passed = report.max_rel_error < options.tol;
  return report;
}

}  // namespace symcons
