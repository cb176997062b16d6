#include "symcons/objective.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "symcons/errors.hpp"

namespace symcons {

ProbabilityVector::ProbabilityVector(std::vector<double> probs) : probs_(std::move(probs)) {
  if (probs_.empty()) throw ContractError("probability vector is empty");
  double s = 0.0;
  for (double x : probs_) {
    if (!(x >= 0.0) || !std::isfinite(x)) throw ContractError("probability entries must be finite and >= 0");
    s += x;
  }
  if (std::abs(s - 1.0) > 1e-9) throw ContractError("probabilities sum to " + std::to_string(s));
}

int ProbabilityVector::argmax() const {
  return static_cast<int>(std::max_element(probs_.begin(), probs_.end()) - probs_.begin());
}

ProbabilityVector ProbabilityVector::mixture(const ProbabilityVector& p, const ProbabilityVector& q) {
  if (p.size() != q.size()) throw ContractError("mixture of vectors with different sizes");
  std::vector<double> m(p.size());
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = 0.5 * (p[i] + q[i]);
  return ProbabilityVector(std::move(m));
}

std::string_view to_string(Divergence d) { return d == Divergence::kl ? "kl" : "js"; }

std::string_view to_string(KlDirection d) {
  switch (d) {
    case KlDirection::forward:
      return "forward";
    case KlDirection::reverse:
      return "reverse";
    case KlDirection::symmetrized:
      return "symmetrized";
  }
  return "forward";
}

KlDirection parse_kl_direction(std::string_view name) {
  if (name == "forward") return KlDirection::forward;
  if (name == "reverse") return KlDirection::reverse;
  if (name == "symmetrized") return KlDirection::symmetrized;
  throw ContractError("unknown KL direction '" + std::string(name) + "'");
}

namespace {

double clamp_prob(double x, double eps) { return std::clamp(x, eps, 1.0); }

double ce_value(int target, std::span<const double> p, double eps) {
  return -std::log(clamp_prob(p[static_cast<std::size_t>(target)], eps));
}

void ce_grad(int target, std::span<const double> p, double eps, double w, std::span<double> dp) {
  const double pt = p[static_cast<std::size_t>(target)];
  if (pt > eps) dp[static_cast<std::size_t>(target)] -= w / pt;
}

double kl_value(std::span<const double> p, std::span<const double> q, double eps) {
  double s = 0.0;
  for (std::size_t x = 0; x < p.size(); ++x) {
    if (p[x] <= eps) continue;
    s += p[x] * std::log(clamp_prob(p[x], eps) / clamp_prob(q[x], eps));
  }
  return s;
}

// Accumulates w * dKL/dp into dp and w * dKL/dq into dq.
void kl_grad(std::span<const double> p, std::span<const double> q, double eps, double w,
             std::span<double> dp, std::span<double> dq) {
  for (std::size_t x = 0; x < p.size(); ++x) {
    if (p[x] <= eps) continue;
    const double cq = clamp_prob(q[x], eps);
    dp[x] += w * (std::log(clamp_prob(p[x], eps) / cq) + 1.0);
    if (q[x] > eps) dq[x] -= w * p[x] / cq;
  }
}

double js_value(std::span<const double> p, std::span<const double> q, double eps) {
  std::vector<double> m(p.size());
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = 0.5 * (p[i] + q[i]);
  return 0.5 * kl_value(p, m, eps) + 0.5 * kl_value(q, m, eps);
}

void js_grad(std::span<const double> p, std::span<const double> q, double eps, double w,
             std::span<double> dp, std::span<double> dq) {
  const std::size_t n = p.size();
  std::vector<double> m(n), dm(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) m[i] = 0.5 * (p[i] + q[i]);
  kl_grad(p, m, eps, 0.5 * w, dp, dm);
  kl_grad(q, m, eps, 0.5 * w, dq, dm);
  for (std::size_t i = 0; i < n; ++i) {
    dp[i] += 0.5 * dm[i];
    dq[i] += 0.5 * dm[i];
  }
}

double divergence_value(std::span<const double> p, std::span<const double> q, Divergence div,
                        KlDirection dir) {
  if (div == Divergence::js) return js_value(p, q, kProbEps);
  switch (dir) {
    case KlDirection::forward:
      return kl_value(p, q, kProbEps);
    case KlDirection::reverse:
      return kl_value(q, p, kProbEps);
    case KlDirection::symmetrized:
      return 0.5 * (kl_value(p, q, kProbEps) + kl_value(q, p, kProbEps));
  }
  return 0.0;
}

void divergence_grad(std::span<const double> p, std::span<const double> q, Divergence div,
                     KlDirection dir, double w, std::span<double> dp, std::span<double> dq) {
  if (div == Divergence::js) {
    js_grad(p, q, kProbEps, w, dp, dq);
    return;
  }
  switch (dir) {
    case KlDirection::forward:
      kl_grad(p, q, kProbEps, w, dp, dq);
      break;
    case KlDirection::reverse:
      kl_grad(q, p, kProbEps, w, dq, dp);
      break;
    case KlDirection::symmetrized:
      kl_grad(p, q, kProbEps, 0.5 * w, dp, dq);
      kl_grad(q, p, kProbEps, 0.5 * w, dq, dp);
      break;
  }
}

void check_target(int target, std::size_t classes) {
  if (target < 0 || static_cast<std::size_t>(target) >= classes) {
    throw ContractError("target class " + std::to_string(target) + " out of range");
  }
}

}  // namespace

double cross_entropy(int target, const ProbabilityVector& p, double eps) {
  check_target(target, p.size());
  return ce_value(target, p.probs(), eps);
}

double kl_divergence(const ProbabilityVector& p, const ProbabilityVector& q, double eps) {
  if (p.size() != q.size()) throw ContractError("kl_divergence: size mismatch");
  return kl_value(p.probs(), q.probs(), eps);
}

double js_divergence(const ProbabilityVector& p, const ProbabilityVector& q, double eps) {
  if (p.size() != q.size()) throw ContractError("js_divergence: size mismatch");
  return js_value(p.probs(), q.probs(), eps);
}

LossBreakdown combined_loss(int target, const ProbabilityVector& p_l2r, const ProbabilityVector& p_r2l,
                            double lambda, Divergence div, KlDirection dir) {
  return combined_loss_with_gradient(target, p_l2r.probs(), p_r2l.probs(), lambda, div, dir).loss;
}

LossWithGradient combined_loss_with_gradient(int target, std::span<const double> p_l2r,
                                             std::span<const double> p_r2l, double lambda,
                                             Divergence div, KlDirection dir) {
  if (p_l2r.size() != p_r2l.size()) throw ContractError("combined_loss: size mismatch");
  check_target(target, p_l2r.size());
  if (!(lambda >= 0.0)) throw ContractError("combined_loss: lambda must be >= 0");

  LossWithGradient out;
  out.loss.ce_l2r = ce_value(target, p_l2r, kProbEps);
  out.loss.ce_r2l = ce_value(target, p_r2l, kProbEps);
  out.loss.divergence = divergence_value(p_l2r, p_r2l, div, dir);
  out.loss.lambda = lambda;
  out.loss.total = out.loss.ce_l2r + out.loss.ce_r2l + lambda * out.loss.divergence;

  out.d_l2r.assign(p_l2r.size(), 0.0);
  out.d_r2l.assign(p_r2l.size(), 0.0);
  ce_grad(target, p_l2r, kProbEps, 1.0, out.d_l2r);
  ce_grad(target, p_r2l, kProbEps, 1.0, out.d_r2l);
  if (lambda > 0.0) divergence_grad(p_l2r, p_r2l, div, dir, lambda, out.d_l2r, out.d_r2l);
  return out;
}

double lambda_at(const LambdaSchedule& schedule, std::size_t step) {
  if (schedule.shape == ScheduleShape::constant) return schedule.lambda_max;
  if (schedule.total_steps == 0) throw ContractError("linear lambda schedule needs total_steps > 0");
  if (step >= schedule.total_steps) return schedule.lambda_max;
  return schedule.lambda_max * static_cast<double>(step) / static_cast<double>(schedule.total_steps);
}

Var batch_combined_loss(Var probs_l2r, Var probs_r2l, std::span<const int> targets, double lambda,
                        Divergence div, KlDirection dir, LossBreakdown* breakdown) {
  const Tensor& pl = probs_l2r.value();
  const Tensor& pr = probs_r2l.value();
  if (pl.rank() != 2 || pl.shape != pr.shape || pl.shape[0] != targets.size()) {
    throw ContractError("batch_combined_loss: expected two [B, C] tensors and B targets");
  }
  const std::size_t batch = pl.shape[0], classes = pl.shape[1];
  const double inv_b = 1.0 / static_cast<double>(batch);

  LossBreakdown mean;
  mean.lambda = lambda;
  std::vector<double> dl(pl.size()), dr(pr.size());
  for (std::size_t b = 0; b < batch; ++b) {
    std::span<const double> row_l(pl.values.data() + b * classes, classes);
    std::span<const double> row_r(pr.values.data() + b * classes, classes);
    auto r = combined_loss_with_gradient(targets[b], row_l, row_r, lambda, div, dir);
    mean.ce_l2r += r.loss.ce_l2r * inv_b;
    mean.ce_r2l += r.loss.ce_r2l * inv_b;
    mean.divergence += r.loss.divergence * inv_b;
    for (std::size_t c = 0; c < classes; ++c) {
      dl[b * classes + c] = r.d_l2r[c] * inv_b;
      dr[b * classes + c] = r.d_r2l[c] * inv_b;
    }
  }
  mean.total = mean.ce_l2r + mean.ce_r2l + lambda * mean.divergence;
  if (breakdown) *breakdown = mean;

  const Var inputs[] = {probs_l2r, probs_r2l};
  return probs_l2r.tape()->record(
      inputs, Tensor({1}, mean.total),
      [dl = std::move(dl), dr = std::move(dr), il = probs_l2r.id(), ir = probs_r2l.id()](Tape& t, std::size_t self) {
        const double g = t.grad(self)[0];
        if (t.needs_grad(il)) {
          auto gl = t.grad(il);
          for (std::size_t i = 0; i < gl.size(); ++i) gl[i] += g * dl[i];
        }
        if (t.needs_grad(ir)) {
          auto gr = t.grad(ir);
          for (std::size_t i = 0; i < gr.size(); ++i) gr[i] += g * dr[i];
        }
      });
}

Var batch_cross_entropy(Var probs, std::span<const int> targets, double* mean_ce) {
  const Tensor& p = probs.value();
  if (p.rank() != 2 || p.shape[0] != targets.size()) {
    throw ContractError("batch_cross_entropy: expected [B, C] probabilities and B targets");
  }
  const std::size_t batch = p.shape[0], classes = p.shape[1];
  const double inv_b = 1.0 / static_cast<double>(batch);
  double total = 0.0;
  std::vector<double> dp(p.size(), 0.0);
  for (std::size_t b = 0; b < batch; ++b) {
    check_target(targets[b], classes);
    std::span<const double> row(p.values.data() + b * classes, classes);
    total += ce_value(targets[b], row, kProbEps) * inv_b;
    ce_grad(targets[b], row, kProbEps, inv_b, std::span<double>(dp.data() + b * classes, classes));
  }
  if (mean_ce) *mean_ce = total;
  const Var inputs[] = {probs};
  return probs.tape()->record(inputs, Tensor({1}, total),
                              [dp = std::move(dp), ip = probs.id()](Tape& t, std::size_t self) {
                                const double g = t.grad(self)[0];
                                auto gp = t.grad(ip);
                                for (std::size_t i = 0; i < gp.size(); ++i) gp[i] += g * dp[i];
                              });
}

}  // namespace symcons
