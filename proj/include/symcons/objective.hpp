#pragma once

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include "symcons/autodiff.hpp"

namespace symcons {

inline constexpr double kProbEps = 1e-7;

/// Entries >= 0 summing to 1 within 1e-9 (checked on construction).
class ProbabilityVector {
 public:
  explicit ProbabilityVector(std::vector<double> probs);

  std::span<const double> probs() const { return probs_; }
  std::size_t size() const { return probs_.size(); }
  double operator[](std::size_t i) const { return probs_[i]; }
  /// Lowest index among the maxima.
  int argmax() const;

  /// Elementwise 0.5 (p + q).
  static ProbabilityVector mixture(const ProbabilityVector& p, const ProbabilityVector& q);

 private:
  std::vector<double> probs_;
};

enum class Divergence { kl, js };
/// Which way KL is taken between the two orderings. forward is D(p_l2r || p_r2l).
enum class KlDirection { forward, reverse, symmetrized };

std::string_view to_string(Divergence d);
std::string_view to_string(KlDirection d);
KlDirection parse_kl_direction(std::string_view name);

/// -ln(clamp(p[target], eps, 1)).
double cross_entropy(int target, const ProbabilityVector& p, double eps = kProbEps);

/// Sum over x with p(x) > eps of p(x) ln(clamp(p(x)) / clamp(q(x))), in nats.
double kl_divergence(const ProbabilityVector& p, const ProbabilityVector& q, double eps = kProbEps);

/// 0.5 KL(p || m) + 0.5 KL(q || m) with m = 0.5 (p + q).
double js_divergence(const ProbabilityVector& p, const ProbabilityVector& q, double eps = kProbEps);

struct LossBreakdown {
  double ce_l2r = 0.0;
  double ce_r2l = 0.0;
  double divergence = 0.0;
  double lambda = 0.0;
  double total = 0.0;
};

/// ce(target, p_l2r) + ce(target, p_r2l) + lambda * D(p_l2r, p_r2l).
LossBreakdown combined_loss(int target, const ProbabilityVector& p_l2r, const ProbabilityVector& p_r2l,
                            double lambda, Divergence div, KlDirection dir = KlDirection::forward);

/// combined_loss with its gradient with respect to both probability vectors.
struct LossWithGradient {
  LossBreakdown loss;
  std::vector<double> d_l2r;
  std::vector<double> d_r2l;
};
LossWithGradient combined_loss_with_gradient(int target, std::span<const double> p_l2r,
                                             std::span<const double> p_r2l, double lambda,
                                             Divergence div, KlDirection dir = KlDirection::forward);

enum class ScheduleShape { linear, constant };

struct LambdaSchedule {
  double lambda_max = 100.0;
  std::size_t total_steps = 0;
  ScheduleShape shape = ScheduleShape::linear;
};

/// linear: lambda_max * min(step / total_steps, 1); constant: lambda_max.
double lambda_at(const LambdaSchedule& schedule, std::size_t step);

// Tape operations over batches of probability rows [B, C]. Every term is
// averaged over the batch before the terms are summed.

/// Mean combined loss; the per-term means are written to *breakdown when given.
Var batch_combined_loss(Var probs_l2r, Var probs_r2l, std::span<const int> targets, double lambda,
                        Divergence div, KlDirection dir = KlDirection::forward,
                        LossBreakdown* breakdown = nullptr);

/// Mean cross-entropy of one pass (the plain classification objective).
Var batch_cross_entropy(Var probs, std::span<const int> targets, double* mean_ce = nullptr);

}  // namespace symcons
