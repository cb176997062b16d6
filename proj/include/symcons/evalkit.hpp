#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "symcons/corpus.hpp"
#include "symcons/encoder.hpp"

namespace symcons {

// Consistency metrics read only the two passes of each example. Gold labels
// enter through classification_metrics and the McNemar correctness vectors.

/// 100 * fraction of examples whose L2R and R2L labels agree.
double prediction_consistency(std::span<const DualPassOutput> outputs);

struct ConfidenceConsistency {
  /// 100 * Pearson correlation of the class-1 confidences (population
  /// moments). Empty when either sequence has zero variance.
  std::optional<double> pearson_x100;
  /// 1000 * mean squared difference of the class-1 confidences.
  double mse_x1000 = 0.0;
};

ConfidenceConsistency confidence_consistency(std::span<const double> x, std::span<const double> y);
ConfidenceConsistency confidence_consistency(std::span<const DualPassOutput> outputs);

struct ClassificationMetrics {
  double accuracy = 0.0;  // percent
  double f1 = 0.0;        // percent, positive class 1; 0 when P + R = 0
};

ClassificationMetrics classification_metrics(std::span<const int> predictions, std::span<const int> gold);

struct McNemarResult {
  std::size_t b = 0;  // model 1 right, model 2 wrong
  std::size_t c = 0;  // model 1 wrong, model 2 right
  double statistic = 0.0;
  double p_value = 1.0;
  bool exact = false;  // binomial branch (b + c < 25)
  std::vector<std::pair<double, bool>> significant_at;
};

inline constexpr std::size_t kMcNemarExactBelow = 25;

/// Continuity-corrected chi-square when b + c >= 25, otherwise the exact
/// two-sided binomial test. b + c = 0 gives statistic 0, p = 1.
McNemarResult mcnemar_from_counts(std::size_t b, std::size_t c, std::span<const double> alphas = {});
McNemarResult mcnemar_test(const std::vector<bool>& correct1, const std::vector<bool>& correct2,
                           std::span<const double> alphas = {});

/// P(X > x) for a chi-square variable with one degree of freedom.
double chi_square1_survival(double x);

struct DisagreementRecord {
  std::string example_id;
  std::string text_a;
  std::string text_b;
  std::optional<int> gold;
  std::vector<int> labels_l2r;  // one per seed
  std::vector<int> labels_r2l;
  std::vector<double> confidence_l2r;  // class-1 probability per seed
  std::vector<double> confidence_r2l;
};

/// Examples on which a strict majority of seeds predict different labels for
/// the two orders. At most k are returned, sampled with a seeded shuffle and
/// kept in their original order. examples (optional) supplies texts and gold.
std::vector<DisagreementRecord> extract_disagreements(std::span<const std::vector<DualPassOutput>> runs,
                                                      std::size_t k, std::uint64_t seed = 0,
                                                      std::span<const SentencePair> examples = {});

}  // namespace symcons
