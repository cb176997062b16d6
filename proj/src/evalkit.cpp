#include "symcons/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_map>

#include "symcons/errors.hpp"
#include "symcons/rng.hpp"

namespace symcons {

double prediction_consistency(std::span<const DualPassOutput> outputs) {
  if (outputs.empty()) throw ContractError("prediction_consistency: no outputs");
  std::size_t agree = 0;
  for (const auto& o : outputs) agree += o.label_l2r == o.label_r2l ? 1 : 0;
  return 100.0 * static_cast<double>(agree) / static_cast<double>(outputs.size());
}

ConfidenceConsistency confidence_consistency(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw ContractError("confidence_consistency: length mismatch");
  if (x.size() < 2) throw ContractError("confidence_consistency: need at least 2 examples");
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0, sq = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
    sq += (x[i] - y[i]) * (x[i] - y[i]);
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  ConfidenceConsistency out;
  out.mse_x1000 = 1000.0 * sq / n;
  if (sxx > 0.0 && syy > 0.0) out.pearson_x100 = 100.0 * std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
  return out;
}

ConfidenceConsistency confidence_consistency(std::span<const DualPassOutput> outputs) {
  std::vector<double> x, y;
  for (const auto& o : outputs) {
    if (o.p_l2r.size() < 2) throw ContractError("confidence_consistency: needs class-1 probabilities");
    x.push_back(o.p_l2r[1]);
    y.push_back(o.p_r2l[1]);
  }
  return confidence_consistency(x, y);
}

ClassificationMetrics classification_metrics(std::span<const int> predictions, std::span<const int> gold) {
  if (predictions.size() != gold.size()) throw ContractError("classification_metrics: length mismatch");
  if (predictions.empty()) throw ContractError("classification_metrics: no predictions");
  std::size_t correct = 0, tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    correct += predictions[i] == gold[i] ? 1 : 0;
    if (predictions[i] == 1 && gold[i] == 1) ++tp;
    if (predictions[i] == 1 && gold[i] != 1) ++fp;
    if (predictions[i] != 1 && gold[i] == 1) ++fn;
  }
  ClassificationMetrics m;
  m.accuracy = 100.0 * static_cast<double>(correct) / static_cast<double>(gold.size());
  const double precision = tp + fp ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
  const double recall = tp + fn ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
  m.f1 = precision + recall > 0.0 ? 100.0 * 2.0 * precision * recall / (precision + recall) : 0.0;
  return m;
}

double chi_square1_survival(double x) {
  if (x <= 0.0) return 1.0;
  return std::erfc(std::sqrt(x / 2.0));
}

namespace {

double exact_binomial_two_sided(std::size_t b, std::size_t c) {
  const std::size_t n = b + c;
  const std::size_t lo = std::min(b, c);
  const double log_half_n = static_cast<double>(n) * std::log(0.5);
  const double log_n_fact = std::lgamma(static_cast<double>(n) + 1.0);
  double tail = 0.0;
  for (std::size_t k = 0; k <= lo; ++k) {
    const double log_choose = log_n_fact - std::lgamma(static_cast<double>(k) + 1.0) -
                              std::lgamma(static_cast<double>(n - k) + 1.0);
    tail += std::exp(log_choose + log_half_n);
  }
  return std::min(1.0, 2.0 * tail);
}

}  // namespace

McNemarResult mcnemar_from_counts(std::size_t b, std::size_t c, std::span<const double> alphas) {
  McNemarResult r;
  r.b = b;
  r.c = c;
  const std::size_t n = b + c;
  if (n == 0) {
    r.statistic = 0.0;
    r.p_value = 1.0;
    r.exact = true;
  } else if (n >= kMcNemarExactBelow) {
    const double d = std::abs(static_cast<double>(b) - static_cast<double>(c)) - 1.0;
    r.statistic = std::max(0.0, d) * std::max(0.0, d) / static_cast<double>(n);
    r.p_value = chi_square1_survival(r.statistic);
  } else {
    const double d = std::abs(static_cast<double>(b) - static_cast<double>(c)) - 1.0;
    r.statistic = std::max(0.0, d) * std::max(0.0, d) / static_cast<double>(n);
    r.p_value = exact_binomial_two_sided(b, c);
    r.exact = true;
  }
  for (double a : alphas) r.significant_at.emplace_back(a, r.p_value < a);
  return r;
}

McNemarResult mcnemar_test(const std::vector<bool>& correct1, const std::vector<bool>& correct2,
                           std::span<const double> alphas) {
  if (correct1.size() != correct2.size()) throw ContractError("mcnemar_test: correctness vectors differ in length");
  std::size_t b = 0, c = 0;
  for (std::size_t i = 0; i < correct1.size(); ++i) {
    if (correct1[i] && !correct2[i]) ++b;
    if (!correct1[i] && correct2[i]) ++c;
  }
  return mcnemar_from_counts(b, c, alphas);
}

std::vector<DisagreementRecord> extract_disagreements(std::span<const std::vector<DualPassOutput>> runs,
                                                      std::size_t k, std::uint64_t seed,
                                                      std::span<const SentencePair> examples) {
  if (runs.empty()) throw ContractError("extract_disagreements: need at least one seed");
  const std::size_t n = runs[0].size();
  for (const auto& run : runs) {
    if (run.size() != n) throw ContractError("extract_disagreements: seeds cover different example counts");
    for (std::size_t i = 0; i < n; ++i) {
      if (run[i].example_id != runs[0][i].example_id) {
        throw ContractError("extract_disagreements: misaligned example_id '" + run[i].example_id + "'");
      }
    }
  }
  std::unordered_map<std::string, const SentencePair*> by_id;
  for (const auto& ex : examples) by_id.emplace(ex.example_id, &ex);

  std::vector<std::size_t> qualifying;
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t flips = 0;
    for (const auto& run : runs) flips += run[i].label_l2r != run[i].label_r2l ? 1 : 0;
    if (2 * flips > runs.size()) qualifying.push_back(i);
  }
  if (qualifying.size() > k) {
    Rng rng(seed);
    rng.shuffle(std::span(qualifying));
    qualifying.resize(k);
    std::sort(qualifying.begin(), qualifying.end());
  }

  std::vector<DisagreementRecord> out;
  for (std::size_t i : qualifying) {
    DisagreementRecord rec;
    rec.example_id = runs[0][i].example_id;
    if (auto it = by_id.find(rec.example_id); it != by_id.end()) {
      rec.text_a = it->second->text_a;
      rec.text_b = it->second->text_b.value_or("");
      rec.gold = it->second->label;
    }
    for (const auto& run : runs) {
      rec.labels_l2r.push_back(run[i].label_l2r);
      rec.labels_r2l.push_back(run[i].label_r2l);
      rec.confidence_l2r.push_back(run[i].p_l2r.size() > 1 ? run[i].p_l2r[1] : 0.0);
      rec.confidence_r2l.push_back(run[i].p_r2l.size() > 1 ? run[i].p_r2l[1] : 0.0);
    }
    out.push_back(std::move(rec));
  }
  return out;
}

}  // namespace symcons
