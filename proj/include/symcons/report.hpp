#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "symcons/evalkit.hpp"

namespace symcons {

/// Dual-pass outputs of one trained model (one seed) on one dataset, with the
/// gold labels aligned to the outputs.
struct SeedRun {
  std::uint64_t seed = 0;
  std::vector<DualPassOutput> outputs;
  std::vector<int> gold;
};

/// All seeds of one (model, dataset) cell.
struct ModelRuns {
  std::string model;
  std::string dataset;
  std::vector<SeedRun> seeds;
};

struct SeedMetrics {
  std::uint64_t seed = 0;
  double prediction_consistency = 0.0;
  std::optional<double> pearson_x100;
  double mse_x1000 = 0.0;
  double accuracy = 0.0;
  double f1 = 0.0;
};

/// Summary of one (model, dataset) cell. Spreads are population standard
/// deviations over seeds; Pearson and MSE pool every (seed, example) pair.
struct ConsistencyReport {
  std::string model;
  std::string dataset;
  std::size_t n_examples = 0;
  double prediction_consistency = 0.0;  // mean over seeds
  double prediction_consistency_std = 0.0;
  std::optional<double> pearson_x100;
  double mse_x1000 = 0.0;
  double accuracy = 0.0;  // mean over seeds, L2R predictions
  double accuracy_std = 0.0;
  double f1 = 0.0;
  std::vector<SeedMetrics> per_seed;
  /// Against the baseline cell of the same dataset, on pooled per-example
  /// agreement indicators (L2R label == R2L label).
  std::optional<McNemarResult> mcnemar_consistency;
  /// Against the baseline cell, on pooled L2R correctness.
  std::optional<McNemarResult> mcnemar_accuracy;
};

struct ReportSet {
  std::vector<ConsistencyReport> cells;
  std::vector<DisagreementRecord> disagreements;
  std::string baseline_model = "baseline";
};

inline constexpr double kSignificanceLevels[] = {0.01, 0.05};

ConsistencyReport summarize(const ModelRuns& runs);

/// One cell per ModelRuns; every non-baseline cell is compared with the
/// baseline cell of its dataset when the seeds and examples line up.
ReportSet build_report(std::span<const ModelRuns> runs, const std::string& baseline_model = "baseline");

/// "96.6 ± 0.15": mean to one decimal, spread to two.
std::string format_mean_std(double mean, double stddev);

/// Population mean and standard deviation.
std::pair<double, double> mean_and_std(std::span<const double> xs);

/// Columns: model, dataset, pred_consistency_mean, pred_consistency_std,
/// pearson_x100, mse_x1000, accuracy, f1, mcnemar_p.
std::string report_csv(const ReportSet& report);

/// Human-readable comparison table.
std::string report_table(const ReportSet& report);

nlohmann::json report_to_json(const ReportSet& report);
ReportSet report_from_json(const nlohmann::json& j);

void write_report_files(const ReportSet& report, const std::filesystem::path& json_path,
                        const std::filesystem::path& csv_path);

}  // namespace symcons
