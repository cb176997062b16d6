#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "symcons/corpus.hpp"
#include "symcons/encoder.hpp"
#include "symcons/objective.hpp"
#include "symcons/optimizer.hpp"
#include "symcons/tokenizer.hpp"

namespace symcons {

enum class Objective { baseline, consistency_kl, consistency_js };
std::string_view to_string(Objective objective);
Objective parse_objective(std::string_view name);
bool is_consistency(Objective objective);

struct TrainConfig {
  std::size_t epochs = 3;
  std::size_t batch_size = 32;
  double learning_rate = 1e-3;
  double weight_decay = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps_opt = 1e-8;
  std::uint64_t seed = 1;
  Objective objective = Objective::baseline;
  /// lambda_max and shape are used; total_steps is derived by train().
  LambdaSchedule schedule;
  Head head = Head::clspara;
  KlDirection kl_direction = KlDirection::forward;

  void validate() const;
  AdamWConfig optimizer() const;
};

struct StepRecord {
  std::size_t step = 0;
  std::size_t epoch = 0;
  LossBreakdown loss;
  /// FNV-1a over the example ids of the batch, in batch order. Not written to CSV.
  std::uint64_t batch_digest = 0;
};

struct TrainingLog {
  Objective objective = Objective::baseline;
  std::vector<StepRecord> steps;

  /// CSV with one row per optimizer step. The lambda, ce_r2l and divergence
  /// columns exist only for consistency objectives.
  std::string to_csv() const;
};

struct TrainResult {
  ModelState model;
  AdamMoments moments;
  TrainingLog log;
  std::size_t global_step = 0;
};

/// Number of optimizer steps train() will take, and the annealing horizon it
/// uses (the last step sees lambda_max).
std::size_t planned_steps(std::size_t train_examples, const TrainConfig& config);
LambdaSchedule effective_schedule(const TrainConfig& config, std::size_t total_steps);

/// Fine-tunes model on data.train. Symmetric data is reverse-augmented for
/// every objective so that baseline and consistency runs see the same stream.
/// Consistency objectives run each batch in both orders and minimise the
/// combined loss; the baseline minimises cross-entropy of one pass.
TrainResult train(ModelState model, const DatasetSplit& data, const TrainConfig& config, const Vocabulary& vocab);

struct Checkpoint;

/// Continues training a checkpoint's weights with the [CLS] head and the plain
/// cross-entropy objective on a new task. Optimizer state starts fresh.
TrainResult transfer_finetune(const Checkpoint& checkpoint, const DatasetSplit& data, const TrainConfig& config,
                              const Vocabulary& vocab);

/// Accuracy (percent) of head predictions on examples; pairs are read in their
/// given order.
double accuracy(const ModelState& model, std::span<const SentencePair> examples, const Vocabulary& vocab,
                Head head);

}  // namespace symcons
