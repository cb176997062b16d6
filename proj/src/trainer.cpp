#include "symcons/trainer.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

#include "symcons/checkpoint.hpp"
#include "symcons/errors.hpp"
#include "symcons/rng.hpp"

namespace symcons {

std::string_view to_string(Objective objective) {
  switch (objective) {
    case Objective::baseline:
      return "baseline";
    case Objective::consistency_kl:
      return "consistency_kl";
    case Objective::consistency_js:
      return "consistency_js";
  }
  return "baseline";
}

Objective parse_objective(std::string_view name) {
  if (name == "baseline") return Objective::baseline;
  if (name == "consistency_kl") return Objective::consistency_kl;
  if (name == "consistency_js") return Objective::consistency_js;
  throw ContractError("unknown objective '" + std::string(name) + "'");
}

bool is_consistency(Objective objective) { return objective != Objective::baseline; }

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ContractError("learning_rate must be > 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) throw ContractError("betas must be in [0, 1)");
  if (batch_size < 1) throw ContractError("batch_size must be >= 1");
  if (epochs < 1) throw ContractError("epochs must be >= 1");
  if (!(weight_decay >= 0.0)) throw ContractError("weight_decay must be >= 0");
  if (!(schedule.lambda_max >= 0.0)) throw ContractError("lambda_max must be >= 0");
}

AdamWConfig TrainConfig::optimizer() const {
  return AdamWConfig{learning_rate, beta1, beta2, eps_opt, weight_decay};
}

std::string TrainingLog::to_csv() const {
  std::ostringstream os;
  os.precision(17);
  const bool cons = is_consistency(objective);
  os << (cons ? "step,epoch,lambda,ce_l2r,ce_r2l,divergence,total\n" : "step,epoch,ce,total\n");
  for (const auto& r : steps) {
    os << r.step << ',' << r.epoch << ',';
    if (cons) {
      os << r.loss.lambda << ',' << r.loss.ce_l2r << ',' << r.loss.ce_r2l << ',' << r.loss.divergence << ',';
    } else {
      os << r.loss.ce_l2r << ',';
    }
    os << r.loss.total << '\n';
  }
  return os.str();
}

std::size_t planned_steps(std::size_t train_examples, const TrainConfig& config) {
  const std::size_t per_epoch = (train_examples + config.batch_size - 1) / config.batch_size;
  return config.epochs * per_epoch;
}

LambdaSchedule effective_schedule(const TrainConfig& config, std::size_t total_steps) {
  LambdaSchedule s = config.schedule;
  // Steps are numbered 0..total_steps-1; the horizon makes the last one reach lambda_max.
  s.total_steps = total_steps > 1 ? total_steps - 1 : 1;
  return s;
}

namespace {

constexpr std::uint64_t kShuffleStream = 1;
constexpr std::uint64_t kDropoutStream = 2;

void check_task(const DatasetSplit& data, const TrainConfig& config) {
  if (is_consistency(config.objective)) {
    if (data.task_kind != TaskKind::symmetric) {
      throw ContractError("consistency objectives need a symmetric task; got " + std::string(to_string(data.task_kind)));
    }
    if (config.head != Head::clspara) throw ContractError("consistency objectives read the clspara head");
  } else if (data.task_kind != TaskKind::symmetric && config.head != Head::cls) {
    throw ContractError("single-input and non-symmetric tasks use the cls head");
  }
  for (const auto& ex : data.train) {
    if (ex.task_kind != data.task_kind) throw ContractError("example '" + ex.example_id + "' has the wrong task kind");
  }
}

}  // namespace

TrainResult train(ModelState model, const DatasetSplit& data, const TrainConfig& config, const Vocabulary& vocab) {
  config.validate();
  check_task(data, config);
  if (data.train.empty()) throw ContractError("train: empty training set");
  if (vocab.size() > model.config.vocab_size) throw ContractError("train: vocabulary larger than the model's embedding table");

  const std::vector<SentencePair> examples =
      data.task_kind == TaskKind::symmetric ? reverse_augment(data.train)
                                            : std::vector<SentencePair>(data.train.begin(), data.train.end());
  const bool dual = is_consistency(config.objective);
  const Divergence div = config.objective == Objective::consistency_js ? Divergence::js : Divergence::kl;
  const std::size_t max_len = model.config.max_len;

  std::vector<EncodedInput> fwd, rev;
  std::vector<int> labels;
  for (const auto& ex : examples) {
    fwd.push_back(encode_example(vocab, ex, max_len));
    if (dual) rev.push_back(encode_example(vocab, ex, max_len, /*swapped=*/true));
    labels.push_back(ex.label);
  }

  const std::size_t total_steps = planned_steps(examples.size(), config);
  const LambdaSchedule schedule = effective_schedule(config, total_steps);
  const AdamWConfig opt = config.optimizer();

  TrainResult result;
  result.log.objective = config.objective;
  model.set_requires_grad(true);

  Rng order_rng(derive_seed(config.seed, kShuffleStream));
  std::vector<std::size_t> order(examples.size());
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    order_rng.shuffle(std::span(order));
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t n = std::min(config.batch_size, order.size() - start);
      std::vector<EncodedInput> batch;
      std::vector<int> targets;
      batch.reserve(dual ? 2 * n : n);
      for (std::size_t i = 0; i < n; ++i) {
        batch.push_back(fwd[order[start + i]]);
        targets.push_back(labels[order[start + i]]);
      }
      if (dual) {
        for (std::size_t i = 0; i < n; ++i) batch.push_back(rev[order[start + i]]);
      }

      Tape tape;
      const std::uint64_t dropout_seed = derive_seed(derive_seed(config.seed, kDropoutStream), step);
      Var probs = softmax(forward_batch(tape, model, batch, config.head, /*train_mode=*/true, dropout_seed));
      StepRecord rec;
      rec.step = step;
      rec.epoch = epoch;
      rec.batch_digest = 14695981039346656037ULL;
      for (std::size_t i = 0; i < n; ++i) {
        for (unsigned char ch : examples[order[start + i]].example_id + '\n') {
          rec.batch_digest = (rec.batch_digest ^ ch) * 1099511628211ULL;
        }
      }
      Var loss;
      if (dual) {
        const double lambda = lambda_at(schedule, step);
        loss = batch_combined_loss(slice_rows(probs, 0, n), slice_rows(probs, n, 2 * n), targets, lambda, div,
                                   config.kl_direction, &rec.loss);
      } else {
        loss = batch_cross_entropy(probs, targets, &rec.loss.ce_l2r);
        rec.loss.total = rec.loss.ce_l2r;
      }
      if (!std::isfinite(rec.loss.total)) {
        throw NumericalError("non-finite training loss at step " + std::to_string(step));
      }

      model.zero_grad();
      tape.backward(loss);
      optimizer_step(model.params, result.moments, step + 1, opt);
      result.log.steps.push_back(rec);
      ++step;
    }
  }

  model.set_requires_grad(false);
  model.role = data.task_kind == TaskKind::symmetric ? ModelRole::symmetric_finetuned : ModelRole::transferred;
  result.model = std::move(model);
  result.global_step = step;
  return result;
}

TrainResult transfer_finetune(const Checkpoint& checkpoint, const DatasetSplit& data, const TrainConfig& config,
                              const Vocabulary& vocab) {
  if (checkpoint.role != ModelRole::symmetric_finetuned && checkpoint.role != ModelRole::randomly_initialized) {
    throw ContractError("transfer_finetune starts from a symmetric_finetuned or randomly_initialized checkpoint");
  }
  if (config.head != Head::cls) throw ContractError("transfer_finetune trains the cls head");
  if (config.objective != Objective::baseline) throw ContractError("transfer_finetune uses the cross-entropy objective");
  TrainResult r = train(checkpoint.to_model(), data, config, vocab);
  r.model.role = ModelRole::transferred;
  return r;
}

double accuracy(const ModelState& model, std::span<const SentencePair> examples, const Vocabulary& vocab, Head head) {
  if (examples.empty()) throw ContractError("accuracy: no examples");
  std::vector<EncodedInput> enc;
  for (const auto& ex : examples) enc.push_back(encode_example(vocab, ex, model.config.max_len));
  const auto probs = predict_probs(model, enc, head);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < examples.size(); ++i) correct += probs[i].argmax() == examples[i].label ? 1 : 0;
  return 100.0 * static_cast<double>(correct) / static_cast<double>(examples.size());
}

}  // namespace symcons
