#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "symcons/autodiff.hpp"
#include "symcons/corpus.hpp"
#include "symcons/objective.hpp"
#include "symcons/tokenizer.hpp"

namespace symcons {

struct ModelConfig {
  std::size_t layers = 2;
  std::size_t heads = 2;
  std::size_t d_model = 64;
  std::size_t d_ff = 128;
  std::size_t max_len = 16;
  std::size_t vocab_size = 0;
  std::size_t num_classes = 2;
  double dropout = 0.0;

  /// Throws ContractError unless d_model % heads == 0, counts >= 1, dropout in [0, 1).
  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

enum class ModelRole { randomly_initialized, symmetric_finetuned, transferred };
std::string_view to_string(ModelRole role);
ModelRole parse_model_role(std::string_view name);

/// Classification read-out: the [CLSPara] position or the [CLS] position.
enum class Head { clspara, cls };
std::string_view to_string(Head head);
Head parse_head(std::string_view name);
std::size_t head_position(Head head);

/// Parameter names and shapes for a config, in initialisation order.
std::vector<std::pair<std::string, Shape>> parameter_layout(const ModelConfig& config);

/// Weight decay applies to everything except biases and layer-norm gains.
bool uses_weight_decay(std::string_view param_name);

struct ModelState {
  ModelConfig config;
  ModelRole role = ModelRole::randomly_initialized;
  std::map<std::string, Tensor> params;

  Tensor& param(const std::string& name);
  const Tensor& param(const std::string& name) const;
  std::size_t parameter_count() const;
  void set_requires_grad(bool on);
  void zero_grad();
};

/// Truncated normal(0, 0.02) weights and embeddings, zero biases, unit
/// layer-norm gains. Deterministic in seed.
ModelState init_model(const ModelConfig& config, std::uint64_t seed);

/// Logits [B, num_classes] for a batch of encoded inputs of length config.max_len.
/// train_mode applies dropout with masks drawn from dropout_seed. Parameters
/// with requires_grad receive gradients when the tape is differentiated.
Var forward_batch(Tape& tape, ModelState& state, std::span<const EncodedInput> inputs, Head head,
                  bool train_mode, std::uint64_t dropout_seed);
/// Read-only variant for evaluation.
Var forward_batch(Tape& tape, const ModelState& state, std::span<const EncodedInput> inputs, Head head,
                  bool train_mode, std::uint64_t dropout_seed);

/// Logits of one input as a [1, num_classes] node.
Var forward(Tape& tape, const ModelState& state, const EncodedInput& input, Head head, bool train_mode,
            std::uint64_t dropout_seed);

/// Softmax rows for inputs, evaluated in eval mode in chunks of batch_size.
std::vector<ProbabilityVector> predict_probs(const ModelState& state, std::span<const EncodedInput> inputs,
                                             Head head, std::size_t batch_size = 64);

struct DualPassOutput {
  ProbabilityVector p_l2r;
  ProbabilityVector p_r2l;
  int label_l2r = 0;
  int label_r2l = 0;
  std::string example_id;
};

/// Evaluates (a, b) and (b, a) with the [CLSPara] head in eval mode.
DualPassOutput dual_forward(const ModelState& state, std::string_view a, std::string_view b,
                            const Vocabulary& vocab, std::string example_id = {});

/// dual_forward over a list of pair examples, batched.
std::vector<DualPassOutput> dual_forward_all(const ModelState& state, std::span<const SentencePair> examples,
                                             const Vocabulary& vocab, std::size_t batch_size = 64);

}  // namespace symcons
