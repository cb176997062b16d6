#include "symcons/losscheck.hpp"

#include "symcons/corpus.hpp"
#include "symcons/rng.hpp"
#include "symcons/tokenizer.hpp"

namespace symcons {

GradCheckReport loss_gradient_check(const LossCheckConfig& config) {
  const auto pairs = synth_symmetric(config.batch, 16, 4, config.seed);
  const Vocabulary vocab = build_vocab(pairs, 1);

  ModelConfig mc = config.model;
  mc.vocab_size = vocab.size();
  mc.dropout = 0.0;
  ModelState model = init_model(mc, config.seed);
  Rng rng(derive_seed(config.seed, 1));
  for (auto& [name, t] : model.params) {
    const double centre = name.ends_with(".gain") ? 1.0 : 0.0;
    for (double& v : t.values) v = centre + config.param_std * rng.normal();
  }
  model.set_requires_grad(true);

  std::vector<EncodedInput> inputs;
  std::vector<int> targets;
  for (const auto& ex : pairs) {
    inputs.push_back(encode_example(vocab, ex, mc.max_len));
    targets.push_back(ex.label);
  }
  for (const auto& ex : pairs) inputs.push_back(encode_example(vocab, ex, mc.max_len, /*swapped=*/true));
  const std::size_t n = pairs.size();

  auto objective = [&](Tape& tape) {
    Var probs = softmax(forward_batch(tape, model, inputs, Head::clspara, /*train_mode=*/false, 0));
    return batch_combined_loss(slice_rows(probs, 0, n), slice_rows(probs, n, 2 * n), targets, config.lambda,
                               config.divergence, config.kl_direction);
  };

  std::vector<Tensor*> params;
  for (auto& [name, t] : model.params) params.push_back(&t);
  return gradient_check(objective, params, config.options);
}

}  // namespace symcons
