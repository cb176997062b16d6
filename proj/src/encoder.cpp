#include "symcons/encoder.hpp"

#include <cmath>
#include <functional>

#include "symcons/errors.hpp"
#include "symcons/rng.hpp"

namespace symcons {

void ModelConfig::validate() const {
  if (layers < 1 || heads < 1 || d_model < 1 || d_ff < 1 || max_len < 1 || vocab_size < 1 ||
      num_classes < 1) {
    throw ContractError("model config counts must all be >= 1");
  }
  if (d_model % heads != 0) throw ContractError("d_model must be divisible by heads");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ContractError("dropout must be in [0, 1)");
}

std::string_view to_string(ModelRole role) {
  switch (role) {
    case ModelRole::randomly_initialized:
      return "randomly_initialized";
    case ModelRole::symmetric_finetuned:
      return "symmetric_finetuned";
    case ModelRole::transferred:
      return "transferred";
  }
  return "randomly_initialized";
}

ModelRole parse_model_role(std::string_view name) {
  if (name == "randomly_initialized") return ModelRole::randomly_initialized;
  if (name == "symmetric_finetuned") return ModelRole::symmetric_finetuned;
  if (name == "transferred") return ModelRole::transferred;
  throw ContractError("unknown model role '" + std::string(name) + "'");
}

std::string_view to_string(Head head) { return head == Head::clspara ? "clspara" : "cls"; }

Head parse_head(std::string_view name) {
  if (name == "clspara") return Head::clspara;
  if (name == "cls") return Head::cls;
  throw ContractError("unknown head '" + std::string(name) + "'");
}

std::size_t head_position(Head head) { return head == Head::clspara ? kClsParaPosition : kClsPosition; }

std::vector<std::pair<std::string, Shape>> parameter_layout(const ModelConfig& c) {
  std::vector<std::pair<std::string, Shape>> out;
  const std::size_t d = c.d_model;
  out.push_back({"embed.token", {c.vocab_size, d}});
  out.push_back({"embed.position", {c.max_len, d}});
  out.push_back({"embed.segment", {2, d}});
  for (std::size_t l = 0; l < c.layers; ++l) {
    const std::string p = "layers." + std::to_string(l) + ".";
    out.push_back({p + "ln1.gain", {d}});
    out.push_back({p + "ln1.bias", {d}});
    for (const char* proj : {"query", "key", "value", "output"}) {
      out.push_back({p + "attn." + proj + ".weight", {d, d}});
      // A key bias shifts every score of a query equally, so it has no effect.
      if (std::string_view(proj) != "key") out.push_back({p + "attn." + proj + ".bias", {d}});
    }
    out.push_back({p + "ln2.gain", {d}});
    out.push_back({p + "ln2.bias", {d}});
    out.push_back({p + "ffn.in.weight", {d, c.d_ff}});
    out.push_back({p + "ffn.in.bias", {c.d_ff}});
    out.push_back({p + "ffn.out.weight", {c.d_ff, d}});
    out.push_back({p + "ffn.out.bias", {d}});
  }
  out.push_back({"final_ln.gain", {d}});
  out.push_back({"final_ln.bias", {d}});
  for (const char* h : {"clspara", "cls"}) {
    out.push_back({std::string("head.") + h + ".weight", {d, c.num_classes}});
    out.push_back({std::string("head.") + h + ".bias", {c.num_classes}});
  }
  return out;
}

namespace {

bool ends_with(std::string_view s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.substr(s.size() - suffix.size()) == suffix;
}

}  // namespace

bool uses_weight_decay(std::string_view name) { return !ends_with(name, ".bias") && !ends_with(name, ".gain"); }

Tensor& ModelState::param(const std::string& name) {
  auto it = params.find(name);
  if (it == params.end()) throw ContractError("no parameter named " + name);
  return it->second;
}

const Tensor& ModelState::param(const std::string& name) const {
  auto it = params.find(name);
  if (it == params.end()) throw ContractError("no parameter named " + name);
  return it->second;
}

std::size_t ModelState::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : params) n += t.size();
  return n;
}

void ModelState::set_requires_grad(bool on) {
  for (auto& [name, t] : params) t.set_requires_grad(on);
}

void ModelState::zero_grad() {
  for (auto& [name, t] : params) t.zero_grad();
}

ModelState init_model(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  ModelState state;
  state.config = config;
  state.role = ModelRole::randomly_initialized;
  Rng rng(seed);
  for (auto& [name, shape] : parameter_layout(config)) {
    Tensor t(shape);
    if (ends_with(name, ".gain")) {
      std::fill(t.values.begin(), t.values.end(), 1.0);
    } else if (!ends_with(name, ".bias")) {
      for (double& x : t.values) x = rng.truncated_normal(0.02);
    }
    state.params.emplace(name, std::move(t));
  }
  return state;
}

namespace {

using Binder = std::function<Var(const std::string&)>;

Var run_encoder(const ModelConfig& cfg, const Binder& bind, std::span<const EncodedInput> inputs,
                Head head, bool train_mode, std::uint64_t dropout_seed) {
  const std::size_t batch = inputs.size();
  const std::size_t len = cfg.max_len;
  const std::size_t d = cfg.d_model;
  const std::size_t dh = d / cfg.heads;
  if (batch == 0) throw ContractError("forward: empty batch");

  std::vector<std::size_t> ids, positions, segments, picks;
  std::vector<int> key_mask;
  ids.reserve(batch * len);
  positions.reserve(batch * len);
  segments.reserve(batch * len);
  key_mask.reserve(batch * len);
  for (std::size_t b = 0; b < batch; ++b) {
    const EncodedInput& in = inputs[b];
    if (in.length() != len) {
      throw ContractError("forward: input length " + std::to_string(in.length()) + " != max_len " +
                          std::to_string(len));
    }
    if (head == Head::clspara && !in.has_clspara) {
      throw ContractError("forward: clspara head needs inputs encoded with [CLSPara]");
    }
    for (std::size_t i = 0; i < len; ++i) {
      if (in.token_ids[i] >= cfg.vocab_size) throw ContractError("forward: token id outside vocabulary");
      ids.push_back(in.token_ids[i]);
      positions.push_back(i);
      segments.push_back(in.segment_ids.empty() || in.segment_ids[i] == 0 ? 0 : 1);
      key_mask.push_back(in.attention_mask[i]);
    }
    picks.push_back(b * len + head_position(head));
  }

  const double rate = train_mode ? cfg.dropout : 0.0;
  Rng drop_rng(dropout_seed);

  Var h = add(gather_rows(bind("embed.token"), std::move(ids)), gather_rows(bind("embed.position"), std::move(positions)));
  h = add(h, gather_rows(bind("embed.segment"), std::move(segments)));
  // Embeddings enter the residual stream scaled by sqrt(d_model).
  h = scale(h, std::sqrt(static_cast<double>(d)));
  h = dropout(h, rate, drop_rng);

  for (std::size_t l = 0; l < cfg.layers; ++l) {
    const std::string p = "layers." + std::to_string(l) + ".";
    auto linear = [&](Var x, const std::string& name) {
      return add(matmul(x, bind(p + name + ".weight")), bind(p + name + ".bias"));
    };

    Var x = layer_norm(h, bind(p + "ln1.gain"), bind(p + "ln1.bias"));
    Var q = linear(x, "attn.query");
    Var k = matmul(x, bind(p + "attn.key.weight"));
    Var v = linear(x, "attn.value");
    std::vector<Var> head_outputs;
    for (std::size_t hd = 0; hd < cfg.heads; ++hd) {
      auto split = [&](Var t) { return reshape(slice_last(t, hd * dh, (hd + 1) * dh), {batch, len, dh}); };
      Var o = scaled_dot_attention(split(q), split(k), split(v), key_mask);
      head_outputs.push_back(reshape(o, {batch * len, dh}));
    }
    Var attn = cfg.heads == 1 ? head_outputs[0] : concat_last(head_outputs);
    h = add(h, dropout(linear(attn, "attn.output"), rate, drop_rng));

    x = layer_norm(h, bind(p + "ln2.gain"), bind(p + "ln2.bias"));
    Var f = linear(gelu(linear(x, "ffn.in")), "ffn.out");
    h = add(h, dropout(f, rate, drop_rng));
  }

  Var pooled = gather_rows(h, std::move(picks));
  pooled = layer_norm(pooled, bind("final_ln.gain"), bind("final_ln.bias"));
  const std::string hn = std::string("head.") + std::string(to_string(head));
  return add(matmul(pooled, bind(hn + ".weight")), bind(hn + ".bias"));
}

}  // namespace

Var forward_batch(Tape& tape, ModelState& state, std::span<const EncodedInput> inputs, Head head,
                  bool train_mode, std::uint64_t dropout_seed) {
  Binder bind = [&](const std::string& name) { return tape.parameter(state.param(name)); };
  return run_encoder(state.config, bind, inputs, head, train_mode, dropout_seed);
}

Var forward_batch(Tape& tape, const ModelState& state, std::span<const EncodedInput> inputs, Head head,
                  bool train_mode, std::uint64_t dropout_seed) {
  Binder bind = [&](const std::string& name) { return tape.parameter(state.param(name)); };
  return run_encoder(state.config, bind, inputs, head, train_mode, dropout_seed);
}

Var forward(Tape& tape, const ModelState& state, const EncodedInput& input, Head head, bool train_mode,
            std::uint64_t dropout_seed) {
  return forward_batch(tape, state, std::span<const EncodedInput>(&input, 1), head, train_mode, dropout_seed);
}

std::vector<ProbabilityVector> predict_probs(const ModelState& state, std::span<const EncodedInput> inputs,
                                             Head head, std::size_t batch_size) {
  if (batch_size == 0) throw ContractError("predict_probs: batch_size must be >= 1");
  std::vector<ProbabilityVector> out;
  out.reserve(inputs.size());
  const std::size_t c = state.config.num_classes;
  for (std::size_t start = 0; start < inputs.size(); start += batch_size) {
    const std::size_t n = std::min(batch_size, inputs.size() - start);
    Tape tape(/*grad_enabled=*/false);
    Var probs = softmax(forward_batch(tape, state, inputs.subspan(start, n), head, false, 0));
    const auto& pv = probs.value().values;
    for (std::size_t i = 0; i < n; ++i) {
      out.emplace_back(std::vector<double>(pv.begin() + static_cast<std::ptrdiff_t>(i * c),
                                           pv.begin() + static_cast<std::ptrdiff_t>((i + 1) * c)));
    }
  }
  return out;
}

DualPassOutput dual_forward(const ModelState& state, std::string_view a, std::string_view b,
                            const Vocabulary& vocab, std::string example_id) {
  SentencePair ex;
  ex.text_a = std::string(a);
  ex.text_b = std::string(b);
  ex.example_id = std::move(example_id);
  return dual_forward_all(state, std::span<const SentencePair>(&ex, 1), vocab).front();
}

std::vector<DualPassOutput> dual_forward_all(const ModelState& state, std::span<const SentencePair> examples,
                                             const Vocabulary& vocab, std::size_t batch_size) {
  std::vector<EncodedInput> l2r, r2l;
  for (const auto& ex : examples) {
    if (!ex.text_b) throw ContractError("dual_forward needs pair examples; '" + ex.example_id + "' has no text_b");
    l2r.push_back(encode_pair(vocab, ex.text_a, *ex.text_b, true, state.config.max_len));
    r2l.push_back(encode_pair(vocab, *ex.text_b, ex.text_a, true, state.config.max_len));
  }
  auto pl = predict_probs(state, l2r, Head::clspara, batch_size);
  auto pr = predict_probs(state, r2l, Head::clspara, batch_size);
  std::vector<DualPassOutput> out;
  out.reserve(examples.size());
  for (std::size_t i = 0; i < examples.size(); ++i) {
    const int ll = pl[i].argmax();
    const int lr = pr[i].argmax();
    out.push_back(DualPassOutput{std::move(pl[i]), std::move(pr[i]), ll, lr, examples[i].example_id});
  }
  return out;
}

}  // namespace symcons
