#include "cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

#include "symcons/checkpoint.hpp"
#include "symcons/corpus.hpp"
#include "symcons/errors.hpp"
#include "symcons/evalkit.hpp"
#include "symcons/losscheck.hpp"
#include "symcons/report.hpp"
#include "symcons/rng.hpp"
#include "symcons/tokenizer.hpp"

namespace symcons::cli {

namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kInitStream = 3;

const std::vector<std::string> kObjectiveNames = {"baseline", "consistency_kl", "consistency_js"};
const std::vector<std::string> kHeadNames = {"clspara", "cls"};
const std::vector<std::string> kTaskNames = {"symmetric", "single", "non_symmetric"};

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot write " + path.string());
  os << text;
  if (!os) throw DataError("write failed for " + path.string());
}

void make_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw DataError("cannot create directory " + dir.string() + ": " + ec.message());
}

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

void echo_config(const CLI::App& cmd, const fs::path& dir) {
  write_text(dir / "effective_config.ini", cmd.config_to_str(/*default_also=*/true, /*write_description=*/false));
}

struct SynthArgs {
  std::size_t n = 2000;
  std::uint64_t seed = 1;
  std::size_t vocab = 64;
  std::size_t max_words = 6;
  std::string task = "symmetric";
  double val_frac = 0.1;
  double test_frac = 0.1;
  std::string out;
};

int cmd_synth(const SynthArgs& a, const CLI::App& cmd, std::ostream& out) {
  if (a.n < 3) throw ContractError("synth: --n must be at least 3");
  std::vector<SentencePair> all;
  TaskKind kind = parse_task_kind(a.task);
  switch (kind) {
    case TaskKind::symmetric: all = synth_symmetric(a.n, a.vocab, a.max_words, a.seed); break;
    case TaskKind::single: all = synth_single(a.n, a.vocab, a.max_words, a.seed); break;
    case TaskKind::non_symmetric: all = synth_order_sensitive(a.n, a.vocab, a.max_words, a.seed); break;
  }
  const SplitFractions fr{1.0 - a.val_frac - a.test_frac, a.val_frac, a.test_frac};
  const DatasetSplit split = split_dataset(all, fr, derive_seed(a.seed, 1), a.task);
  const fs::path dir(a.out);
  make_dir(dir);
  save_jsonl(dir / "train.jsonl", split.train);
  save_jsonl(dir / "val.jsonl", split.validation);
  save_jsonl(dir / "test.jsonl", split.test);
  echo_config(cmd, dir);
  out << "train " << split.train.size() << "\nval " << split.validation.size() << "\ntest " << split.test.size()
      << '\n';
  return kOk;
}

struct TrainArgs {
  std::string train_path;
  std::string val_path;
  std::string task = "symmetric";
  std::string init;
  std::string out;
  std::string seeds = "1";
  std::string objective = "baseline";
  std::string head = "clspara";
  std::string kl_direction = "forward";
  double lambda_max = 100.0;
  std::size_t epochs = 3;
  std::size_t batch = 32;
  double lr = 1e-3;
  double weight_decay = 0.01;
  ModelConfig model;
};

RunConfig to_run_config(const TrainArgs& a) {
  RunConfig rc;
  rc.model = a.model;
  rc.task = parse_task_kind(a.task);
  rc.train_path = a.train_path;
  if (!a.init.empty()) rc.init_checkpoint = fs::path(a.init);
  rc.out_dir = a.out;
  rc.seeds = parse_seed_list(a.seeds);
  rc.train.epochs = a.epochs;
  rc.train.batch_size = a.batch;
  rc.train.learning_rate = a.lr;
  rc.train.weight_decay = a.weight_decay;
  rc.train.objective = parse_objective(a.objective);
  rc.train.head = parse_head(a.head);
  rc.train.kl_direction = parse_kl_direction(a.kl_direction);
  rc.train.schedule.lambda_max = a.lambda_max;
  return rc;
}

std::string log_with_header(const TrainingLog& log) { return "# written " + utc_timestamp() + "\n" + log.to_csv(); }

int cmd_train(const TrainArgs& a, const CLI::App& cmd, std::ostream& out) {
  RunConfig rc = to_run_config(a);
  rc.resolve();
  rc.train.validate();

  DatasetSplit data;
  data.name = rc.train_path.stem().string();
  data.task_kind = rc.task;
  data.train = load_jsonl(rc.train_path, rc.task);
  if (!a.val_path.empty()) data.validation = load_jsonl(a.val_path, rc.task);

  std::optional<Checkpoint> init;
  Vocabulary vocab;
  if (rc.init_checkpoint) {
    init = load_checkpoint(*rc.init_checkpoint);
    vocab = Vocabulary::load(rc.init_checkpoint->parent_path() / "vocab.tsv");
  } else {
    vocab = build_vocab(data.train, 1);
    rc.model.vocab_size = vocab.size();
    rc.model.validate();
  }

  make_dir(rc.out_dir);
  echo_config(cmd, rc.out_dir);
  for (std::uint64_t seed : rc.seeds) {
    TrainConfig tc = rc.train;
    tc.seed = seed;
    TrainResult result = init ? transfer_finetune(*init, data, tc, vocab)
                              : train(init_model(rc.model, derive_seed(seed, kInitStream)), data, tc, vocab);
    const fs::path dir = rc.out_dir / ("seed_" + std::to_string(seed));
    make_dir(dir);
    save_checkpoint(Checkpoint::from_training(result, tc), dir / "model.symc");
    write_text(dir / "train_log.csv", log_with_header(result.log));
    vocab.save(dir / "vocab.tsv");
    out << "seed " << seed << ": " << result.global_step << " steps, final loss " << std::setprecision(6)
        << (result.log.steps.empty() ? 0.0 : result.log.steps.back().loss.total);
    if (!data.validation.empty()) {
      out << ", val accuracy " << std::fixed << std::setprecision(2)
          << accuracy(result.model, data.validation, vocab, tc.head) << std::defaultfloat;
    }
    out << '\n';
  }
  return kOk;
}

struct EvalArgs {
  std::string dataset;
  std::string task = "symmetric";
  std::vector<std::string> checkpoints;
  std::string vocab;
  std::string out;
  std::string name;
  std::string baseline = "baseline";
  std::size_t audit_k = 0;
  std::uint64_t audit_seed = 0;
};

std::string model_name(const Checkpoint& c) {
  if (c.train_config) return std::string(to_string(c.train_config->objective));
  return std::string(to_string(c.role));
}

int cmd_eval(const EvalArgs& a, const CLI::App& cmd, std::ostream& out) {
  if (a.checkpoints.empty()) throw ContractError("eval: no checkpoints given");
  const TaskKind kind = parse_task_kind(a.task);
  if (kind == TaskKind::single) throw ContractError("eval: dual passes need pair data");
  for (const auto& p : a.checkpoints) {
    if (!fs::exists(p)) throw DataError("missing checkpoint " + p);
  }
  const auto examples = load_jsonl(a.dataset, kind);
  if (examples.empty()) throw DataError("eval: dataset " + a.dataset + " is empty");
  std::vector<int> gold;
  for (const auto& ex : examples) gold.push_back(ex.label);
  const std::string dataset_name = a.name.empty() ? fs::path(a.dataset).stem().string() : a.name;

  // Cells ordered by objective then name; seeds ascending inside each cell.
  std::map<std::pair<int, std::string>, ModelRuns> cells;
  for (const auto& p : a.checkpoints) {
    const Checkpoint c = load_checkpoint(p);
    const fs::path vocab_path = a.vocab.empty() ? fs::path(p).parent_path() / "vocab.tsv" : fs::path(a.vocab);
    const Vocabulary vocab = Vocabulary::load(vocab_path);
    const ModelState model = c.to_model();
    const std::string name = model_name(c);
    const int rank = c.train_config ? static_cast<int>(c.train_config->objective) : 99;
    auto& cell = cells[{rank, name}];
    cell.model = name;
    cell.dataset = dataset_name;
    SeedRun run;
    run.seed = c.train_config ? c.train_config->seed : 0;
    run.outputs = dual_forward_all(model, examples, vocab);
    run.gold = gold;
    cell.seeds.push_back(std::move(run));
  }
  std::vector<ModelRuns> runs;
  for (auto& [key, cell] : cells) {
    std::stable_sort(cell.seeds.begin(), cell.seeds.end(),
                     [](const SeedRun& x, const SeedRun& y) { return x.seed < y.seed; });
    runs.push_back(std::move(cell));
  }

  ReportSet report = build_report(runs, a.baseline);
  if (a.audit_k > 0) {
    const ModelRuns* audited = &runs.front();
    for (const auto& r : runs) {
      if (r.model == a.baseline) audited = &r;
    }
    std::vector<std::vector<DualPassOutput>> outputs;
    for (const auto& s : audited->seeds) outputs.push_back(s.outputs);
    report.disagreements = extract_disagreements(outputs, a.audit_k, a.audit_seed, examples);
  }

  const fs::path dir(a.out);
  make_dir(dir);
  write_report_files(report, dir / "report.json", dir / "report.csv");
  echo_config(cmd, dir);
  out << report_table(report);
  if (a.audit_k > 0) out << "disagreements sampled: " << report.disagreements.size() << '\n';
  return kOk;
}

struct GradcheckArgs {
  std::string divergence = "both";
  double lambda = 10.0;
  double h = 1e-5;
  double tol = 1e-4;
  std::uint64_t seed = 7;
  bool corrupt = false;
};

int cmd_gradcheck(const GradcheckArgs& a, std::ostream& out) {
  std::vector<Divergence> divs;
  if (a.divergence == "kl" || a.divergence == "both") divs.push_back(Divergence::kl);
  if (a.divergence == "js" || a.divergence == "both") divs.push_back(Divergence::js);
  bool ok = true;
  for (Divergence d : divs) {
    LossCheckConfig cfg;
    cfg.divergence = d;
    cfg.lambda = a.lambda;
    cfg.seed = a.seed;
    cfg.options.h = a.h;
    cfg.options.tol = a.tol;
    if (a.corrupt) cfg.options.analytic_scale = 1.1;
    const GradCheckReport r = loss_gradient_check(cfg);
    out << "gradcheck " << to_string(d) << ": max_rel_error " << std::scientific << std::setprecision(3)
        << r.max_rel_error << std::defaultfloat << " over " << r.coords_checked << " coordinates, tol " << a.tol
        << (r.passed ? " PASS" : " FAIL") << '\n';
    ok = ok && r.passed;
  }
  return ok ? kOk : kNumerical;
}

// "key=value" lines become "--key=value" arguments right after the subcommand.
std::vector<std::string> expand_config(const std::vector<std::string>& args) {
  std::optional<std::string> path;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) path = args[i + 1];
    if (args[i].rfind("--config=", 0) == 0) path = args[i].substr(9);
  }
  if (!path || args.empty()) return args;
  std::ifstream in(*path);
  if (!in) throw DataError("cannot read config file " + *path);
  std::vector<std::string> flags;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#' || line[first] == ';') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw DataError(*path + ": expected key=value at line " + std::to_string(line_no));
    auto trim = [](std::string v) {
      const auto b = v.find_first_not_of(" \t\r");
      const auto e = v.find_last_not_of(" \t\r");
      v = b == std::string::npos ? "" : v.substr(b, e - b + 1);
      if (v.size() >= 2 && (v.front() == '"' || v.front() == '\'') && v.back() == v.front()) v = v.substr(1, v.size() - 2);
      return v;
    };
    const std::string key = trim(line.substr(0, eq));
    if (key == "config") continue;
    flags.push_back("--" + key + "=" + trim(line.substr(eq + 1)));
  }
  std::vector<std::string> out{args.front()};
  out.insert(out.end(), flags.begin(), flags.end());
  out.insert(out.end(), args.begin() + 1, args.end());
  return out;
}

void add_model_flags(CLI::App* cmd, ModelConfig& m) {
  cmd->add_option("--layers", m.layers, "Encoder layers")->capture_default_str();
  cmd->add_option("--heads", m.heads, "Attention heads")->capture_default_str();
  cmd->add_option("--d-model", m.d_model, "Hidden size")->capture_default_str();
  cmd->add_option("--d-ff", m.d_ff, "Feed-forward size")->capture_default_str();
  cmd->add_option("--max-len", m.max_len, "Input length in tokens")->capture_default_str();
  cmd->add_option("--dropout", m.dropout, "Dropout rate")->capture_default_str();
}

}  // namespace

std::vector<std::uint64_t> parse_seed_list(const std::string& text) {
  std::vector<std::uint64_t> seeds;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty() || item.find_first_not_of("0123456789") != std::string::npos) {
      throw ContractError("invalid seed list '" + text + "'");
    }
    seeds.push_back(std::stoull(item));
  }
  if (seeds.empty()) throw ContractError("seed list is empty");
  return seeds;
}

void RunConfig::resolve() {
  if (seeds.empty()) throw ContractError("seed list is empty");
  if (out_dir.empty()) throw ContractError("output directory not set");
  if (!fs::is_regular_file(train_path)) throw DataError("training data not found: " + train_path.string());
  train_path = fs::absolute(train_path);
  if (init_checkpoint) {
    if (!fs::is_regular_file(*init_checkpoint)) throw DataError("checkpoint not found: " + init_checkpoint->string());
    init_checkpoint = fs::absolute(*init_checkpoint);
  }
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Consistency fine-tuning for symmetric pair classification"};
  app.require_subcommand(1);
  // Values from a config file are placed before the command line, so the last one given wins.
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  std::string config_path;

  SynthArgs synth;
  auto* s = app.add_subcommand("synth", "Write synthetic train/val/test splits");
  s->add_option("--config", config_path, "Flat key=value file with flag values");
  s->add_option("--n", synth.n, "Number of examples")->capture_default_str();
  s->add_option("--seed", synth.seed, "Generator seed")->capture_default_str();
  s->add_option("--vocab", synth.vocab, "Number of content words")->capture_default_str();
  s->add_option("--max-words", synth.max_words, "Longest sentence in words")->capture_default_str();
  s->add_option("--task", synth.task, "symmetric, single or non_symmetric")
      ->check(CLI::IsMember(kTaskNames))
      ->capture_default_str();
  s->add_option("--val-frac", synth.val_frac, "Validation fraction")->capture_default_str();
  s->add_option("--test-frac", synth.test_frac, "Test fraction")->capture_default_str();
  s->add_option("--out", synth.out, "Output directory")->required();

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "Fine-tune one model per seed");
  t->add_option("--config", config_path, "Flat key=value file with flag values");
  t->add_option("--train", tr.train_path, "Training JSONL")->required();
  t->add_option("--val", tr.val_path, "Validation JSONL");
  t->add_option("--task", tr.task, "Task kind of the data")->check(CLI::IsMember(kTaskNames))->capture_default_str();
  t->add_option("--init", tr.init, "Checkpoint to transfer from");
  t->add_option("--out", tr.out, "Output directory")->required();
  t->add_option("--seeds", tr.seeds, "Comma-separated seeds")->capture_default_str();
  t->add_option("--objective", tr.objective, "baseline, consistency_kl or consistency_js")
      ->check(CLI::IsMember(kObjectiveNames))
      ->capture_default_str();
  t->add_option("--lambda-max", tr.lambda_max, "Final consistency weight")->capture_default_str();
  t->add_option("--epochs", tr.epochs, "Epochs")->capture_default_str();
  t->add_option("--batch", tr.batch, "Batch size")->capture_default_str();
  t->add_option("--lr", tr.lr, "Learning rate")->capture_default_str();
  t->add_option("--weight-decay", tr.weight_decay, "Decoupled weight decay")->capture_default_str();
  t->add_option("--head", tr.head, "clspara or cls")->check(CLI::IsMember(kHeadNames))->capture_default_str();
  t->add_option("--kl-direction", tr.kl_direction, "forward, reverse or symmetrized")->capture_default_str();
  add_model_flags(t, tr.model);

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "Dual-pass evaluation and report");
  e->add_option("--config", config_path, "Flat key=value file with flag values");
  e->add_option("--dataset", ev.dataset, "Test JSONL")->required();
  e->add_option("--task", ev.task, "Task kind of the data")->check(CLI::IsMember(kTaskNames))->capture_default_str();
  e->add_option("--checkpoints", ev.checkpoints, "Checkpoint files")
      ->required()
      ->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
  e->add_option("--vocab", ev.vocab, "Vocabulary file (default: next to each checkpoint)");
  e->add_option("--out", ev.out, "Output directory")->required();
  e->add_option("--name", ev.name, "Dataset name in the report (default: file stem)");
  e->add_option("--baseline", ev.baseline, "Model name compared against")->capture_default_str();
  e->add_option("--audit-k", ev.audit_k, "Disagreements to sample")->capture_default_str();
  e->add_option("--audit-seed", ev.audit_seed, "Sampling seed")->capture_default_str();

  GradcheckArgs gc;
  auto* g = app.add_subcommand("gradcheck", "Finite-difference check of the training loss");
  g->add_option("--config", config_path, "Flat key=value file with flag values");
  g->add_option("--divergence", gc.divergence, "kl, js or both")
      ->check(CLI::IsMember({"kl", "js", "both"}))
      ->capture_default_str();
  g->add_option("--lambda", gc.lambda, "Consistency weight")->capture_default_str();
  g->add_option("--step", gc.h, "Finite-difference step")->capture_default_str();
  g->add_option("--tol", gc.tol, "Relative error tolerance")->capture_default_str();
  g->add_option("--seed", gc.seed, "Model and data seed")->capture_default_str();
  g->add_flag("--corrupt", gc.corrupt, "Scale analytic gradients to force a failure");

  std::vector<std::string> expanded;
  try {
    expanded = expand_config(args);
  } catch (const DataError& ex) {
    err << "data error: " << ex.what() << '\n';
    return kData;
  }
  try {
    std::vector<std::string> reversed(expanded.rbegin(), expanded.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& ex) {
    const int code = app.exit(ex, out, err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (s->parsed()) return cmd_synth(synth, *s, out);
    if (t->parsed()) return cmd_train(tr, *t, out);
    if (e->parsed()) return cmd_eval(ev, *e, out);
    return cmd_gradcheck(gc, out);
  } catch (const ContractError& ex) {
    err << "error: " << ex.what() << '\n';
    return kUsage;
  } catch (const NumericalError& ex) {
    err << "numerical error: " << ex.what() << '\n';
    return kNumerical;
  } catch (const DataError& ex) {
    err << "data error: " << ex.what() << '\n';
    return kData;
  } catch (const std::exception& ex) {
    err << "error: " << ex.what() << '\n';
    return kData;
  }
}

}  // namespace symcons::cli
