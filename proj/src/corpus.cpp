#include "symcons/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <unordered_set>

#include <json.hpp>

#include "symcons/errors.hpp"
#include "symcons/rng.hpp"

namespace symcons {

std::string_view to_string(TaskKind kind) {
  switch (kind) {
    case TaskKind::symmetric:
      return "symmetric";
    case TaskKind::single:
      return "single";
    case TaskKind::non_symmetric:
      return "non_symmetric";
  }
  return "unknown";
}

TaskKind parse_task_kind(std::string_view name) {
  if (name == "symmetric") return TaskKind::symmetric;
  if (name == "single") return TaskKind::single;
  if (name == "non_symmetric") return TaskKind::non_symmetric;
  throw ContractError("unknown task kind '" + std::string(name) + "'");
}

std::vector<std::string> split_words(std::string_view text) {
  std::vector<std::string> words;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    std::size_t j = i;
    while (j < text.size() && !std::isspace(static_cast<unsigned char>(text[j]))) ++j;
    if (j > i) words.emplace_back(text.substr(i, j - i));
    i = j;
  }
  return words;
}

std::vector<SentencePair> load_jsonl(const std::filesystem::path& path, TaskKind kind) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open dataset file " + path.string());

  std::vector<SentencePair> out;
  std::unordered_set<std::string> seen;
  const std::string stem = path.filename().string();
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = " at line " + std::to_string(line_no);

    nlohmann::json rec;
    try {
      rec = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw DataError("malformed record" + where + ": " + e.what());
    }
    if (!rec.is_object() || !rec.contains("text_a") || !rec["text_a"].is_string() ||
        !rec.contains("label")) {
      throw DataError("malformed record" + where + ": need string text_a and label");
    }
    const auto& lab = rec["label"];
    if (!lab.is_number_integer()) throw DataError("invalid label" + where);
    const auto label = lab.get<std::int64_t>();
    if (label != 0 && label != 1) throw DataError("invalid label" + where);

    SentencePair ex;
    ex.text_a = rec["text_a"].get<std::string>();
    ex.label = static_cast<int>(label);
    ex.task_kind = kind;

    const bool has_b = rec.contains("text_b") && !rec["text_b"].is_null();
    if (has_b && !rec["text_b"].is_string()) {
      throw DataError("malformed record" + where + ": text_b must be a string or null");
    }
    if (kind == TaskKind::single) {
      if (has_b) throw DataError("unexpected text_b for single-input task" + where);
    } else {
      if (!has_b) throw DataError("missing text_b for pair task" + where);
      ex.text_b = rec["text_b"].get<std::string>();
    }

    if (rec.contains("example_id") && rec["example_id"].is_string()) {
      ex.example_id = rec["example_id"].get<std::string>();
    } else {
      ex.example_id = stem + ":" + std::to_string(line_no);
    }
    if (!seen.insert(ex.example_id).second) {
      throw DataError("duplicate example_id '" + ex.example_id + "'" + where);
    }
    out.push_back(std::move(ex));
  }
  return out;
}

void save_jsonl(const std::filesystem::path& path, std::span<const SentencePair> examples) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write dataset file " + path.string());
  for (const auto& ex : examples) {
    nlohmann::ordered_json rec;
    rec["text_a"] = ex.text_a;
    if (ex.text_b) {
      rec["text_b"] = *ex.text_b;
    } else {
      rec["text_b"] = nullptr;
    }
    rec["label"] = ex.label;
    rec["example_id"] = ex.example_id;
    out << rec.dump() << '\n';
  }
  if (!out) throw DataError("failed writing dataset file " + path.string());
}

std::vector<SentencePair> reverse_augment(std::span<const SentencePair> examples) {
  std::vector<SentencePair> out(examples.begin(), examples.end());
  out.reserve(2 * examples.size());
  for (const auto& ex : examples) {
    if (ex.task_kind != TaskKind::symmetric || !ex.text_b) {
      throw ContractError("reverse_augment requires symmetric examples; got '" + ex.example_id +
                          "' of kind " + std::string(to_string(ex.task_kind)));
    }
    SentencePair rev = ex;
    std::swap(rev.text_a, *rev.text_b);
    rev.example_id += ":rev";
    out.push_back(std::move(rev));
  }
  return out;
}

DatasetSplit split_dataset(std::span<const SentencePair> examples, SplitFractions fractions,
                           std::uint64_t seed, std::string name) {
  if (fractions.train <= 0 || fractions.validation <= 0 || fractions.test <= 0) {
    throw ContractError("split fractions must be positive");
  }
  if (std::abs(fractions.train + fractions.validation + fractions.test - 1.0) > 1e-9) {
    throw ContractError("split fractions must sum to 1");
  }
  if (examples.size() < 3) throw ContractError("need at least 3 examples to split");

  const TaskKind kind = examples.front().task_kind;
  for (const auto& ex : examples) {
    if (ex.task_kind != kind) throw ContractError("mixed task kinds in one split");
  }

  std::vector<std::size_t> order(examples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(seed);
  rng.shuffle(std::span(order));

  const auto n = static_cast<double>(examples.size());
  // The 1e-9 slack absorbs representation error such as 0.29 * 100 = 28.999...
  const auto n_val = static_cast<std::size_t>(std::floor(n * fractions.validation + 1e-9));
  const auto n_test = static_cast<std::size_t>(std::floor(n * fractions.test + 1e-9));
  const std::size_t n_train = examples.size() - n_val - n_test;

  DatasetSplit split;
  split.name = std::move(name);
  split.task_kind = kind;
  for (std::size_t i = 0; i < order.size(); ++i) {
    const auto& ex = examples[order[i]];
    if (i < n_train) {
      split.train.push_back(ex);
    } else if (i < n_train + n_val) {
      split.validation.push_back(ex);
    } else {
      split.test.push_back(ex);
    }
  }
  return split;
}

// ---------------------------------------------------------------------------
// Synthetic tasks

std::size_t synonym_class_size(std::size_t vocab_size) { return vocab_size >= 16 ? 4 : 2; }

namespace {

std::size_t num_classes(std::size_t vocab_size) {
  return vocab_size / synonym_class_size(vocab_size);
}

std::size_t word_index(std::string_view word) {
  if (word.size() < 2 || word[0] != 'w') {
    throw DataError("not a synthetic word: '" + std::string(word) + "'");
  }
  std::size_t k = 0;
  for (char c : word.substr(1)) {
    if (c < '0' || c > '9') throw DataError("not a synthetic word: '" + std::string(word) + "'");
    k = k * 10 + static_cast<std::size_t>(c - '0');
  }
  return k;
}

std::map<std::size_t, int> class_counts(std::string_view text, std::size_t vocab_size) {
  std::map<std::size_t, int> counts;
  for (const auto& w : split_words(text)) ++counts[synonym_class(w, vocab_size)];
  return counts;
}

void check_synth_args(std::size_t n, std::size_t vocab_size, std::size_t max_len) {
  if (n < 1) throw ContractError("synthetic dataset size must be >= 1");
  if (vocab_size < 8) throw ContractError("synthetic vocab_size must be >= 8");
  if (max_len < 4) throw ContractError("synthetic max_len must be >= 4");
}

class WordSampler {
 public:
  WordSampler(std::size_t vocab_size, Rng& rng)
      : class_size_(synonym_class_size(vocab_size)), classes_(num_classes(vocab_size)), rng_(rng) {}

  std::size_t random_class() { return rng_.below(classes_); }

  std::size_t other_class(std::size_t c) {
    std::size_t d = rng_.below(classes_ - 1);
    return d >= c ? d + 1 : d;
  }

  std::string word_of(std::size_t cls) {
    return "w" + std::to_string(cls * class_size_ + rng_.below(class_size_));
  }

  std::string render(const std::vector<std::size_t>& classes) {
    std::string out;
    for (std::size_t c : classes) {
      if (!out.empty()) out += ' ';
      out += word_of(c);
    }
    return out;
  }

  std::size_t length(std::size_t max_len) {
    const std::size_t lo = (max_len + 1) / 2;
    return lo + rng_.below(max_len - lo + 1);
  }

  std::size_t classes() const { return classes_; }

 private:
  std::size_t class_size_;
  std::size_t classes_;
  Rng& rng_;
};

}  // namespace

std::size_t synonym_class(std::string_view word, std::size_t vocab_size) {
  const std::size_t k = word_index(word);
  if (k >= vocab_size) throw DataError("word '" + std::string(word) + "' outside synthetic vocab");
  return k / synonym_class_size(vocab_size);
}

int symmetric_label(std::string_view a, std::string_view b, std::size_t vocab_size) {
  return class_counts(a, vocab_size) == class_counts(b, vocab_size) ? 1 : 0;
}

std::vector<SentencePair> synth_symmetric(std::size_t n, std::size_t vocab_size, std::size_t max_len,
                                          std::uint64_t seed) {
  check_synth_args(n, vocab_size, max_len);
  Rng rng(seed);
  WordSampler words(vocab_size, rng);

  std::vector<SentencePair> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const int label = i % 2 == 0 ? 1 : 0;
    const std::size_t len = words.length(max_len);
    std::vector<std::size_t> x(len);
    for (auto& c : x) c = words.random_class();

    std::string text_a;
    std::string text_b;
    for (;;) {
      std::vector<std::size_t> y = x;
      if (label == 1) {
        const std::size_t swaps = rng.below(3);
        for (std::size_t s = 0; s < swaps; ++s) {
          const std::size_t p = rng.below(len - 1);
          std::swap(y[p], y[p + 1]);
        }
      } else {
        for (auto& c : y) c = words.random_class();
      }
      text_a = words.render(x);
      text_b = words.render(y);
      if (symmetric_label(text_a, text_b, vocab_size) == label) break;
    }

    SentencePair ex;
    ex.text_a = std::move(text_a);
    ex.text_b = std::move(text_b);
    ex.label = label;
    ex.task_kind = TaskKind::symmetric;
    ex.example_id = "sym-" + std::to_string(i);
    out.push_back(std::move(ex));
  }
  return out;
}

int single_label(std::string_view a, std::size_t vocab_size) {
  const std::size_t half = num_classes(vocab_size) / 2;
  int low = 0;
  int high = 0;
  for (const auto& w : split_words(a)) {
    if (synonym_class(w, vocab_size) < half) {
      ++low;
    } else {
      ++high;
    }
  }
  return low > high ? 1 : 0;
}

std::vector<SentencePair> synth_single(std::size_t n, std::size_t vocab_size, std::size_t max_len,
                                       std::uint64_t seed) {
  check_synth_args(n, vocab_size, max_len);
  Rng rng(seed);
  WordSampler words(vocab_size, rng);

  std::vector<SentencePair> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const int label = i % 2 == 0 ? 1 : 0;
    std::string text;
    do {
      std::size_t len = words.length(max_len);
      if (len % 2 == 0) --len;  // odd lengths rule out ties
      std::vector<std::size_t> x(len);
      for (auto& c : x) c = words.random_class();
      text = words.render(x);
    } while (single_label(text, vocab_size) != label);

    SentencePair ex;
    ex.text_a = std::move(text);
    ex.label = label;
    ex.task_kind = TaskKind::single;
    ex.example_id = "single-" + std::to_string(i);
    out.push_back(std::move(ex));
  }
  return out;
}

int containment_label(std::string_view a, std::string_view b, std::size_t vocab_size) {
  const auto ca = class_counts(a, vocab_size);
  for (const auto& [cls, count] : class_counts(b, vocab_size)) {
    auto it = ca.find(cls);
    if (it == ca.end() || it->second < count) return 0;
  }
  return 1;
}

std::vector<SentencePair> synth_order_sensitive(std::size_t n, std::size_t vocab_size,
                                                std::size_t max_len, std::uint64_t seed) {
  check_synth_args(n, vocab_size, max_len);
  Rng rng(seed);
  WordSampler words(vocab_size, rng);

  std::vector<SentencePair> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const int label = i % 2 == 0 ? 1 : 0;
    std::string text_a;
    std::string text_b;
    for (;;) {
      const std::size_t len = std::max<std::size_t>(3, words.length(max_len));
      std::vector<std::size_t> x(len);
      for (auto& c : x) c = words.random_class();
      std::vector<std::size_t> y = x;
      rng.shuffle(std::span(y));
      y.resize(1 + rng.below(len - 1));
      if (label == 0) {
        const std::size_t p = rng.below(y.size());
        y[p] = words.other_class(y[p]);
      }
      text_a = words.render(x);
      text_b = words.render(y);
      if (containment_label(text_a, text_b, vocab_size) == label) break;
    }

    SentencePair ex;
    ex.text_a = std::move(text_a);
    ex.text_b = std::move(text_b);
    ex.label = label;
    ex.task_kind = TaskKind::non_symmetric;
    ex.example_id = "ord-" + std::to_string(i);
    out.push_back(std::move(ex));
  }
  return out;
}

}  // namespace symcons
