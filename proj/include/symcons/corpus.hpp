#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace symcons {

enum class TaskKind { symmetric, single, non_symmetric };

std::string_view to_string(TaskKind kind);
TaskKind parse_task_kind(std::string_view name);

/// One labeled example. text_b is absent exactly for single-input tasks.
struct SentencePair {
  std::string text_a;
  std::optional<std::string> text_b;
  int label = 0;
  TaskKind task_kind = TaskKind::symmetric;
  std::string example_id;

  bool operator==(const SentencePair&) const = default;
};

struct DatasetSplit {
  std::vector<SentencePair> train;
  std::vector<SentencePair> validation;
  std::vector<SentencePair> test;
  std::string name;
  TaskKind task_kind = TaskKind::symmetric;
};

struct SplitFractions {
  double train = 0.8;
  double validation = 0.1;
  double test = 0.1;
};

/// Reads one record per line ({"text_a", "text_b", "label"} plus an optional
/// "example_id"). Blank lines are skipped. Missing ids become "<file>:<line>".
std::vector<SentencePair> load_jsonl(const std::filesystem::path& path, TaskKind kind);

/// Writes records in the same format load_jsonl reads, including example_id.
void save_jsonl(const std::filesystem::path& path, std::span<const SentencePair> examples);

/// Original list followed by each example with text_a/text_b swapped and ":rev"
/// appended to its id. Only symmetric examples are accepted.
std::vector<SentencePair> reverse_augment(std::span<const SentencePair> examples);

/// Seeded shuffle, then validation/test sizes floor(n * fraction); the
/// remainder goes to train.
DatasetSplit split_dataset(std::span<const SentencePair> examples, SplitFractions fractions,
                           std::uint64_t seed, std::string name = "dataset");

// Synthetic tasks. Words are rendered "w<k>" for k in [0, vocab_size); word k
// belongs to synonym class k / synonym_class_size(vocab_size).

std::size_t synonym_class_size(std::size_t vocab_size);
std::size_t synonym_class(std::string_view word, std::size_t vocab_size);

/// Label rule of the symmetric task: 1 iff both texts carry the same multiset
/// of synonym classes.
int symmetric_label(std::string_view a, std::string_view b, std::size_t vocab_size);

/// Paraphrase-style pairs: positives are synonym substitutions plus a bounded
/// number of adjacent swaps; negatives pair a sentence with an unrelated one of
/// the same length whose class multiset differs.
std::vector<SentencePair> synth_symmetric(std::size_t n, std::size_t vocab_size, std::size_t max_len,
                                          std::uint64_t seed);

/// Label rule of the single-input task: 1 iff tokens from the lower half of the
/// classes outnumber tokens from the upper half.
int single_label(std::string_view a, std::size_t vocab_size);

std::vector<SentencePair> synth_single(std::size_t n, std::size_t vocab_size, std::size_t max_len,
                                       std::uint64_t seed);

/// Label rule of the order-sensitive pair task: 1 iff the class multiset of b
/// is contained in that of a.
int containment_label(std::string_view a, std::string_view b, std::size_t vocab_size);

std::vector<SentencePair> synth_order_sensitive(std::size_t n, std::size_t vocab_size,
                                                std::size_t max_len, std::uint64_t seed);

/// Whitespace tokenization shared by the corpus and tokenizer modules.
std::vector<std::string> split_words(std::string_view text);

}  // namespace symcons
