#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "symcons/corpus.hpp"

namespace symcons {

using TokenId = std::size_t;

inline constexpr TokenId kPadId = 0;
inline constexpr TokenId kUnkId = 1;
inline constexpr TokenId kClsId = 2;
inline constexpr TokenId kClsParaId = 3;
inline constexpr TokenId kSepId = 4;
inline constexpr std::size_t kNumSpecialTokens = 5;

/// Word-level vocabulary. Ids are dense from 0; the specials [PAD], [UNK],
/// [CLS], [CLSPara], [SEP] always occupy ids 0..4 in that order.
class Vocabulary {
 public:
  Vocabulary();

  /// Appends a token if absent and returns its id.
  TokenId add(std::string_view token);

  TokenId id_of(std::string_view token) const;  // kUnkId when absent
  bool contains(std::string_view token) const;
  const std::string& token_of(TokenId id) const;
  std::size_t size() const { return id_to_token_.size(); }
  std::span<const std::string> tokens() const { return id_to_token_; }

  /// "token<TAB>id" per line, specials first.
  void save(const std::filesystem::path& path) const;
  static Vocabulary load(const std::filesystem::path& path);

  bool operator==(const Vocabulary& other) const { return id_to_token_ == other.id_to_token_; }

 private:
  std::unordered_map<std::string, TokenId> token_to_id_;
  std::vector<std::string> id_to_token_;
};

/// Tokens with count >= min_count, by descending count then lexicographically.
Vocabulary build_vocab(std::span<const SentencePair> corpus, std::size_t min_count);

struct EncodedInput {
  std::vector<TokenId> token_ids;
  std::vector<int> attention_mask;
  std::vector<int> segment_ids;
  bool has_clspara = false;

  std::size_t length() const { return token_ids.size(); }
  bool operator==(const EncodedInput&) const = default;
};

/// [CLS] [CLSPara]? a [SEP] b [SEP] [PAD]... of exactly max_len ids. Overlong
/// inputs lose tokens from the tail of b first, then from a; each nonempty text
/// keeps at least one token.
EncodedInput encode_pair(const Vocabulary& vocab, std::string_view a, std::string_view b,
                         bool use_clspara, std::size_t max_len);

/// [CLS] a [SEP] [PAD]... of exactly max_len ids.
EncodedInput encode_single(const Vocabulary& vocab, std::string_view a, std::size_t max_len);

/// Picks encode_single or encode_pair for an example. Pair inputs always carry
/// [CLSPara] so one layout serves both heads.
EncodedInput encode_example(const Vocabulary& vocab, const SentencePair& ex, std::size_t max_len,
                            bool swapped = false);

/// Position read by each classification head.
inline constexpr std::size_t kClsPosition = 0;
inline constexpr std::size_t kClsParaPosition = 1;

}  // namespace symcons
