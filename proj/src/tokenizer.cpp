#include "symcons/tokenizer.hpp"

#include <algorithm>
#include <fstream>
#include <map>

#include "symcons/errors.hpp"

namespace symcons {

Vocabulary::Vocabulary() {
  for (const char* s : {"[PAD]", "[UNK]", "[CLS]", "[CLSPara]", "[SEP]"}) add(s);
}

TokenId Vocabulary::add(std::string_view token) {
  auto [it, inserted] = token_to_id_.try_emplace(std::string(token), id_to_token_.size());
  if (inserted) id_to_token_.emplace_back(token);
  return it->second;
}

TokenId Vocabulary::id_of(std::string_view token) const {
  auto it = token_to_id_.find(std::string(token));
  return it == token_to_id_.end() ? kUnkId : it->second;
}

bool Vocabulary::contains(std::string_view token) const {
  return token_to_id_.contains(std::string(token));
}

const std::string& Vocabulary::token_of(TokenId id) const {
  if (id >= id_to_token_.size()) throw ContractError("token id out of range");
  return id_to_token_[id];
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write vocabulary " + path.string());
  for (std::size_t i = 0; i < id_to_token_.size(); ++i) out << id_to_token_[i] << '\t' << i << '\n';
  if (!out) throw DataError("failed writing vocabulary " + path.string());
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open vocabulary " + path.string());
  Vocabulary v;
  std::string line;
  std::size_t expected = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto tab = line.rfind('\t');
    if (tab == std::string::npos) throw DataError("malformed vocabulary line: " + line);
    const std::string token = line.substr(0, tab);
    const std::size_t id = std::stoul(line.substr(tab + 1));
    if (id != expected) throw DataError("vocabulary ids must be dense and ordered");
    if (id < kNumSpecialTokens) {
      if (v.token_of(id) != token) throw DataError("vocabulary specials out of place");
    } else if (v.add(token) != id) {
      throw DataError("duplicate vocabulary token: " + token);
    }
    ++expected;
  }
  if (expected < kNumSpecialTokens) throw DataError("vocabulary is missing special tokens");
  return v;
}

Vocabulary build_vocab(std::span<const SentencePair> corpus, std::size_t min_count) {
  if (corpus.empty()) throw ContractError("build_vocab needs a nonempty corpus");
  std::map<std::string, std::size_t> counts;
  for (const auto& ex : corpus) {
    for (auto& w : split_words(ex.text_a)) ++counts[w];
    if (ex.text_b) {
      for (auto& w : split_words(*ex.text_b)) ++counts[w];
    }
  }
  std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& x, const auto& y) { return x.second > y.second; });
  Vocabulary v;
  for (const auto& [word, count] : ranked) {
    if (count >= min_count && !v.contains(word)) v.add(word);
  }
  return v;
}

namespace {

std::vector<TokenId> to_ids(const Vocabulary& vocab, std::string_view text) {
  std::vector<TokenId> ids;
  for (const auto& w : split_words(text)) ids.push_back(vocab.id_of(w));
  return ids;
}

void pad_to(EncodedInput& enc, std::size_t max_len, int pad_segment) {
  enc.attention_mask.assign(enc.token_ids.size(), 1);
  while (enc.token_ids.size() < max_len) {
    enc.token_ids.push_back(kPadId);
    enc.attention_mask.push_back(0);
    enc.segment_ids.push_back(pad_segment);
  }
}

}  // namespace

EncodedInput encode_pair(const Vocabulary& vocab, std::string_view a, std::string_view b,
                         bool use_clspara, std::size_t max_len) {
  const std::size_t specials = use_clspara ? 4 : 3;
  if (max_len < specials + 2) {
    throw ContractError("max_len " + std::to_string(max_len) +
                        " cannot hold the special tokens plus one token of each text");
  }
  auto ia = to_ids(vocab, a);
  auto ib = to_ids(vocab, b);
  const std::size_t budget = max_len - specials;
  while (ia.size() + ib.size() > budget) {
    if (ib.size() > 1) {
      ib.pop_back();
    } else {
      ia.pop_back();
    }
  }

  EncodedInput enc;
  enc.has_clspara = use_clspara;
  enc.token_ids.push_back(kClsId);
  if (use_clspara) enc.token_ids.push_back(kClsParaId);
  enc.token_ids.insert(enc.token_ids.end(), ia.begin(), ia.end());
  enc.token_ids.push_back(kSepId);
  enc.segment_ids.assign(enc.token_ids.size(), 0);
  enc.token_ids.insert(enc.token_ids.end(), ib.begin(), ib.end());
  enc.token_ids.push_back(kSepId);
  enc.segment_ids.resize(enc.token_ids.size(), 1);
  pad_to(enc, max_len, 1);
  return enc;
}

EncodedInput encode_single(const Vocabulary& vocab, std::string_view a, std::size_t max_len) {
  if (max_len < 3) {
    throw ContractError("max_len " + std::to_string(max_len) +
                        " cannot hold the special tokens plus one token");
  }
  auto ia = to_ids(vocab, a);
  if (ia.size() > max_len - 2) ia.resize(max_len - 2);

  EncodedInput enc;
  enc.token_ids.push_back(kClsId);
  enc.token_ids.insert(enc.token_ids.end(), ia.begin(), ia.end());
  enc.token_ids.push_back(kSepId);
  enc.segment_ids.assign(enc.token_ids.size(), 0);
  pad_to(enc, max_len, 0);
  return enc;
}

EncodedInput encode_example(const Vocabulary& vocab, const SentencePair& ex, std::size_t max_len,
                            bool swapped) {
  if (!ex.text_b) {
    if (swapped) throw ContractError("cannot swap a single-input example");
    return encode_single(vocab, ex.text_a, max_len);
  }
  return swapped ? encode_pair(vocab, *ex.text_b, ex.text_a, true, max_len)
                 : encode_pair(vocab, ex.text_a, *ex.text_b, true, max_len);
}

}  // namespace symcons
