#include <doctest.h>

#include <algorithm>

#include "symcons/errors.hpp"
#include "symcons/tokenizer.hpp"
#include "test_util.hpp"

using namespace symcons;

namespace {

SentencePair single(std::string text) { return {std::move(text), std::nullopt, 0, TaskKind::single, ""}; }

Vocabulary xy_vocab() {
  const std::vector<SentencePair> corpus = {{"x y z", "x", 0, TaskKind::symmetric, "1"}};
  return build_vocab(corpus, 1);
}

std::vector<TokenId> ids(const Vocabulary& v, std::initializer_list<const char*> toks) {
  std::vector<TokenId> out;
  for (const char* t : toks) out.push_back(v.id_of(t));
  return out;
}

}  // namespace

TEST_CASE("specials occupy ids 0 to 4") {
  const Vocabulary v;
  REQUIRE(v.size() == kNumSpecialTokens);
  CHECK(v.token_of(kPadId) == "[PAD]");
  CHECK(v.token_of(kUnkId) == "[UNK]");
  CHECK(v.token_of(kClsId) == "[CLS]");
  CHECK(v.token_of(kClsParaId) == "[CLSPara]");
  CHECK(v.token_of(kSepId) == "[SEP]");
  CHECK(v.id_of("never-seen") == kUnkId);
}

TEST_CASE("build_vocab orders by count then spelling") {
  const std::vector<SentencePair> corpus = {single("a b"), single("a")};
  const auto v = build_vocab(corpus, 1);
  REQUIRE(v.size() == 7);
  CHECK(v.id_of("a") == 5);
  CHECK(v.id_of("b") == 6);
  CHECK(build_vocab(corpus, 3).size() == kNumSpecialTokens);
  CHECK(build_vocab(corpus, 1) == v);

  const std::vector<SentencePair> ties = {{"c a", "b c", 0, TaskKind::symmetric, "1"}};
  const auto t = build_vocab(ties, 1);
  CHECK(t.id_of("c") == 5);
  CHECK(t.id_of("a") == 6);
  CHECK(t.id_of("b") == 7);
  CHECK_THROWS_AS(build_vocab(std::vector<SentencePair>{}, 1), ContractError);
}

TEST_CASE("vocabulary file round-trips and rejects corruption") {
  const auto dir = test_util::scratch_dir("vocab");
  const auto v = build_vocab(synth_symmetric(40, 32, 5, 2), 1);
  v.save(dir / "v.tsv");
  CHECK(Vocabulary::load(dir / "v.tsv") == v);
  CHECK(test_util::read_file(dir / "v.tsv").rfind("[PAD]\t0\n[UNK]\t1\n", 0) == 0);

  test_util::write_file(dir / "gap.tsv", "[PAD]\t0\n[UNK]\t1\n[CLS]\t2\n[CLSPara]\t3\n[SEP]\t4\nw1\t6\n");
  CHECK_THROWS_AS(Vocabulary::load(dir / "gap.tsv"), DataError);
  test_util::write_file(dir / "short.tsv", "[PAD]\t0\n[UNK]\t1\n");
  CHECK_THROWS_AS(Vocabulary::load(dir / "short.tsv"), DataError);
}

TEST_CASE("encode_pair layout with [CLSPara]") {
  const auto v = xy_vocab();
  const auto e = encode_pair(v, "x", "y", true, 8);
  std::vector<TokenId> expected = {kClsId, kClsParaId, v.id_of("x"), kSepId, v.id_of("y"), kSepId, kPadId, kPadId};
  CHECK(e.token_ids == expected);
  CHECK(e.attention_mask == std::vector<int>{1, 1, 1, 1, 1, 1, 0, 0});
  CHECK(std::vector<int>(e.segment_ids.begin(), e.segment_ids.begin() + 6) == std::vector<int>{0, 0, 0, 0, 1, 1});
  CHECK(e.has_clspara);

  const auto plain = encode_pair(v, "x", "y", false, 8);
  CHECK(plain.token_ids == std::vector<TokenId>{kClsId, v.id_of("x"), kSepId, v.id_of("y"), kSepId, kPadId, kPadId,
                                                kPadId});
  CHECK_FALSE(plain.has_clspara);
}

TEST_CASE("encode_pair maps unknown words and rejects tiny max_len") {
  const auto v = xy_vocab();
  const auto e = encode_pair(v, "x mystery", "y", true, 10);
  CHECK(e.token_ids[3] == kUnkId);
  CHECK_THROWS_AS(encode_pair(v, "x", "y", true, 5), ContractError);
  CHECK_NOTHROW(encode_pair(v, "x", "y", true, 6));
  CHECK_THROWS_AS(encode_pair(v, "x", "y", false, 4), ContractError);
}

TEST_CASE("encode_pair truncates b first and keeps both separators") {
  const auto v = xy_vocab();
  const auto e = encode_pair(v, "x x x", "y y y y", true, 9);
  CHECK(e.token_ids == ids(v, {"[CLS]", "[CLSPara]", "x", "x", "x", "[SEP]", "y", "y", "[SEP]"}));
  const auto f = encode_pair(v, "x x x x x", "y y", true, 7);
  CHECK(f.token_ids == ids(v, {"[CLS]", "[CLSPara]", "x", "x", "[SEP]", "y", "[SEP]"}));
}

TEST_CASE("both orders carry the same content and decode back in order") {
  const auto data = synth_symmetric(200, 64, 6, 8);
  Vocabulary v = build_vocab(std::span(data).first(100), 1);  // leaves some words unknown
  for (const auto& ex : data) {
    const auto l2r = encode_pair(v, ex.text_a, *ex.text_b, true, 16);
    const auto r2l = encode_pair(v, *ex.text_b, ex.text_a, true, 16);
    CHECK(l2r.length() == 16);
    CHECK(r2l.length() == 16);
    auto content = [](const EncodedInput& e) {
      std::vector<TokenId> c;
      for (TokenId t : e.token_ids) {
        if (t >= kNumSpecialTokens || t == kUnkId) c.push_back(t);
      }
      return c;
    };
    auto a = content(l2r), b = content(r2l);
    std::vector<TokenId> expected;
    for (const auto& w : split_words(ex.text_a)) expected.push_back(v.id_of(w));
    for (const auto& w : split_words(*ex.text_b)) expected.push_back(v.id_of(w));
    CHECK(a == expected);
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    CHECK(a == b);
    // Padding only at the tail.
    const auto first_pad = std::find(l2r.attention_mask.begin(), l2r.attention_mask.end(), 0);
    CHECK(std::all_of(first_pad, l2r.attention_mask.end(), [](int m) { return m == 0; }));
  }
}

TEST_CASE("encode_single layout, degenerate and truncated inputs") {
  const auto v = xy_vocab();
  const auto e = encode_single(v, "x y", 5);
  CHECK(e.token_ids == ids(v, {"[CLS]", "x", "y", "[SEP]", "[PAD]"}));
  CHECK(e.segment_ids == std::vector<int>(5, 0));
  CHECK(e.attention_mask == std::vector<int>{1, 1, 1, 1, 0});

  const auto empty = encode_single(v, "", 4);
  CHECK(empty.token_ids == ids(v, {"[CLS]", "[SEP]", "[PAD]", "[PAD]"}));

  const auto t = encode_single(v, "x y z x y z x y z x", 6);
  CHECK(t.token_ids == ids(v, {"[CLS]", "x", "y", "z", "x", "[SEP]"}));
  CHECK_THROWS_AS(encode_single(v, "x", 2), ContractError);
}

TEST_CASE("encode_example picks the layout from the task kind") {
  const auto v = xy_vocab();
  const SentencePair p{"x", "y", 1, TaskKind::symmetric, "p"};
  CHECK(encode_example(v, p, 8) == encode_pair(v, "x", "y", true, 8));
  CHECK(encode_example(v, p, 8, true) == encode_pair(v, "y", "x", true, 8));
  const SentencePair s = single("x y");
  CHECK(encode_example(v, s, 6) == encode_single(v, "x y", 6));
  CHECK_THROWS_AS(encode_example(v, s, 6, true), ContractError);
}
