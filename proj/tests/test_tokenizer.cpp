#include <filesystem>
#include <random>

#include "doctest.h"
#include "entlm/errors.hpp"
#include "entlm/tokenizer.hpp"

using namespace entlm;

namespace {

Dialogue one_turn_pair(std::string patient, std::string doctor) {
  Dialogue d{"d", {{Speaker::kPatient, std::move(patient), {}}, {Speaker::kDoctor, std::move(doctor), {}}}};
  return d;
}

}  // namespace

TEST_CASE("build_vocab assigns specials first, then characters by first occurrence") {
  const std::vector<Dialogue> corpus{one_turn_pair("ab", "a")};
  const auto vocab = build_vocab(corpus);
  CHECK(vocab.size() == 8);
  CHECK(vocab.id_of(U'a') == 6);
  CHECK(vocab.id_of(U'b') == 7);
  CHECK(encode("ab", vocab) == std::vector<TokenId>{6, 7});
  CHECK(encode("", vocab).empty());
  CHECK(encode("z", vocab) == std::vector<TokenId>{Vocab::kUnk});
  CHECK(vocab.symbol(Vocab::kPad) == "<PAD>");
  CHECK(vocab.symbol(Vocab::kDoctor) == "<DOC>");
}

TEST_CASE("build_vocab set semantics and idempotence") {
  const std::vector<Dialogue> a{one_turn_pair("xyz", "z")};
  const std::vector<Dialogue> b{one_turn_pair("zyx", "x")};
  CHECK(build_vocab(a).size() == build_vocab(b).size());
  CHECK(build_vocab(a) == build_vocab(a));
  CHECK_THROWS_AS(build_vocab(std::vector<Dialogue>{}), DataError);
}

TEST_CASE("decode errors and empty input") {
  const auto vocab = build_vocab(std::vector<Dialogue>{one_turn_pair("ab", "b")});
  CHECK(decode(std::vector<TokenId>{}, vocab).empty());
  CHECK_THROWS_AS(decode(std::vector<TokenId>{vocab.size()}, vocab), VocabError);
  CHECK_THROWS_AS(decode(std::vector<TokenId>{-1}, vocab), VocabError);
}

TEST_CASE("encode/decode round trip on random in-vocab strings") {
  const std::u32string alphabet = U"头痛发热咳嗽abcXYZ 123，。？";
  const Vocab vocab(alphabet);
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<std::size_t> len(0, 40), pick(0, alphabet.size() - 1);
  for (int i = 0; i < 1000; ++i) {
    std::u32string s;
    for (std::size_t n = len(rng); n > 0; --n) s.push_back(alphabet[pick(rng)]);
    const auto text = utf8_encode(s);
    REQUIRE(decode(encode(text, vocab), vocab) == text);
  }
}

TEST_CASE("special ids never collide with characters") {
  const Vocab vocab(U"<PAD>");
  for (TokenId id = Vocab::kNumSpecials; id < vocab.size(); ++id) CHECK_FALSE(vocab.is_special(id));
  for (char32_t c : vocab.characters()) CHECK(vocab.id_of(c) >= Vocab::kNumSpecials);
  CHECK_THROWS_AS(Vocab(U"aa"), VocabError);
}

TEST_CASE("vocab file round trip") {
  const auto path = std::filesystem::temp_directory_path() / "entlm_vocab_test.txt";
  const Vocab vocab(U"头痛<>a");
  vocab.save(path);
  CHECK(Vocab::load(path) == vocab);
  std::filesystem::remove(path);
}

TEST_CASE("utf8 decoding rejects malformed input") {
  CHECK(utf8_decode("a头") == U"a头");
  CHECK_THROWS_AS(utf8_decode(std::string("\xE5\xA4", 2)), DataError);
  CHECK_THROWS_AS(utf8_decode(std::string("\xFF", 1)), DataError);
}
