#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "entlm/dialogue.hpp"

namespace entlm {

using TokenId = std::int32_t;

// UTF-8 <-> code points. Malformed input throws DataError.
std::u32string utf8_decode(std::string_view text);
std::string utf8_encode(std::u32string_view text);
std::string utf8_encode(char32_t c);

// Character-level vocabulary. Specials occupy ids [0, kNumSpecials); every
// other id maps to exactly one code point.
class Vocab {
 public:
  static constexpr TokenId kPad = 0;
  static constexpr TokenId kBos = 1;
  static constexpr TokenId kEos = 2;
  static constexpr TokenId kPatient = 3;
  static constexpr TokenId kDoctor = 4;
  static constexpr TokenId kUnk = 5;
  static constexpr TokenId kNumSpecials = 6;

  // Specials, then `chars` in the given order. Duplicates throw VocabError.
  explicit Vocab(std::u32string chars = {});

  TokenId size() const { return static_cast<TokenId>(kNumSpecials + chars_.size()); }
  TokenId id_of(char32_t c) const;  // kUnk when absent
  bool contains(char32_t c) const { return ids_.contains(c); }
  bool is_special(TokenId id) const { return id >= 0 && id < kNumSpecials; }

  // Literal tag for specials (e.g. "<PAD>"), the UTF-8 character otherwise.
  // Throws VocabError for ids outside [0, size()).
  std::string symbol(TokenId id) const;

  const std::u32string& characters() const { return chars_; }

  void save(const std::filesystem::path& path) const;
  static Vocab load(const std::filesystem::path& path);

  bool operator==(const Vocab& other) const { return chars_ == other.chars_; }

 private:
  std::u32string chars_;
  std::unordered_map<char32_t, TokenId> ids_;
};

// Specials, then characters by first occurrence over turns in corpus order.
Vocab build_vocab(std::span<const Dialogue> corpus);

std::vector<TokenId> encode(std::string_view text, const Vocab& vocab);
std::string decode(std::span<const TokenId> ids, const Vocab& vocab);

}  // namespace entlm
