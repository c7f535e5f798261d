#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "entlm/sequence.hpp"
#include "entlm/tokenizer.hpp"

namespace entlm {

enum class LexTag : std::int32_t { kNoun = 0, kAdj = 1, kVerb = 2, kOther = 3 };

inline constexpr std::int32_t kLexicalTableSize = 4;
inline constexpr std::int32_t kEntityTableSize = 2;

// Maps a turn's text to one tag per character.
class Tagger {
 public:
  using Fn = std::function<std::vector<LexTag>(std::u32string_view)>;

  Tagger(std::string name, Fn fn) : name_(std::move(name)), fn_(std::move(fn)) {}

  const std::string& name() const { return name_; }

  // Throws DataError if the wrapped function breaks the one-tag-per-character
  // contract.
  std::vector<LexTag> operator()(std::u32string_view text) const;

 private:
  std::string name_;
  Fn fn_;
};

struct TagLexicons {
  std::vector<std::string> nouns;
  std::vector<std::string> adjectives;
  std::vector<std::string> verbs;
};

// Tags every character OTHER.
Tagger null_tagger();

// Longest-match-first scan over the three lexicons. A term listed in two
// lexicons throws ConfigError.
Tagger dictionary_tagger(const TagLexicons& lexicons);

// "none" or "dictionary"; anything else throws ConfigError.
Tagger make_tagger(std::string_view name, const TagLexicons& lexicons);

// Half-open token range [begin, end).
struct TokenSpan {
  std::size_t begin = 0;
  std::size_t end = 0;
};

// 1 on every token covered by some span, 0 elsewhere. Spans reaching past
// seq_len (or empty spans) throw DataError.
std::vector<std::int32_t> entity_flags(std::size_t seq_len, std::span<const TokenSpan> spans);

// Discrete entity-splicing baseline. Inserts a separator (the EOS token) and
// the concatenated entity mentions after the input portion of `seq`, i.e.
// before the final doctor marker, or at the end when there is none. Appended
// tokens carry tag OTHER, flag 0 and no loss. The result keeps its last
// `max_len` tokens.
TokenSequence splice_entities(const TokenSequence& seq, std::span<const std::string> entity_texts,
                              const Vocab& vocab, std::size_t max_len);

}  // namespace entlm
