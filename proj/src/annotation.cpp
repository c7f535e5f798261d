#include "entlm/annotation.hpp"

#include <algorithm>
#include <map>

#include "entlm/errors.hpp"

namespace entlm {

namespace {

template <class T>
std::vector<T> with_inserted(const std::vector<T>& src, std::size_t at, const std::vector<T>& mid) {
  std::vector<T> out(src.begin(), src.begin() + static_cast<std::ptrdiff_t>(at));
  out.insert(out.end(), mid.begin(), mid.end());
  out.insert(out.end(), src.begin() + static_cast<std::ptrdiff_t>(at), src.end());
  return out;
}

}  // namespace

std::vector<LexTag> Tagger::operator()(std::u32string_view text) const {
  auto tags = fn_(text);
  if (tags.size() != text.size()) {
    throw DataError("tagger '" + name_ + "' returned " + std::to_string(tags.size()) + " tags for " +
                    std::to_string(text.size()) + " characters");
  }
  return tags;
}

Tagger null_tagger() {
  return Tagger("none", [](std::u32string_view text) { return std::vector<LexTag>(text.size(), LexTag::kOther); });
}

Tagger dictionary_tagger(const TagLexicons& lexicons) {
  std::map<std::u32string, LexTag> terms;
  std::size_t longest = 0;
  auto add = [&](const std::vector<std::string>& list, LexTag tag) {
    for (const auto& term : list) {
      auto cps = utf8_decode(term);
      if (cps.empty()) continue;
      const auto [it, inserted] = terms.emplace(cps, tag);
      if (!inserted && it->second != tag) {
        throw ConfigError("lexicon term '" + term + "' appears in two lexical classes");
      }
      longest = std::max(longest, cps.size());
    }
  };
  add(lexicons.nouns, LexTag::kNoun);
  add(lexicons.adjectives, LexTag::kAdj);
  add(lexicons.verbs, LexTag::kVerb);

  return Tagger("dictionary", [terms = std::move(terms), longest](std::u32string_view text) {
    std::vector<LexTag> tags(text.size(), LexTag::kOther);
    std::size_t i = 0;
    while (i < text.size()) {
      std::size_t matched = 0;
      for (std::size_t len = std::min(longest, text.size() - i); len > 0; --len) {
        const auto it = terms.find(std::u32string(text.substr(i, len)));
        if (it != terms.end()) {
          std::fill_n(tags.begin() + static_cast<std::ptrdiff_t>(i), len, it->second);
          matched = len;
          break;
        }
      }
      i += matched ? matched : 1;
    }
    return tags;
  });
}

Tagger make_tagger(std::string_view name, const TagLexicons& lexicons) {
  if (name == "none") return null_tagger();
  if (name == "dictionary") return dictionary_tagger(lexicons);
  throw ConfigError("unknown tagger '" + std::string(name) + "' (expected none or dictionary)");
}

std::vector<std::int32_t> entity_flags(std::size_t seq_len, std::span<const TokenSpan> spans) {
  std::vector<std::int32_t> flags(seq_len, 0);
  for (const auto& s : spans) {
    if (s.begin >= s.end || s.end > seq_len) {
      throw DataError("entity span [" + std::to_string(s.begin) + ", " + std::to_string(s.end) +
                      ") is outside a sequence of length " + std::to_string(seq_len));
    }
    std::fill(flags.begin() + static_cast<std::ptrdiff_t>(s.begin), flags.begin() + static_cast<std::ptrdiff_t>(s.end),
              1);
  }
  return flags;
}

TokenSequence splice_entities(const TokenSequence& seq, std::span<const std::string> entity_texts,
                              const Vocab& vocab, std::size_t max_len) {
  if (!seq.consistent()) throw DataError("splice_entities: inconsistent token sequence");
  if (entity_texts.empty()) return seq;

  std::vector<TokenId> appended{Vocab::kEos};
  for (const auto& text : entity_texts) {
    const auto ids = encode(text, vocab);
    appended.insert(appended.end(), ids.begin(), ids.end());
  }

  const auto last_doctor = std::find(seq.ids.rbegin(), seq.ids.rend(), Vocab::kDoctor);
  const std::size_t at =
      last_doctor == seq.ids.rend() ? seq.size() : static_cast<std::size_t>(seq.ids.rend() - last_doctor) - 1;

  const std::size_t n = appended.size();
  TokenSequence out;
  out.ids = with_inserted(seq.ids, at, appended);
  out.lexical_tags = with_inserted(seq.lexical_tags, at, std::vector<std::int32_t>(n, static_cast<std::int32_t>(LexTag::kOther)));
  out.entity_flags = with_inserted(seq.entity_flags, at, std::vector<std::int32_t>(n, 0));
  out.loss_mask = with_inserted(seq.loss_mask, at, std::vector<std::uint8_t>(n, 0));
  out.position_ids.resize(out.size());
  keep_last(out, max_len);
  return out;
}

}  // namespace entlm
