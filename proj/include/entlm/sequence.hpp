#pragma once

#include <cstdint>
#include <vector>

#include "entlm/tokenizer.hpp"

namespace entlm {

// One linearized dialogue. All five lists have equal length. loss_mask[t]
// marks token t as a prediction target (it is predicted from tokens < t).
struct TokenSequence {
  std::vector<TokenId> ids;
  std::vector<std::int32_t> lexical_tags;
  std::vector<std::int32_t> entity_flags;
  std::vector<std::uint8_t> loss_mask;
  std::vector<std::int32_t> position_ids;

  std::size_t size() const { return ids.size(); }

  bool consistent() const {
    const auto n = ids.size();
    return lexical_tags.size() == n && entity_flags.size() == n && loss_mask.size() == n &&
           position_ids.size() == n;
  }

  std::size_t loss_tokens() const {
    std::size_t n = 0;
    for (auto m : loss_mask) n += m != 0;
    return n;
  }

  bool operator==(const TokenSequence&) const = default;
};

// Drops leading tokens so at most `max_len` remain, then renumbers positions.
inline void keep_last(TokenSequence& seq, std::size_t max_len) {
  if (seq.size() > max_len) {
    const auto drop = static_cast<std::ptrdiff_t>(seq.size() - max_len);
    seq.ids.erase(seq.ids.begin(), seq.ids.begin() + drop);
    seq.lexical_tags.erase(seq.lexical_tags.begin(), seq.lexical_tags.begin() + drop);
    seq.entity_flags.erase(seq.entity_flags.begin(), seq.entity_flags.begin() + drop);
    seq.loss_mask.erase(seq.loss_mask.begin(), seq.loss_mask.begin() + drop);
  }
  seq.position_ids.resize(seq.size());
  for (std::size_t i = 0; i < seq.size(); ++i) seq.position_ids[i] = static_cast<std::int32_t>(i);
}

}  // namespace entlm
