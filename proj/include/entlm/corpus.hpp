#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "entlm/annotation.hpp"
#include "entlm/dialogue.hpp"
#include "entlm/sequence.hpp"
#include "entlm/tokenizer.hpp"

namespace entlm {

// Throws MalformedRecordError / SpanOutOfBoundsError / OverlappingSpansError,
// each naming the dialogue id.
void validate_dialogue(const Dialogue& dialogue);

// One JSON object per line:
//   {"id": ..., "turns": [{"speaker": "patient"|"doctor", "text": ...,
//    "entities": [{"start": s, "end": e, "label": ...}]}]}
// Blank lines are skipped. Every record is validated.
std::vector<Dialogue> load_corpus(const std::filesystem::path& path);
std::vector<Dialogue> parse_corpus(std::string_view jsonl, const std::string& source = "<memory>");
void save_corpus(const std::filesystem::path& path, std::span<const Dialogue> corpus);
std::string serialize_corpus(std::span<const Dialogue> corpus);

// One term per line; blank lines are skipped.
std::vector<std::string> load_lexicon(const std::filesystem::path& path);
void save_lexicon(const std::filesystem::path& path, std::span<const std::string> terms);

// train:test proportions, e.g. {100, 1} or {8, 2}.
struct SplitRatio {
  double train = 8;
  double test = 2;

  double test_fraction() const { return test / (train + test); }
};

// Parses "8:2". Throws ConfigError.
SplitRatio parse_split_ratio(std::string_view text);

struct CorpusSplit {
  std::vector<Dialogue> train;
  std::vector<Dialogue> test;
};

// Dialogue-level partition with |test| = max(1, round(n * test_fraction)),
// capped at n - 1. Both parts keep corpus order. Throws DataError for n < 2.
CorpusSplit split_corpus(std::span<const Dialogue> corpus, SplitRatio ratio, std::uint64_t seed);

enum class LossMaskPolicy {
  kAllTokens,     // every token but BOS is a target
  kResponseOnly,  // only the final doctor turn's characters and the closing EOS
};

// BOS, then per turn its speaker marker and characters, then EOS. Sequences
// longer than max_len keep their last max_len tokens.
TokenSequence linearize(const Dialogue& dialogue, const Vocab& vocab, std::size_t max_len,
                        LossMaskPolicy policy = LossMaskPolicy::kAllTokens, const Tagger& tagger = null_tagger());

// Entity mention texts of every turn except the last, in order.
std::vector<std::string> history_entity_texts(const Dialogue& dialogue);

struct SyntheticLexicons {
  std::vector<std::string> symptoms;
  std::vector<std::string> diseases;  // diseases[i % n] explains symptoms[i]
  std::vector<std::string> drugs;     // drugs[i % n] treats diseases[i]
  std::vector<std::string> adjectives;
  std::vector<std::string> verbs;

  // The tagger lexicons implied by these terms.
  TagLexicons tag_lexicons() const;
};

// Built-in Chinese medical lexicons.
SyntheticLexicons default_synthetic_lexicons();

inline constexpr std::size_t kNumReplyStyles = 4;

struct SyntheticSpec {
  SyntheticLexicons lexicons = default_synthetic_lexicons();
  std::size_t n_dialogues = 400;
  std::size_t min_turns = 2;
  std::size_t max_turns = 4;
  // Unannotated symptom mentions placed next to the annotated one in the
  // opening turn. Only the annotation tells them apart.
  std::size_t distractors = 2;
  // Final doctor-turn templates to draw from; empty means all.
  std::vector<std::size_t> reply_styles;
  std::string id_prefix = "syn";
};

// Template dialogues whose final doctor turn names the disease (and drug)
// determined by the annotated symptom. Throws ConfigError on empty lexicons
// or an invalid turn range.
std::vector<Dialogue> generate_synthetic(const SyntheticSpec& spec, std::uint64_t seed);

}  // namespace entlm
