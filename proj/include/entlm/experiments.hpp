#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "entlm/checkpoint.hpp"
#include "entlm/trainer.hpp"

namespace entlm {

// Comma-separated table with a header row.
struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::string to_csv() const;
  static Table from_csv(const std::string& text);
  void save(const std::filesystem::path& path) const;
  static Table load(const std::filesystem::path& path);
};

std::vector<Dialogue> load_run_corpus(const RunConfig& run);

// The vocab file when configured, otherwise one built from `corpus`.
Vocab resolve_vocab(const RunConfig& run, std::span<const Dialogue> corpus);

// pretrain: fresh parameters from the seed. finetune / ptune: the
// init_checkpoint with the run's channel switches and dropout applied; ptune
// adds fresh prompts. A checkpoint whose vocab size disagrees with `vocab`
// throws DataError.
TrainState initial_state(const RunConfig& run, const Vocab& vocab);

// Loads a checkpoint and checks it against the vocab (DataError).
Checkpoint load_checked_checkpoint(const std::filesystem::path& path, const Vocab& vocab);

struct RunOutcome {
  TrainState state;
  TrainResult result;
  Dataset data;
};

// One complete training run. With `out_dir`, also writes run.conf (the
// resolved config), vocab.txt and eval.csv next to the trainer's artifacts.
RunOutcome run_training(const RunConfig& run, const std::optional<std::filesystem::path>& out_dir = std::nullopt);

struct SweepRow {
  std::size_t prompt_tokens = 0;
  double ppl = 0;
};

// One ptune run per count, same seed and split. Writes sweep.csv
// (prompt_tokens,ppl) and per-count run directories under `out_dir`.
std::vector<SweepRow> sweep_prompt_counts(const RunConfig& run, std::span<const std::size_t> counts,
                                          const std::optional<std::filesystem::path>& out_dir = std::nullopt);

struct AblationRow {
  std::string variant;
  bool lexical = false;
  bool entity = false;
  bool splice = false;
  double ppl = 0;
};

// Tuning variants none, lexical, entity, both, splice from the same
// init_checkpoint, seed, split and step count. Writes ablation.csv
// (variant,lexical,entity,splice,ppl).
std::vector<AblationRow> ablate(const RunConfig& run,
                                const std::optional<std::filesystem::path>& out_dir = std::nullopt);

struct SyntheticRun {
  SyntheticSpec spec;
  std::uint64_t seed = 1234;
};

// Keys: seed, n_dialogues, min_turns, max_turns, distractors, reply_styles
// (comma list, empty for all), id_prefix. Throws ConfigError.
SyntheticRun parse_synthetic_config(const std::string& text);

// corpus.jsonl, vocab.txt and the tagger lexicons nouns.txt, adjectives.txt,
// verbs.txt.
void write_synthetic(const SyntheticRun& run, const std::filesystem::path& out_dir);

// BOS, the dialogue's turns up to the final doctor turn, and that turn's
// speaker marker: the context a reply is generated from. Keeps the last
// max_len - 1 tokens.
TokenSequence reply_context(const Dialogue& dialogue, const Vocab& vocab, std::size_t max_len, const Tagger& tagger);

}  // namespace entlm
