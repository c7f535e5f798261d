#include "entlm/experiments.hpp"

#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "entlm/checkpoint.hpp"
#include "entlm/errors.hpp"

namespace entlm {

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<std::string> split_cells(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
}

}  // namespace

std::string Table::to_csv() const {
  auto join = [](const std::vector<std::string>& cells) {
    std::string s;
    for (std::size_t i = 0; i < cells.size(); ++i) s += (i ? "," : "") + cells[i];
    return s + '\n';
  };
  std::string out = join(header);
  for (const auto& r : rows) out += join(r);
  return out;
}

Table Table::from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  Table t;
  if (!std::getline(in, line) || line.empty()) throw DataError("table has no header row");
  t.header = split_cells(line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto cells = split_cells(line);
    if (cells.size() != t.header.size()) {
      throw DataError("table row has " + std::to_string(cells.size()) + " cells, header has " +
                      std::to_string(t.header.size()));
    }
    t.rows.push_back(std::move(cells));
  }
  return t;
}

void Table::save(const std::filesystem::path& path) const { write_text(path, to_csv()); }

Table Table::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return from_csv(ss.str());
}

std::vector<Dialogue> load_run_corpus(const RunConfig& run) {
  if (run.corpus.empty()) throw ConfigError("config names no corpus");
  if (!std::filesystem::exists(run.corpus)) throw DataError("corpus not found: " + run.corpus.string());
  return load_corpus(run.corpus);
}

Vocab resolve_vocab(const RunConfig& run, std::span<const Dialogue> corpus) {
  if (!run.vocab.empty()) {
    if (!std::filesystem::exists(run.vocab)) throw DataError("vocab not found: " + run.vocab.string());
    return Vocab::load(run.vocab);
  }
  return build_vocab(corpus);
}

Checkpoint load_checked_checkpoint(const std::filesystem::path& path, const Vocab& vocab) {
  auto ck = load_checkpoint(path);
  if (ck.config.vocab != static_cast<std::size_t>(vocab.size())) {
    throw DataError("checkpoint " + path.string() + " has vocab size " + std::to_string(ck.config.vocab) +
                    " but the vocab file has " + std::to_string(vocab.size()));
  }
  return ck;
}

TrainState initial_state(const RunConfig& run, const Vocab& vocab) {
  TrainState s;
  if (run.mode == TuneMode::kPretrain) {
    s.config = run.model;
    s.config.vocab = static_cast<std::size_t>(vocab.size());
    s.params = init_parameters<float>(s.config, run.seed);
    return s;
  }
  if (run.init_checkpoint.empty()) throw ConfigError(to_string(run.mode) + " needs init_checkpoint");
  auto ck = load_checked_checkpoint(run.init_checkpoint, vocab);
  s.config = ck.config;
  s.config.lexical = run.model.lexical;
  s.config.entity = run.model.entity;
  s.config.dropout = run.model.dropout;
  s.params = std::move(ck.params);
  if (run.mode == TuneMode::kPtune) {
    s.prompts = init_prompts<float>(run.prompt_tokens, s.config.hidden, run.seed + 1);
  }
  return s;
}

RunOutcome run_training(const RunConfig& run, const std::optional<std::filesystem::path>& out_dir) {
  const auto corpus = load_run_corpus(run);
  const auto vocab = resolve_vocab(run, corpus);
  RunOutcome out;
  out.state = initial_state(run, vocab);
  RunConfig effective = run;
  effective.model = out.state.config;
  out.data = prepare_dataset(effective, vocab, corpus);
  if (out_dir) {
    std::filesystem::create_directories(*out_dir);
    write_text(*out_dir / "run.conf", to_text(effective));
    vocab.save(*out_dir / "vocab.txt");
  }
  out.result = train(effective, out.state, out.data, out_dir);
  if (out_dir && !out.data.test.empty()) {
    const auto* prompts = out.state.prompts ? &*out.state.prompts : nullptr;
    const auto r = evaluate_ppl(out.state.params, std::span(out.data.test), out.state.config, prompts);
    Table{{"split", "tokens", "ppl"}, {{"test", std::to_string(r.tokens), fmt(r.ppl())}}}.save(*out_dir / "eval.csv");
  }
  return out;
}

std::vector<SweepRow> sweep_prompt_counts(const RunConfig& run, std::span<const std::size_t> counts,
                                          const std::optional<std::filesystem::path>& out_dir) {
  if (counts.empty()) throw ConfigError("prompt-count sweep needs at least one count");
  std::vector<SweepRow> rows;
  Table table{{"prompt_tokens", "ppl"}, {}};
  for (const auto c : counts) {
    RunConfig r = run;
    r.mode = TuneMode::kPtune;
    r.prompt_tokens = c;
    std::optional<std::filesystem::path> dir;
    if (out_dir) dir = *out_dir / ("vp-" + std::to_string(c));
    const auto outcome = run_training(r, dir);
    rows.push_back({c, outcome.result.final_eval_ppl});
    table.rows.push_back({std::to_string(c), fmt(outcome.result.final_eval_ppl)});
    if (out_dir) table.save(*out_dir / "sweep.csv");
  }
  return rows;
}

std::vector<AblationRow> ablate(const RunConfig& run, const std::optional<std::filesystem::path>& out_dir) {
  if (run.mode == TuneMode::kPretrain) throw ConfigError("ablate tunes a pretrained model; mode must be finetune or ptune");
  const std::vector<AblationRow> variants = {
      {"none", false, false, false},
      {"lexical", true, false, false},
      {"entity", false, true, false},
      {"both", true, true, false},
      {"splice", false, false, true},
  };
  std::vector<AblationRow> rows;
  Table table{{"variant", "lexical", "entity", "splice", "ppl"}, {}};
  for (auto v : variants) {
    RunConfig r = run;
    r.model.lexical = v.lexical;
    r.model.entity = v.entity;
    r.splice = v.splice;
    std::optional<std::filesystem::path> dir;
    if (out_dir) dir = *out_dir / v.variant;
    v.ppl = run_training(r, dir).result.final_eval_ppl;
    rows.push_back(v);
    table.rows.push_back({v.variant, v.lexical ? "1" : "0", v.entity ? "1" : "0", v.splice ? "1" : "0", fmt(v.ppl)});
    if (out_dir) table.save(*out_dir / "ablation.csv");
  }
  return rows;
}

SyntheticRun parse_synthetic_config(const std::string& text) {
  SyntheticRun run;
  auto count = [](const std::string& key, const std::string& v) {
    std::size_t used = 0;
    unsigned long long n = 0;
    try {
      n = std::stoull(v, &used);
    } catch (const std::logic_error&) {
      used = 0;
    }
    if (used == 0 || used != v.size() || v[0] == '-') {
      throw ConfigError("key '" + key + "' expects a non-negative integer, got '" + v + "'");
    }
    return static_cast<std::size_t>(n);
  };
  for (const auto& [k, v] : parse_key_values(text)) {
    if (k == "seed") {
      run.seed = count(k, v);
    } else if (k == "n_dialogues") {
      run.spec.n_dialogues = count(k, v);
    } else if (k == "min_turns") {
      run.spec.min_turns = count(k, v);
    } else if (k == "max_turns") {
      run.spec.max_turns = count(k, v);
    } else if (k == "distractors") {
      run.spec.distractors = count(k, v);
    } else if (k == "reply_styles") {
      run.spec.reply_styles.clear();
      std::stringstream ss(v);
      std::string item;
      while (std::getline(ss, item, ',')) {
        if (!item.empty()) run.spec.reply_styles.push_back(count(k, item));
      }
    } else if (k == "id_prefix") {
      run.spec.id_prefix = v;
    } else {
      throw ConfigError("unknown synthetic config key '" + k + "'");
    }
  }
  return run;
}

void write_synthetic(const SyntheticRun& run, const std::filesystem::path& out_dir) {
  const auto corpus = generate_synthetic(run.spec, run.seed);
  std::filesystem::create_directories(out_dir);
  save_corpus(out_dir / "corpus.jsonl", corpus);
  build_vocab(corpus).save(out_dir / "vocab.txt");
  const auto lex = run.spec.lexicons.tag_lexicons();
  save_lexicon(out_dir / "nouns.txt", lex.nouns);
  save_lexicon(out_dir / "adjectives.txt", lex.adjectives);
  save_lexicon(out_dir / "verbs.txt", lex.verbs);
}

TokenSequence reply_context(const Dialogue& dialogue, const Vocab& vocab, std::size_t max_len, const Tagger& tagger) {
  auto seq = linearize(dialogue, vocab, std::numeric_limits<std::size_t>::max(), LossMaskPolicy::kAllTokens, tagger);
  const std::size_t reply = utf8_decode(dialogue.turns.back().text).size() + 1;
  const std::size_t keep = seq.size() - reply;
  seq.ids.resize(keep);
  seq.lexical_tags.resize(keep);
  seq.entity_flags.resize(keep);
  seq.loss_mask.assign(keep, 0);
  keep_last(seq, max_len - 1);
  return seq;
}

}  // namespace entlm
