// entlm command-line interface.
//
// Exit codes: 0 success, 1 other failure, 2 config error, 3 data error,
// 4 numeric divergence. Failures print one line on stderr:
//   error code=<kind> message="<text>"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "entlm/checkpoint.hpp"
#include "entlm/errors.hpp"
#include "entlm/experiments.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using namespace entlm;

namespace {

enum Exit { kOk = 0, kOther = 1, kConfig = 2, kData = 3, kNumeric = 4 };

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  bool force = false;
  std::vector<std::string> sets;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "configuration file")->required();
  cmd->add_option("--seed", c.seed, "override the configured seed");
  cmd->add_option("--out", c.out, "output directory")->required();
  cmd->add_flag("--force", c.force, "write into an existing non-empty output directory");
  cmd->add_option("--set", c.sets, "override a config key, key=value (repeatable)");
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

bool is_path_key(const std::string& key) {
  return key == "corpus" || key == "vocab" || key == "init_checkpoint" || key == "nouns" || key == "adjectives" ||
         key == "verbs";
}

// Config text plus --set lines; paths given on the command line resolve
// against the working directory.
std::string config_text(const Common& c) {
  std::string text = read_file(c.config) + "\n";
  for (const auto& s : c.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + s + "'");
    const auto key = s.substr(0, eq);
    auto value = s.substr(eq + 1);
    if (is_path_key(key) && !value.empty()) value = fs::absolute(value).lexically_normal().string();
    text += key + " = " + value + "\n";
  }
  return text;
}

RunConfig load_run(const Common& c, TuneMode mode, bool strict_mode) {
  auto run = parse_run_config(config_text(c), fs::path(c.config).parent_path(), mode);
  if (strict_mode && run.mode != mode) {
    throw ConfigError("config sets mode = " + to_string(run.mode) + " but the command is " + to_string(mode));
  }
  if (c.seed) run.seed = *c.seed;
  return run;
}

fs::path prepare_out(const Common& c) {
  const fs::path out(c.out);
  if (fs::exists(out) && !(fs::is_directory(out) && fs::is_empty(out)) && !c.force) {
    throw ConfigError("output directory " + out.string() + " already exists; pass --force to overwrite");
  }
  fs::create_directories(out);
  return out;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char ch : s) {
    if (ch == '"' || ch == '\\') out += '\\';
    out += ch == '\n' ? ' ' : ch;
  }
  return out;
}

int fail(const char* kind, const std::string& message, int code) {
  std::cerr << "error code=" << kind << " message=\"" << escape(message) << "\"\n";
  return code;
}

void print_row(const std::string& label, double ppl) { std::cout << label << " ppl=" << ppl << '\n'; }

int cmd_build_vocab(const Common& c) {
  const auto run = load_run(c, TuneMode::kPretrain, false);
  const auto corpus = load_run_corpus(run);
  const auto out = prepare_out(c);
  const auto vocab = build_vocab(corpus);
  vocab.save(out / "vocab.txt");
  std::cout << "vocab size=" << vocab.size() << '\n';
  return kOk;
}

int cmd_gen_synthetic(const Common& c) {
  auto run = parse_synthetic_config(config_text(c));
  if (c.seed) run.seed = *c.seed;
  const auto out = prepare_out(c);
  write_synthetic(run, out);
  std::cout << "dialogues=" << run.spec.n_dialogues << '\n';
  return kOk;
}

int cmd_train(const Common& c, TuneMode mode) {
  const auto run = load_run(c, mode, true);
  const auto out = prepare_out(c);
  const auto outcome = run_training(run, out);
  std::cout << "steps=" << outcome.result.steps << " eval_ppl=" << outcome.result.final_eval_ppl << '\n';
  return kOk;
}

struct Loaded {
  RunConfig run;
  Vocab vocab;
  Checkpoint ck;
  Dataset data;
};

Loaded load_for_inference(const Common& c) {
  auto run = load_run(c, TuneMode::kFinetune, false);
  if (run.init_checkpoint.empty()) throw ConfigError("config names no init_checkpoint");
  const auto corpus = load_run_corpus(run);
  auto vocab = resolve_vocab(run, corpus);
  auto ck = load_checked_checkpoint(run.init_checkpoint, vocab);
  run.model = ck.config;
  auto data = prepare_dataset(run, vocab, corpus);
  return {std::move(run), std::move(vocab), std::move(ck), std::move(data)};
}

int cmd_eval(const Common& c) {
  const auto l = load_for_inference(c);
  const auto out = prepare_out(c);
  const auto* prompts = l.ck.prompts ? &*l.ck.prompts : nullptr;
  const auto r = evaluate_ppl(l.ck.params, std::span(l.data.test), l.ck.config, prompts);
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", r.ppl());
  Table{{"split", "tokens", "ppl"}, {{"test", std::to_string(r.tokens), buf}}}.save(out / "eval.csv");
  print_row("test", r.ppl());
  return kOk;
}

struct GenerateFlags {
  std::string strategy = "greedy";
  std::size_t top_k = 5;
  std::size_t max_new = 64;
  std::size_t count = 5;
};

int cmd_generate(const Common& c, const GenerateFlags& g) {
  auto run = load_run(c, TuneMode::kFinetune, false);
  if (run.init_checkpoint.empty()) throw ConfigError("config names no init_checkpoint");
  const auto corpus = load_run_corpus(run);
  const auto vocab = resolve_vocab(run, corpus);
  const auto ck = load_checked_checkpoint(run.init_checkpoint, vocab);
  run.model = ck.config;
  TagLexicons lex;
  if (run.tagger == "dictionary") {
    if (!run.nouns.empty()) lex.nouns = load_lexicon(run.nouns);
    if (!run.adjectives.empty()) lex.adjectives = load_lexicon(run.adjectives);
    if (!run.verbs.empty()) lex.verbs = load_lexicon(run.verbs);
  }
  const auto tagger = make_tagger(run.tagger, lex);
  const auto split = split_corpus(corpus, run.split, run.seed);

  GenerateOptions opts;
  if (g.strategy == "greedy") {
    opts.strategy = GenerateOptions::Strategy::kGreedy;
  } else if (g.strategy == "topk") {
    opts.strategy = GenerateOptions::Strategy::kTopK;
  } else {
    throw ConfigError("--strategy expects greedy or topk, got '" + g.strategy + "'");
  }
  opts.top_k = g.top_k;
  opts.max_new = g.max_new;
  opts.seed = run.seed;

  const auto out = prepare_out(c);
  std::ofstream file(out / "generations.jsonl", std::ios::binary | std::ios::trunc);
  const auto* prompts = ck.prompts ? &*ck.prompts : nullptr;
  for (std::size_t i = 0; i < std::min(g.count, split.test.size()); ++i) {
    const auto& d = split.test[i];
    const auto context = reply_context(d, vocab, ck.config.max_len, tagger);
    auto ids = generate(ck.params, context, ck.config, opts, prompts);
    if (!ids.empty() && ids.back() == Vocab::kEos) ids.pop_back();
    nlohmann::ordered_json j;
    j["id"] = d.id;
    j["context"] = decode(context.ids, vocab);
    j["reply"] = decode(ids, vocab);
    j["reference"] = d.turns.back().text;
    file << j.dump() << '\n';
    std::cout << d.id << '\t' << j["reply"].get<std::string>() << '\n';
  }
  return kOk;
}

std::vector<std::size_t> parse_counts(const std::string& text) {
  std::vector<std::size_t> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      const auto v = std::stoul(item, &used);
      if (used != item.size() || v == 0) throw std::invalid_argument(item);
      out.push_back(v);
    } catch (const std::logic_error&) {
      throw ConfigError("--counts expects positive integers separated by commas, got '" + text + "'");
    }
  }
  return out;
}

int cmd_sweep(const Common& c, const std::string& counts) {
  const auto run = load_run(c, TuneMode::kPtune, false);
  const auto parsed = parse_counts(counts);
  const auto out = prepare_out(c);
  for (const auto& row : sweep_prompt_counts(run, parsed, out)) print_row("V_p=" + std::to_string(row.prompt_tokens), row.ppl);
  return kOk;
}

int cmd_ablate(const Common& c) {
  const auto run = load_run(c, TuneMode::kPtune, false);
  const auto out = prepare_out(c);
  for (const auto& row : ablate(run, out)) print_row(row.variant, row.ppl);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Entity-aware causal language model lab"};
  app.require_subcommand(1);

  Common common;
  GenerateFlags gen;
  std::string counts = "1,25,50,75,100";

  auto* build_vocab_cmd = app.add_subcommand("build-vocab", "build a character vocabulary from the corpus");
  auto* gen_cmd = app.add_subcommand("gen-synthetic", "write an entity-annotated synthetic corpus and lexicons");
  auto* pretrain_cmd = app.add_subcommand("pretrain", "train a model from scratch");
  auto* finetune_cmd = app.add_subcommand("finetune", "tune every backbone parameter");
  auto* ptune_cmd = app.add_subcommand("ptune", "train prefix prompts on a frozen backbone");
  auto* sweep_cmd = app.add_subcommand("sweep-prompts", "one p-tuning run per prompt count");
  auto* eval_cmd = app.add_subcommand("eval", "held-out perplexity of a checkpoint");
  auto* generate_cmd = app.add_subcommand("generate", "decode replies for held-out dialogues");
  auto* ablate_cmd = app.add_subcommand("ablate", "compare embedding channels and entity splicing");
  for (auto* cmd : {build_vocab_cmd, gen_cmd, pretrain_cmd, finetune_cmd, ptune_cmd, sweep_cmd, eval_cmd, generate_cmd,
                    ablate_cmd}) {
    add_common(cmd, common);
  }
  sweep_cmd->add_option("--counts", counts, "comma-separated prompt counts")->capture_default_str();
  generate_cmd->add_option("--strategy", gen.strategy, "greedy or topk")->capture_default_str();
  generate_cmd->add_option("--top-k", gen.top_k, "candidates for topk")->capture_default_str();
  generate_cmd->add_option("--max-new", gen.max_new, "maximum new tokens")->capture_default_str();
  generate_cmd->add_option("--count", gen.count, "number of held-out dialogues")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail("usage_error", e.what(), kConfig);
  }

  try {
    if (*build_vocab_cmd) return cmd_build_vocab(common);
    if (*gen_cmd) return cmd_gen_synthetic(common);
    if (*pretrain_cmd) return cmd_train(common, TuneMode::kPretrain);
    if (*finetune_cmd) return cmd_train(common, TuneMode::kFinetune);
    if (*ptune_cmd) return cmd_train(common, TuneMode::kPtune);
    if (*sweep_cmd) return cmd_sweep(common, counts);
    if (*eval_cmd) return cmd_eval(common);
    if (*generate_cmd) return cmd_generate(common, gen);
    if (*ablate_cmd) return cmd_ablate(common);
  } catch (const ConfigError& e) {
    return fail("config_error", e.what(), kConfig);
  } catch (const DataError& e) {
    return fail("data_error", e.what(), kData);
  } catch (const VocabError& e) {
    return fail("data_error", e.what(), kData);
  } catch (const NumericError& e) {
    return fail("numeric_divergence", e.what(), kNumeric);
  } catch (const std::exception& e) {
    return fail("error", e.what(), kOther);
  }
  return kOther;
}
