#include "entlm/trainer.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <numeric>
#include <sstream>

#include "entlm/checkpoint.hpp"
#include "entlm/errors.hpp"

namespace entlm {

void ScheduleConfig::validate() const {
  if (!(min > 0 && min <= peak)) throw ConfigError("learning rates need 0 < lr.min <= lr.peak");
  if (!(warmup_steps < decay_end_step)) throw ConfigError("lr.warmup_steps must be below lr.decay_end_step");
}

double lr_at(std::size_t step, const ScheduleConfig& s) {
  if (step < s.warmup_steps) return s.peak * static_cast<double>(step) / static_cast<double>(s.warmup_steps);
  if (step >= s.decay_end_step) return s.min;
  const double progress =
      static_cast<double>(step - s.warmup_steps) / static_cast<double>(s.decay_end_step - s.warmup_steps);
  return s.min + (s.peak - s.min) * 0.5 * (1.0 + std::cos(M_PI * progress));
}

template <class Real>
double global_grad_norm(std::span<const TrainableTensor<Real>> params) {
  double sq = 0;
  for (const auto& p : params) {
    if (!p.tensor->grad) continue;
    for (Real g : *p.tensor->grad) {
      if (!std::isfinite(g)) throw NumericError("non-finite gradient in '" + p.name + "'");
      sq += static_cast<double>(g) * static_cast<double>(g);
    }
  }
  return std::sqrt(sq);
}

template <class Real>
double clip_grad_norm(std::span<const TrainableTensor<Real>> params, double threshold) {
  if (!(threshold > 0)) throw ConfigError("clip threshold must be positive");
  const double norm = global_grad_norm(params);
  if (!std::isfinite(norm)) throw NumericError("gradient norm overflowed");
  if (norm <= threshold) return 1.0;
  const double factor = threshold / norm;
  for (const auto& p : params) {
    if (!p.tensor->grad) continue;
    for (Real& g : *p.tensor->grad) g = static_cast<Real>(g * factor);
  }
  return factor;
}

template <class Real>
void adamw_step(std::span<const TrainableTensor<Real>> params, OptimizerState& state, double lr,
                const AdamWConfig& c) {
  if (!(lr >= 0)) throw ConfigError("learning rate must be non-negative");
  const std::size_t t = state.step + 1;
  const double c1 = 1.0 - std::pow(c.beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(c.beta2, static_cast<double>(t));

  struct Pending {
    std::vector<double> m, v;
    std::vector<Real> w;
  };
  std::vector<Pending> pending(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& p = params[i];
    const std::size_t n = p.tensor->numel();
    auto& out = pending[i];
    auto m_it = state.m.find(p.name);
    out.m = m_it != state.m.end() ? m_it->second : std::vector<double>(n, 0.0);
    auto v_it = state.v.find(p.name);
    out.v = v_it != state.v.end() ? v_it->second : std::vector<double>(n, 0.0);
    if (out.m.size() != n || out.v.size() != n) {
      throw DimensionError("optimizer moments for '" + p.name + "' do not match shape " + shape_str(p.tensor->shape));
    }
    out.w.resize(n);
    const auto* g = p.tensor->grad ? p.tensor->grad->data() : nullptr;
    const double decay = p.decay ? lr * c.weight_decay : 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double gj = g ? static_cast<double>(g[j]) : 0.0;
      out.m[j] = c.beta1 * out.m[j] + (1 - c.beta1) * gj;
      out.v[j] = c.beta2 * out.v[j] + (1 - c.beta2) * gj * gj;
      const double w = static_cast<double>(p.tensor->data[j]);
      const double step = lr * (out.m[j] / c1) / (std::sqrt(out.v[j] / c2) + c.eps);
      const double next = w - step - decay * w;
      if (!std::isfinite(next)) throw NumericError("non-finite update in '" + p.name + "'");
      out.w[j] = static_cast<Real>(next);
    }
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    params[i].tensor->data = std::move(pending[i].w);
    state.m[params[i].name] = std::move(pending[i].m);
    state.v[params[i].name] = std::move(pending[i].v);
  }
  state.step = t;
}

// ---------------------------------------------------------------------------
// Run configuration

void RunConfig::validate() const {
  if (batch_size == 0) throw ConfigError("batch_size must be at least 1");
  if (epochs == 0 && max_steps == 0) throw ConfigError("need epochs >= 1 or max_steps >= 1");
  schedule.validate();
  if (!(clip > 0)) throw ConfigError("clip must be positive");
  if (!(adamw.beta1 >= 0 && adamw.beta1 < 1 && adamw.beta2 >= 0 && adamw.beta2 < 1)) {
    throw ConfigError("beta1 and beta2 must lie in [0, 1)");
  }
  if (!(adamw.eps > 0)) throw ConfigError("eps must be positive");
  if (!(adamw.weight_decay >= 0)) throw ConfigError("weight_decay must be non-negative");
  if (mode == TuneMode::kPtune && prompt_tokens == 0) throw ConfigError("prompt_tokens must be at least 1");
  if (!(split.train > 0 && split.test > 0)) throw ConfigError("split parts must be positive");
}

RunConfig default_run_config(TuneMode mode) {
  RunConfig c;
  c.mode = mode;
  if (mode != TuneMode::kPretrain) {
    c.schedule.peak = 5e-5;
    c.epochs = 6;
    c.split = {8, 2};
    c.loss_mask = LossMaskPolicy::kResponseOnly;
  }
  return c;
}

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::size_t to_size(const std::string& key, const std::string& v) {
  std::size_t out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) {
    throw ConfigError("key '" + key + "' expects a non-negative integer, got '" + v + "'");
  }
  return out;
}

double to_double(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double out = 0;
  try {
    out = std::stod(v, &used);
  } catch (const std::logic_error&) {
    used = 0;
  }
  if (used == 0 || used != v.size()) throw ConfigError("key '" + key + "' expects a number, got '" + v + "'");
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("key '" + key + "' expects true or false, got '" + v + "'");
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

std::vector<std::pair<std::string, std::string>> parse_key_values(const std::string& text) {
  std::vector<std::pair<std::string, std::string>> entries;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    const auto body = trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
    entries.emplace_back(trim(std::string_view(body).substr(0, eq)), trim(std::string_view(body).substr(eq + 1)));
  }
  return entries;
}

RunConfig parse_run_config(const std::string& text, const std::filesystem::path& base_dir, TuneMode default_mode) {
  const auto entries = parse_key_values(text);
  TuneMode mode = default_mode;
  for (const auto& [k, v] : entries) {
    if (k == "mode") mode = parse_tune_mode(v);
  }

  RunConfig c = default_run_config(mode);
  auto path = [&](const std::string& v) {
    std::filesystem::path p(v);
    return p.is_relative() && !base_dir.empty() ? base_dir / p : p;
  };
  for (const auto& [k, v] : entries) {
    if (k == "mode") {
      continue;
    } else if (k == "seed") {
      c.seed = to_size(k, v);
    } else if (k == "corpus") {
      c.corpus = path(v);
    } else if (k == "vocab") {
      c.vocab = path(v);
    } else if (k == "init_checkpoint") {
      c.init_checkpoint = path(v);
    } else if (k == "nouns") {
      c.nouns = path(v);
    } else if (k == "adjectives") {
      c.adjectives = path(v);
    } else if (k == "verbs") {
      c.verbs = path(v);
    } else if (k == "model.n_layers") {
      c.model.n_layers = to_size(k, v);
    } else if (k == "model.n_heads") {
      c.model.n_heads = to_size(k, v);
    } else if (k == "model.hidden") {
      c.model.hidden = to_size(k, v);
    } else if (k == "model.max_len") {
      c.model.max_len = to_size(k, v);
    } else if (k == "model.ff_dim") {
      c.model.ff_dim = to_size(k, v);
    } else if (k == "model.dropout") {
      c.model.dropout = to_double(k, v);
    } else if (k == "model.ln_eps") {
      c.model.ln_eps = to_double(k, v);
    } else if (k == "lexical") {
      c.model.lexical = to_bool(k, v);
    } else if (k == "entity") {
      c.model.entity = to_bool(k, v);
    } else if (k == "batch_size") {
      c.batch_size = to_size(k, v);
    } else if (k == "epochs") {
      c.epochs = to_size(k, v);
    } else if (k == "max_steps") {
      c.max_steps = to_size(k, v);
    } else if (k == "lr.peak") {
      c.schedule.peak = to_double(k, v);
    } else if (k == "lr.min") {
      c.schedule.min = to_double(k, v);
    } else if (k == "lr.warmup_steps") {
      c.schedule.warmup_steps = to_size(k, v);
    } else if (k == "lr.decay_end_step") {
      c.schedule.decay_end_step = to_size(k, v);
    } else if (k == "clip") {
      c.clip = to_double(k, v);
    } else if (k == "weight_decay") {
      c.adamw.weight_decay = to_double(k, v);
    } else if (k == "beta1") {
      c.adamw.beta1 = to_double(k, v);
    } else if (k == "beta2") {
      c.adamw.beta2 = to_double(k, v);
    } else if (k == "eps") {
      c.adamw.eps = to_double(k, v);
    } else if (k == "loss_mask") {
      if (v == "all") {
        c.loss_mask = LossMaskPolicy::kAllTokens;
      } else if (v == "response") {
        c.loss_mask = LossMaskPolicy::kResponseOnly;
      } else {
        throw ConfigError("loss_mask expects all or response, got '" + v + "'");
      }
    } else if (k == "loss_weighting") {
      if (v == "token") {
        c.loss_weighting = LossWeighting::kToken;
      } else if (v == "dialogue") {
        c.loss_weighting = LossWeighting::kDialogue;
      } else {
        throw ConfigError("loss_weighting expects token or dialogue, got '" + v + "'");
      }
    } else if (k == "tagger") {
      if (v != "none" && v != "dictionary") throw ConfigError("tagger expects none or dictionary, got '" + v + "'");
      c.tagger = v;
    } else if (k == "splice") {
      c.splice = to_bool(k, v);
    } else if (k == "prompt_tokens") {
      c.prompt_tokens = to_size(k, v);
    } else if (k == "tune_channels") {
      c.tune_channels = to_bool(k, v);
    } else if (k == "split") {
      c.split = parse_split_ratio(v);
    } else if (k == "eval_every") {
      c.eval_every = to_size(k, v);
    } else if (k == "checkpoint_every") {
      c.checkpoint_every = to_size(k, v);
    } else if (k == "log_wall_time") {
      c.log_wall_time = to_bool(k, v);
    } else {
      throw ConfigError("unknown config key '" + k + "'");
    }
  }
  c.validate();
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path, TuneMode default_mode) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str(), path.parent_path(), default_mode);
}

std::string to_text(const RunConfig& c) {
  std::ostringstream os;
  auto b = [](bool v) { return v ? "true" : "false"; };
  os << "mode = " << to_string(c.mode) << '\n'
     << "seed = " << c.seed << '\n'
     << "corpus = " << c.corpus.string() << '\n'
     << "vocab = " << c.vocab.string() << '\n'
     << "init_checkpoint = " << c.init_checkpoint.string() << '\n'
     << "nouns = " << c.nouns.string() << '\n'
     << "adjectives = " << c.adjectives.string() << '\n'
     << "verbs = " << c.verbs.string() << '\n'
     << "model.n_layers = " << c.model.n_layers << '\n'
     << "model.n_heads = " << c.model.n_heads << '\n'
     << "model.hidden = " << c.model.hidden << '\n'
     << "model.max_len = " << c.model.max_len << '\n'
     << "model.ff_dim = " << c.model.ff_dim << '\n'
     << "model.dropout = " << fmt(c.model.dropout) << '\n'
     << "model.ln_eps = " << fmt(c.model.ln_eps) << '\n'
     << "lexical = " << b(c.model.lexical) << '\n'
     << "entity = " << b(c.model.entity) << '\n'
     << "batch_size = " << c.batch_size << '\n'
     << "epochs = " << c.epochs << '\n'
     << "max_steps = " << c.max_steps << '\n'
     << "lr.peak = " << fmt(c.schedule.peak) << '\n'
     << "lr.min = " << fmt(c.schedule.min) << '\n'
     << "lr.warmup_steps = " << c.schedule.warmup_steps << '\n'
     << "lr.decay_end_step = " << c.schedule.decay_end_step << '\n'
     << "clip = " << fmt(c.clip) << '\n'
     << "weight_decay = " << fmt(c.adamw.weight_decay) << '\n'
     << "beta1 = " << fmt(c.adamw.beta1) << '\n'
     << "beta2 = " << fmt(c.adamw.beta2) << '\n'
     << "eps = " << fmt(c.adamw.eps) << '\n'
     << "loss_mask = " << (c.loss_mask == LossMaskPolicy::kAllTokens ? "all" : "response") << '\n'
     << "loss_weighting = " << (c.loss_weighting == LossWeighting::kToken ? "token" : "dialogue") << '\n'
     << "tagger = " << c.tagger << '\n'
     << "splice = " << b(c.splice) << '\n'
     << "prompt_tokens = " << c.prompt_tokens << '\n'
     << "tune_channels = " << b(c.tune_channels) << '\n'
     << "split = " << fmt(c.split.train) << ':' << fmt(c.split.test) << '\n'
     << "eval_every = " << c.eval_every << '\n'
     << "checkpoint_every = " << c.checkpoint_every << '\n'
     << "log_wall_time = " << b(c.log_wall_time) << '\n';
  return os.str();
}

// ---------------------------------------------------------------------------
// Metrics

std::string MetricsLog::to_csv() const {
  std::string out = "step,lr,loss,ppl,eval_ppl,seconds\n";
  for (const auto& r : rows) {
    out += std::to_string(r.step) + ',' + fmt(r.lr) + ',' + fmt(r.loss) + ',' + fmt(r.ppl) + ',' +
           (r.eval_ppl ? fmt(*r.eval_ppl) : "") + ',' + (r.seconds ? fmt(*r.seconds) : "") + '\n';
  }
  return out;
}

MetricsLog MetricsLog::from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || trim(line) != "step,lr,loss,ppl,eval_ppl,seconds") {
    throw DataError("metrics file lacks the step,lr,loss,ppl,eval_ppl,seconds header");
  }
  MetricsLog log;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cells.push_back(trim(cell));
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    if (cells.size() != 6) throw DataError("metrics row needs 6 cells: " + line);
    try {
      MetricsRow r;
      r.step = to_size("step", cells[0]);
      r.lr = to_double("lr", cells[1]);
      r.loss = to_double("loss", cells[2]);
      r.ppl = to_double("ppl", cells[3]);
      if (!cells[4].empty()) r.eval_ppl = to_double("eval_ppl", cells[4]);
      if (!cells[5].empty()) r.seconds = to_double("seconds", cells[5]);
      log.rows.push_back(r);
    } catch (const ConfigError& e) {
      throw DataError(std::string("bad metrics row: ") + e.what());
    }
  }
  return log;
}

void MetricsLog::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << to_csv();
}

MetricsLog MetricsLog::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return from_csv(ss.str());
}

// ---------------------------------------------------------------------------
// Evaluation

double PplResult::ppl() const { return std::exp(mean_nll()); }

template <class Real>
PplResult evaluate_ppl(const Parameters<Real>& params, std::span<const TokenSequence> data, const ModelConfig& config,
                       const PromptEmbeddings<Real>* prompts) {
  const std::size_t n = data.size();
  std::vector<double> nll(n, 0.0);
  std::vector<std::size_t> count(n, 0);
  std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic)
  for (std::size_t i = 0; i < n; ++i) {
    try {
      const auto& seq = data[i];
      bool any = false;
      for (std::size_t t = 1; t < seq.size(); ++t) any = any || seq.loss_mask[t];
      if (!any) continue;
      const auto logits = forward_logits(params, seq, config, prompts);
      const std::size_t v = logits.cols();
      for (std::size_t t = 0; t + 1 < seq.size(); ++t) {
        if (!seq.loss_mask[t + 1]) continue;
        const Real* row = logits.data.data() + t * v;
        double mx = -INFINITY;
        for (std::size_t j = 0; j < v; ++j) mx = std::max(mx, static_cast<double>(row[j]));
        double z = 0;
        for (std::size_t j = 0; j < v; ++j) z += std::exp(static_cast<double>(row[j]) - mx);
        const auto target = static_cast<std::size_t>(seq.ids[t + 1]);
        nll[i] += std::log(z) + mx - static_cast<double>(row[target]);
        ++count[i];
      }
    } catch (...) {
#pragma omp critical
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  PplResult r;
  for (std::size_t i = 0; i < n; ++i) {
    r.nll_sum += nll[i];
    r.tokens += count[i];
  }
  if (r.tokens == 0) throw EmptyLossError("evaluation data has no target token");
  return r;
}

// ---------------------------------------------------------------------------
// Data

namespace {

bool has_target(const TokenSequence& s) {
  for (std::size_t t = 1; t < s.size(); ++t) {
    if (s.loss_mask[t]) return true;
  }
  return false;
}

}  // namespace

Dataset prepare_dataset(const RunConfig& run, const Vocab& vocab, std::span<const Dialogue> corpus) {
  TagLexicons lex;
  if (run.tagger == "dictionary") {
    auto load = [](const std::filesystem::path& p) {
      return p.empty() ? std::vector<std::string>{} : load_lexicon(p);
    };
    lex.nouns = load(run.nouns);
    lex.adjectives = load(run.adjectives);
    lex.verbs = load(run.verbs);
  }
  const auto tagger = make_tagger(run.tagger, lex);
  const auto split = split_corpus(corpus, run.split, run.seed);
  auto convert = [&](const std::vector<Dialogue>& part) {
    std::vector<TokenSequence> out;
    for (const auto& d : part) {
      auto seq = linearize(d, vocab, run.model.max_len, run.loss_mask, tagger);
      if (run.splice) seq = splice_entities(seq, history_entity_texts(d), vocab, run.model.max_len);
      if (has_target(seq)) out.push_back(std::move(seq));
    }
    return out;
  };
  return {convert(split.train), convert(split.test)};
}

// ---------------------------------------------------------------------------
// Training loop

TrainResult train(const RunConfig& run, TrainState& state, const Dataset& data,
                  const std::optional<std::filesystem::path>& out_dir) {
  run.validate();
  state.config.validate();
  if (data.train.empty()) throw DataError("no training sequences");
  if (run.mode == TuneMode::kPtune && !state.prompts) throw ConfigError("ptune mode needs prompt embeddings");
  auto* prompts = state.prompts ? &*state.prompts : nullptr;
  const auto view = apply_freeze(state.params, prompts, freeze_spec(run.mode, state.config, run.tune_channels));
  const std::span<const TrainableTensor<float>> trainable(view);

  const std::size_t n = data.train.size();
  const std::size_t per_epoch = (n + run.batch_size - 1) / run.batch_size;
  const std::size_t total = run.max_steps > 0 ? run.max_steps : run.epochs * per_epoch;

  std::mt19937_64 order_rng(run.seed);
  std::mt19937_64 dropout_rng(run.seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  std::size_t cursor = n;

  auto save = [&](const std::string& file) {
    if (out_dir) save_checkpoint(*out_dir / file, state.config, state.params, prompts);
  };
  auto evaluate = [&]() -> std::optional<double> {
    if (data.test.empty()) return std::nullopt;
    return evaluate_ppl(state.params, std::span(data.test), state.config, prompts).ppl();
  };

  OptimizerState opt;
  TrainResult result;
  const auto start = std::chrono::steady_clock::now();
  std::vector<TokenSequence> batch;
  for (std::size_t step = 1; step <= total; ++step) {
    if (cursor >= n) {
      std::shuffle(perm.begin(), perm.end(), order_rng);
      cursor = 0;
    }
    batch.clear();
    for (std::size_t i = cursor; i < std::min(cursor + run.batch_size, n); ++i) batch.push_back(data.train[perm[i]]);
    cursor += run.batch_size;

    for (const auto& p : view) p.tensor->zero_grad();
    ad::Tape<float> tape;
    const auto model = bind(tape, state.params, prompts);
    const auto loss =
        batch_loss(tape, model, std::span<const TokenSequence>(batch), state.config, run.loss_weighting,
                   ForwardOptions{true, &dropout_rng});
    const double loss_value = static_cast<double>(tape.value(loss).data[0]);
    try {
      if (!std::isfinite(loss_value)) throw NumericError("non-finite loss at step " + std::to_string(step));
      tape.backward(loss);
      clip_grad_norm(trainable, run.clip);
      adamw_step(trainable, opt, lr_at(step, run.schedule), run.adamw);
    } catch (const NumericError&) {
      save("last_good.ckpt");
      if (out_dir) result.log.save(*out_dir / "metrics.csv");
      throw;
    }

    MetricsRow row;
    row.step = step;
    row.lr = lr_at(step, run.schedule);
    row.loss = loss_value;
    row.ppl = std::exp(loss_value);
    if ((run.eval_every > 0 && step % run.eval_every == 0) || step == total) row.eval_ppl = evaluate();
    if (run.log_wall_time) {
      row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    }
    result.log.rows.push_back(row);
    if (run.checkpoint_every > 0 && step % run.checkpoint_every == 0) save("checkpoint.ckpt");
  }
  result.steps = total;
  if (!result.log.rows.empty() && result.log.rows.back().eval_ppl) {
    result.final_eval_ppl = *result.log.rows.back().eval_ppl;
  }
  for (const auto& p : view) p.tensor->grad.reset();
  if (out_dir) {
    save("model.ckpt");
    result.log.save(*out_dir / "metrics.csv");
  }
  return result;
}

template double global_grad_norm<float>(std::span<const TrainableTensor<float>>);
template double global_grad_norm<double>(std::span<const TrainableTensor<double>>);
template double clip_grad_norm<float>(std::span<const TrainableTensor<float>>, double);
template double clip_grad_norm<double>(std::span<const TrainableTensor<double>>, double);
template void adamw_step<float>(std::span<const TrainableTensor<float>>, OptimizerState&, double,
                                const AdamWConfig&);
template void adamw_step<double>(std::span<const TrainableTensor<double>>, OptimizerState&, double,
                                 const AdamWConfig&);
template PplResult evaluate_ppl<float>(const Parameters<float>&, std::span<const TokenSequence>, const ModelConfig&,
                                       const PromptEmbeddings<float>*);
template PplResult evaluate_ppl<double>(const Parameters<double>&, std::span<const TokenSequence>,
                                        const ModelConfig&, const PromptEmbeddings<double>*);

}  // namespace entlm
