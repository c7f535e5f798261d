#include "entlm/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "entlm/annotation.hpp"
#include "entlm/errors.hpp"

namespace entlm {

void ModelConfig::validate() const {
  if (n_layers == 0) throw ConfigError("n_layers must be at least 1");
  if (n_heads == 0) throw ConfigError("n_heads must be at least 1");
  if (hidden == 0 || hidden % n_heads != 0) {
    throw ConfigError("hidden (" + std::to_string(hidden) + ") must be a positive multiple of n_heads (" +
                      std::to_string(n_heads) + ")");
  }
  if (vocab == 0) throw ConfigError("vocab size must be positive");
  if (max_len == 0) throw ConfigError("max_len must be at least 1");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must lie in [0, 1)");
  if (!(ln_eps >= 0.0)) throw ConfigError("ln_eps must be non-negative");
}

std::string ModelConfig::to_text() const {
  std::ostringstream os;
  os.precision(17);
  os << "n_layers=" << n_layers << '\n'
     << "n_heads=" << n_heads << '\n'
     << "hidden=" << hidden << '\n'
     << "vocab=" << vocab << '\n'
     << "max_len=" << max_len << '\n'
     << "ff_dim=" << ff_dim << '\n'
     << "lexical=" << (lexical ? 1 : 0) << '\n'
     << "entity=" << (entity ? 1 : 0) << '\n'
     << "dropout=" << dropout << '\n'
     << "ln_eps=" << ln_eps << '\n';
  return os.str();
}

ModelConfig ModelConfig::from_text(const std::string& text) {
  ModelConfig c;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("model config line without '=': " + line);
    const auto key = line.substr(0, eq);
    const auto value = line.substr(eq + 1);
    try {
      if (key == "n_layers") {
        c.n_layers = std::stoul(value);
      } else if (key == "n_heads") {
        c.n_heads = std::stoul(value);
      } else if (key == "hidden") {
        c.hidden = std::stoul(value);
      } else if (key == "vocab") {
        c.vocab = std::stoul(value);
      } else if (key == "max_len") {
        c.max_len = std::stoul(value);
      } else if (key == "ff_dim") {
        c.ff_dim = std::stoul(value);
      } else if (key == "lexical") {
        c.lexical = value == "1";
      } else if (key == "entity") {
        c.entity = value == "1";
      } else if (key == "dropout") {
        c.dropout = std::stod(value);
      } else if (key == "ln_eps") {
        c.ln_eps = std::stod(value);
      } else {
        throw ConfigError("unknown model config key '" + key + "'");
      }
    } catch (const std::logic_error&) {
      throw ConfigError("bad value for model config key '" + key + "': " + value);
    }
  }
  return c;
}

template <class Real>
Parameters<Real> init_parameters(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  const std::size_t h = config.hidden, ff = config.ff();
  Parameters<Real> p;
  p.tok_emb = Tensor<Real>({config.vocab, h});
  p.pos_emb = Tensor<Real>({config.max_len, h});
  p.lex_emb = Tensor<Real>({static_cast<std::size_t>(kLexicalTableSize), h});
  p.ent_emb = Tensor<Real>({static_cast<std::size_t>(kEntityTableSize), h});
  p.layers.resize(config.n_layers);
  for (auto& l : p.layers) {
    l.ln1_gamma = Tensor<Real>({h}, Real{1});
    l.ln1_beta = Tensor<Real>({h});
    l.wq = Tensor<Real>({h, h});
    l.bq = Tensor<Real>({h});
    l.wk = Tensor<Real>({h, h});
    l.bk = Tensor<Real>({h});
    l.wv = Tensor<Real>({h, h});
    l.bv = Tensor<Real>({h});
    l.wo = Tensor<Real>({h, h});
    l.bo = Tensor<Real>({h});
    l.ln2_gamma = Tensor<Real>({h}, Real{1});
    l.ln2_beta = Tensor<Real>({h});
    l.w1 = Tensor<Real>({h, ff});
    l.b1 = Tensor<Real>({ff});
    l.w2 = Tensor<Real>({ff, h});
    l.b2 = Tensor<Real>({h});
  }
  p.lnf_gamma = Tensor<Real>({h}, Real{1});
  p.lnf_beta = Tensor<Real>({h});

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(0.0, 0.02);
  p.visit([&](const std::string&, Tensor<Real>& t) {
    if (t.shape.size() == 2) {
      for (auto& v : t.data) v = static_cast<Real>(nd(rng));
    }
  });
  return p;
}

template <class To, class From>
Parameters<To> cast_parameters(const Parameters<From>& from) {
  std::vector<const Tensor<From>*> src;
  from.visit([&](const std::string&, const Tensor<From>& t) { src.push_back(&t); });
  Parameters<To> out;
  out.layers.resize(from.layers.size());
  std::size_t i = 0;
  out.visit([&](const std::string&, Tensor<To>& t) {
    const auto& s = *src[i++];
    t.shape = s.shape;
    t.data.assign(s.data.begin(), s.data.end());
    t.requires_grad = s.requires_grad;
  });
  return out;
}

namespace {

template <class Real, class Leaf>
BoundModel bind_with(ad::Tape<Real>& tape, Leaf&& leaf, auto& params, auto* prompts) {
  BoundModel m;
  m.tok_emb = leaf(params.tok_emb);
  m.pos_emb = leaf(params.pos_emb);
  m.lex_emb = leaf(params.lex_emb);
  m.ent_emb = leaf(params.ent_emb);
  for (auto& l : params.layers) {
    m.layers.push_back({leaf(l.ln1_gamma), leaf(l.ln1_beta), leaf(l.wq), leaf(l.bq), leaf(l.wk), leaf(l.bk),
                        leaf(l.wv), leaf(l.bv), leaf(l.wo), leaf(l.bo), leaf(l.ln2_gamma), leaf(l.ln2_beta),
                        leaf(l.w1), leaf(l.b1), leaf(l.w2), leaf(l.b2)});
  }
  m.lnf_gamma = leaf(params.lnf_gamma);
  m.lnf_beta = leaf(params.lnf_beta);
  if (prompts != nullptr) m.prompts = leaf(prompts->matrix);
  (void)tape;
  return m;
}

template <class Real>
ad::Var attend(ad::Tape<Real>& tape, ad::Var q, ad::Var k, ad::Var v, const ad::Mask& mask) {
  const auto dk = static_cast<Real>(tape.value(q).cols());
  auto scores = ad::scale(tape, ad::matmul_nt(tape, q, k), Real{1} / std::sqrt(dk));
  return ad::matmul(tape, ad::softmax_rows(tape, scores, mask), v);
}

template <class Real>
ad::Var maybe_dropout(ad::Tape<Real>& tape, ad::Var x, const ModelConfig& config, const ForwardOptions& options) {
  if (!options.train || config.dropout <= 0.0) return x;
  if (options.rng == nullptr) throw ConfigError("training-mode forward with dropout needs an rng");
  return ad::dropout(tape, x, static_cast<Real>(config.dropout), *options.rng);
}

}  // namespace

template <class Real>
BoundModel bind(ad::Tape<Real>& tape, Parameters<Real>& params, PromptEmbeddings<Real>* prompts) {
  return bind_with<Real>(tape, [&](Tensor<Real>& t) { return tape.leaf(t); }, params, prompts);
}

template <class Real>
BoundModel bind_const(ad::Tape<Real>& tape, const Parameters<Real>& params, const PromptEmbeddings<Real>* prompts) {
  return bind_with<Real>(tape, [&](const Tensor<Real>& t) { return tape.constant(t); }, params, prompts);
}

template <class Real>
ad::Var embed(ad::Tape<Real>& tape, const BoundModel& model, const TokenSequence& seq, const ModelConfig& config) {
  if (!seq.consistent()) throw DimensionError("embed: token sequence lists differ in length");
  if (seq.size() == 0) throw DimensionError("embed: empty sequence");
  auto x = ad::embedding(tape, model.tok_emb, seq.ids);
  x = ad::add(tape, x, ad::embedding(tape, model.pos_emb, seq.position_ids));
  if (config.lexical) x = ad::add(tape, x, ad::embedding(tape, model.lex_emb, seq.lexical_tags));
  if (config.entity) x = ad::add(tape, x, ad::embedding(tape, model.ent_emb, seq.entity_flags));
  return x;
}

template <class Real>
ad::Var attention_head(ad::Tape<Real>& tape, ad::Var h, ad::Var wq, ad::Var wk, ad::Var wv, const ad::Mask& mask) {
  return attend(tape, ad::matmul(tape, h, wq), ad::matmul(tape, h, wk), ad::matmul(tape, h, wv), mask);
}

template <class Real>
ad::Var multi_head(ad::Tape<Real>& tape, ad::Var h, std::span<const HeadWeights> heads, ad::Var w_out,
                   const ad::Mask& mask) {
  if (heads.empty()) throw DimensionError("multi_head: no heads");
  std::vector<ad::Var> outs;
  for (const auto& w : heads) outs.push_back(attention_head(tape, h, w.wq, w.wk, w.wv, mask));
  const auto joined = outs.size() == 1 ? outs[0] : ad::concat_cols<Real>(tape, outs);
  return ad::matmul(tape, joined, w_out);
}

template <class Real>
ForwardResult<Real> forward(ad::Tape<Real>& tape, const BoundModel& model, const TokenSequence& seq,
                            const ModelConfig& config, ForwardOptions options) {
  if (seq.size() > config.max_len) {
    throw DimensionError("sequence of length " + std::to_string(seq.size()) + " exceeds max_len " +
                         std::to_string(config.max_len));
  }
  const auto embedded = embed(tape, model, seq, config);
  const auto prefixed = attach_prefix(tape, embedded, model.prompts ? &*model.prompts : nullptr, seq.loss_mask);
  const std::size_t n_heads = config.n_heads, dk = config.head_dim();
  const auto eps = static_cast<Real>(config.ln_eps);

  auto h = maybe_dropout(tape, prefixed.hidden, config, options);
  for (const auto& l : model.layers) {
    const auto a = ad::layer_norm(tape, h, l.ln1_gamma, l.ln1_beta, eps);
    const auto q = ad::add_bias(tape, ad::matmul(tape, a, l.wq), l.bq);
    const auto k = ad::add_bias(tape, ad::matmul(tape, a, l.wk), l.bk);
    const auto v = ad::add_bias(tape, ad::matmul(tape, a, l.wv), l.bv);
    ad::Var heads;
    if (n_heads == 1) {
      heads = attend(tape, q, k, v, prefixed.attention_mask);
    } else {
      std::vector<ad::Var> outs;
      for (std::size_t i = 0; i < n_heads; ++i) {
        outs.push_back(attend(tape, ad::slice_cols(tape, q, i * dk, dk), ad::slice_cols(tape, k, i * dk, dk),
                              ad::slice_cols(tape, v, i * dk, dk), prefixed.attention_mask));
      }
      heads = ad::concat_cols<Real>(tape, outs);
    }
    const auto attn = ad::add_bias(tape, ad::matmul(tape, heads, l.wo), l.bo);
    h = ad::add(tape, h, maybe_dropout(tape, attn, config, options));

    const auto m = ad::layer_norm(tape, h, l.ln2_gamma, l.ln2_beta, eps);
    const auto hidden = ad::gelu(tape, ad::add_bias(tape, ad::matmul(tape, m, l.w1), l.b1));
    const auto mlp = ad::add_bias(tape, ad::matmul(tape, hidden, l.w2), l.b2);
    h = ad::add(tape, h, maybe_dropout(tape, mlp, config, options));
  }
  if (prefixed.prefix_len > 0) h = ad::slice_rows(tape, h, prefixed.prefix_len, seq.size());
  h = ad::layer_norm(tape, h, model.lnf_gamma, model.lnf_beta, eps);
  return {ad::matmul_nt(tape, h, model.tok_emb), prefixed.prefix_len};
}

namespace {

struct Targets {
  std::vector<TokenId> ids;
  ad::Mask mask;
  std::size_t count = 0;
};

// Row t predicts token t + 1; the last row predicts nothing.
Targets shifted_targets(const TokenSequence& seq) {
  Targets t;
  const std::size_t n = seq.size();
  t.ids.assign(n, 0);
  t.mask.assign(n, 0);
  for (std::size_t i = 0; i + 1 < n; ++i) {
    t.ids[i] = seq.ids[i + 1];
    t.mask[i] = seq.loss_mask[i + 1] ? 1 : 0;
    t.count += t.mask[i];
  }
  return t;
}

}  // namespace

template <class Real>
ad::Var sequence_loss(ad::Tape<Real>& tape, const BoundModel& model, const TokenSequence& seq,
                      const ModelConfig& config, ForwardOptions options) {
  const auto targets = shifted_targets(seq);
  if (targets.count == 0) throw EmptyLossError("sequence has no loss-bearing target token");
  const auto out = forward(tape, model, seq, config, options);
  return ad::cross_entropy(tape, out.logits, targets.ids, targets.mask);
}

template <class Real>
ad::Var batch_loss(ad::Tape<Real>& tape, const BoundModel& model, std::span<const TokenSequence> batch,
                   const ModelConfig& config, LossWeighting weighting, ForwardOptions options) {
  std::vector<std::size_t> counts;
  std::size_t total = 0;
  for (const auto& s : batch) {
    counts.push_back(shifted_targets(s).count);
    total += counts.back();
  }
  if (total == 0) throw EmptyLossError("batch has no loss-bearing target token");
  std::optional<ad::Var> acc;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    if (counts[i] == 0) {
      if (weighting == LossWeighting::kDialogue) {
        throw EmptyLossError("dialogue-weighted loss over a sequence with no target token");
      }
      continue;
    }
    const Real w = weighting == LossWeighting::kToken
                       ? static_cast<Real>(static_cast<double>(counts[i]) / static_cast<double>(total))
                       : static_cast<Real>(1.0 / static_cast<double>(batch.size()));
    const auto term = ad::scale(tape, sequence_loss(tape, model, batch[i], config, options), w);
    acc = acc ? ad::add(tape, *acc, term) : term;
  }
  return *acc;
}

template <class Real>
Tensor<Real> forward_logits(const Parameters<Real>& params, const TokenSequence& seq, const ModelConfig& config,
                            const PromptEmbeddings<Real>* prompts) {
  ad::Tape<Real> tape;
  const auto model = bind_const(tape, params, prompts);
  return tape.value(forward(tape, model, seq, config).logits);
}

template <class Real>
double lm_loss(const Parameters<Real>& params, std::span<const TokenSequence> batch, const ModelConfig& config,
               LossWeighting weighting, const PromptEmbeddings<Real>* prompts) {
  ad::Tape<Real> tape;
  const auto model = bind_const(tape, params, prompts);
  return static_cast<double>(tape.value(batch_loss(tape, model, batch, config, weighting)).data[0]);
}

template <class Real>
std::vector<TokenId> generate(const Parameters<Real>& params, const TokenSequence& history, const ModelConfig& config,
                              const GenerateOptions& options, const PromptEmbeddings<Real>* prompts) {
  if (history.size() == 0 || history.size() >= config.max_len) {
    throw DimensionError("generation history must be non-empty and shorter than max_len");
  }
  if (options.strategy == GenerateOptions::Strategy::kTopK && options.top_k == 0) {
    throw ConfigError("top_k must be at least 1");
  }
  TokenSequence seq = history;
  std::mt19937_64 rng(options.seed);
  std::vector<TokenId> out;
  while (out.size() < options.max_new && seq.size() < config.max_len) {
    const auto logits = forward_logits(params, seq, config, prompts);
    const std::size_t vocab = logits.cols();
    const Real* last = logits.data.data() + (logits.rows() - 1) * vocab;
    TokenId next = 0;
    if (options.strategy == GenerateOptions::Strategy::kGreedy) {
      next = static_cast<TokenId>(std::max_element(last, last + vocab) - last);
    } else {
      std::vector<TokenId> order(vocab);
      std::iota(order.begin(), order.end(), 0);
      const std::size_t k = std::min(options.top_k, vocab);
      std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                        [&](TokenId a, TokenId b) { return last[a] > last[b] || (last[a] == last[b] && a < b); });
      const double top = static_cast<double>(last[order[0]]);
      std::vector<double> weights(k);
      for (std::size_t i = 0; i < k; ++i) weights[i] = std::exp(static_cast<double>(last[order[i]]) - top);
      std::discrete_distribution<std::size_t> dist(weights.begin(), weights.end());
      next = order[dist(rng)];
    }
    out.push_back(next);
    seq.ids.push_back(next);
    seq.lexical_tags.push_back(static_cast<std::int32_t>(LexTag::kOther));
    seq.entity_flags.push_back(0);
    seq.loss_mask.push_back(0);
    seq.position_ids.push_back(static_cast<std::int32_t>(seq.size() - 1));
    if (next == Vocab::kEos) break;
  }
  return out;
}

#define ENTLM_INSTANTIATE(Real)                                                                                   \
  template Parameters<Real> init_parameters<Real>(const ModelConfig&, std::uint64_t);                            \
  template BoundModel bind<Real>(ad::Tape<Real>&, Parameters<Real>&, PromptEmbeddings<Real>*);                    \
  template BoundModel bind_const<Real>(ad::Tape<Real>&, const Parameters<Real>&, const PromptEmbeddings<Real>*);  \
  template ad::Var embed<Real>(ad::Tape<Real>&, const BoundModel&, const TokenSequence&, const ModelConfig&);     \
  template ad::Var attention_head<Real>(ad::Tape<Real>&, ad::Var, ad::Var, ad::Var, ad::Var, const ad::Mask&);    \
  template ad::Var multi_head<Real>(ad::Tape<Real>&, ad::Var, std::span<const HeadWeights>, ad::Var,              \
                                    const ad::Mask&);                                                             \
  template ForwardResult<Real> forward<Real>(ad::Tape<Real>&, const BoundModel&, const TokenSequence&,            \
                                             const ModelConfig&, ForwardOptions);                                 \
  template ad::Var sequence_loss<Real>(ad::Tape<Real>&, const BoundModel&, const TokenSequence&,                  \
                                       const ModelConfig&, ForwardOptions);                                       \
  template ad::Var batch_loss<Real>(ad::Tape<Real>&, const BoundModel&, std::span<const TokenSequence>,           \
                                    const ModelConfig&, LossWeighting, ForwardOptions);                           \
  template Tensor<Real> forward_logits<Real>(const Parameters<Real>&, const TokenSequence&, const ModelConfig&,   \
                                             const PromptEmbeddings<Real>*);                                      \
  template double lm_loss<Real>(const Parameters<Real>&, std::span<const TokenSequence>, const ModelConfig&,      \
                                LossWeighting, const PromptEmbeddings<Real>*);                                    \
  template std::vector<TokenId> generate<Real>(const Parameters<Real>&, const TokenSequence&, const ModelConfig&, \
                                               const GenerateOptions&, const PromptEmbeddings<Real>*);

ENTLM_INSTANTIATE(float)
ENTLM_INSTANTIATE(double)

#undef ENTLM_INSTANTIATE

template Parameters<float> cast_parameters<float, double>(const Parameters<double>&);
template Parameters<double> cast_parameters<double, float>(const Parameters<float>&);
template Parameters<float> cast_parameters<float, float>(const Parameters<float>&);
template Parameters<double> cast_parameters<double, double>(const Parameters<double>&);

}  // namespace entlm
