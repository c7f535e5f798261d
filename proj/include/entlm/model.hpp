#pragma once

// Decoder-only transformer with four-channel input embeddings.
//
//   E = E_word[id] + E_pos[position] + E_lex[tag] + E_ent[flag]
//
// followed by pre-norm blocks (masked multi-head attention, GELU MLP, both
// with residual connections), a final layer norm and an LM head tied to the
// word embedding table. A disabled lexical/entity channel is skipped, which
// is the same as adding an all-zero table.

#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "entlm/autodiff.hpp"
#include "entlm/prompt.hpp"
#include "entlm/sequence.hpp"
#include "entlm/tensor.hpp"

namespace entlm {

struct ModelConfig {
  std::size_t n_layers = 2;
  std::size_t n_heads = 4;
  std::size_t hidden = 48;
  std::size_t vocab = 0;
  std::size_t max_len = 128;
  std::size_t ff_dim = 0;  // 0 means 4 * hidden
  bool lexical = false;
  bool entity = false;
  double dropout = 0.1;
  double ln_eps = 1e-5;

  std::size_t head_dim() const { return hidden / n_heads; }
  std::size_t ff() const { return ff_dim == 0 ? 4 * hidden : ff_dim; }

  // Throws ConfigError.
  void validate() const;

  // key=value lines, stable order; used inside checkpoints.
  std::string to_text() const;
  static ModelConfig from_text(const std::string& text);

  bool operator==(const ModelConfig&) const = default;
};

template <class Real>
struct LayerParameters {
  Tensor<Real> ln1_gamma, ln1_beta;
  Tensor<Real> wq, bq, wk, bk, wv, bv, wo, bo;
  Tensor<Real> ln2_gamma, ln2_beta;
  Tensor<Real> w1, b1, w2, b2;
};

template <class Real>
struct Parameters {
  Tensor<Real> tok_emb;  // V x H, also the LM head
  Tensor<Real> pos_emb;  // max_len x H
  Tensor<Real> lex_emb;  // 4 x H
  Tensor<Real> ent_emb;  // 2 x H
  std::vector<LayerParameters<Real>> layers;
  Tensor<Real> lnf_gamma, lnf_beta;

  // f(name, tensor) for every tensor in a fixed order.
  template <class F>
  void visit(F&& f) {
    visit_impl(*this, f);
  }
  template <class F>
  void visit(F&& f) const {
    visit_impl(*this, f);
  }

  std::size_t count() const {
    std::size_t n = 0;
    visit([&](const std::string&, const Tensor<Real>& t) { n += t.numel(); });
    return n;
  }

 private:
  template <class Self, class F>
  static void visit_impl(Self& self, F& f) {
    f("tok_emb", self.tok_emb);
    f("pos_emb", self.pos_emb);
    f("lex_emb", self.lex_emb);
    f("ent_emb", self.ent_emb);
    for (std::size_t i = 0; i < self.layers.size(); ++i) {
      auto& l = self.layers[i];
      const std::string p = "layers." + std::to_string(i) + ".";
      f(p + "ln1.gamma", l.ln1_gamma);
      f(p + "ln1.beta", l.ln1_beta);
      f(p + "attn.wq", l.wq);
      f(p + "attn.bq", l.bq);
      f(p + "attn.wk", l.wk);
      f(p + "attn.bk", l.bk);
      f(p + "attn.wv", l.wv);
      f(p + "attn.bv", l.bv);
      f(p + "attn.wo", l.wo);
      f(p + "attn.bo", l.bo);
      f(p + "ln2.gamma", l.ln2_gamma);
      f(p + "ln2.beta", l.ln2_beta);
      f(p + "mlp.w1", l.w1);
      f(p + "mlp.b1", l.b1);
      f(p + "mlp.w2", l.w2);
      f(p + "mlp.b2", l.b2);
    }
    f("lnf.gamma", self.lnf_gamma);
    f("lnf.beta", self.lnf_beta);
  }
};

// Weight tables ~ normal(0, 0.02); biases and norm offsets 0; norm gains 1.
template <class Real>
Parameters<Real> init_parameters(const ModelConfig& config, std::uint64_t seed);

template <class To, class From>
Parameters<To> cast_parameters(const Parameters<From>& from);

// Parameters as tape variables, for one forward/backward pass.
struct BoundLayer {
  ad::Var ln1_gamma, ln1_beta, wq, bq, wk, bk, wv, bv, wo, bo, ln2_gamma, ln2_beta, w1, b1, w2, b2;
};

struct BoundModel {
  ad::Var tok_emb, pos_emb, lex_emb, ent_emb;
  std::vector<BoundLayer> layers;
  ad::Var lnf_gamma, lnf_beta;
  std::optional<ad::Var> prompts;
};

// Leaves whose gradients land in the tensors' grad fields.
template <class Real>
BoundModel bind(ad::Tape<Real>& tape, Parameters<Real>& params, PromptEmbeddings<Real>* prompts = nullptr);

// Constant copies; no gradients.
template <class Real>
BoundModel bind_const(ad::Tape<Real>& tape, const Parameters<Real>& params,
                      const PromptEmbeddings<Real>* prompts = nullptr);

struct ForwardOptions {
  bool train = false;               // enables dropout
  std::mt19937_64* rng = nullptr;   // required when train && dropout > 0
};

// T x H fused input embedding. Ids, tags, flags or positions outside their
// tables throw VocabError / DimensionError.
template <class Real>
ad::Var embed(ad::Tape<Real>& tape, const BoundModel& model, const TokenSequence& seq, const ModelConfig& config);

// softmax(Q K^T / sqrt(d_k)) V for one head, with Q = h W_Q etc.
template <class Real>
ad::Var attention_head(ad::Tape<Real>& tape, ad::Var h, ad::Var wq, ad::Var wk, ad::Var wv, const ad::Mask& mask);

struct HeadWeights {
  ad::Var wq, wk, wv;
};

// Concat(head_1 .. head_h) W.
template <class Real>
ad::Var multi_head(ad::Tape<Real>& tape, ad::Var h, std::span<const HeadWeights> heads, ad::Var w_out,
                   const ad::Mask& mask);

template <class Real>
struct ForwardResult {
  ad::Var logits;              // T x V over the real tokens only
  std::size_t prefix_len = 0;  // prompt rows that preceded them
};

// Throws DimensionError if the sequence is longer than max_len.
template <class Real>
ForwardResult<Real> forward(ad::Tape<Real>& tape, const BoundModel& model, const TokenSequence& seq,
                            const ModelConfig& config, ForwardOptions options = {});

// Mean next-token NLL over the targets selected by seq.loss_mask. Throws
// EmptyLossError when no target is selected.
template <class Real>
ad::Var sequence_loss(ad::Tape<Real>& tape, const BoundModel& model, const TokenSequence& seq,
                      const ModelConfig& config, ForwardOptions options = {});

enum class LossWeighting {
  kToken,     // every target token weighs the same across the batch
  kDialogue,  // per-sequence means, averaged over sequences
};

template <class Real>
ad::Var batch_loss(ad::Tape<Real>& tape, const BoundModel& model, std::span<const TokenSequence> batch,
                   const ModelConfig& config, LossWeighting weighting, ForwardOptions options = {});

// Eval-mode conveniences over their own tape.
template <class Real>
Tensor<Real> forward_logits(const Parameters<Real>& params, const TokenSequence& seq, const ModelConfig& config,
                            const PromptEmbeddings<Real>* prompts = nullptr);

template <class Real>
double lm_loss(const Parameters<Real>& params, std::span<const TokenSequence> batch, const ModelConfig& config,
               LossWeighting weighting = LossWeighting::kToken, const PromptEmbeddings<Real>* prompts = nullptr);

struct GenerateOptions {
  enum class Strategy { kGreedy, kTopK };
  Strategy strategy = Strategy::kGreedy;
  std::size_t top_k = 5;
  std::size_t max_new = 64;
  std::uint64_t seed = 0;
};

// Autoregressive decoding from `history` (which must be shorter than
// max_len). Stops after emitting EOS, after max_new tokens, or when the
// context is full. New tokens are tagged OTHER with entity flag 0.
template <class Real>
std::vector<TokenId> generate(const Parameters<Real>& params, const TokenSequence& history, const ModelConfig& config,
                              const GenerateOptions& options, const PromptEmbeddings<Real>* prompts = nullptr);

}  // namespace entlm
