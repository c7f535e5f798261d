#pragma once

#include <cstdint>

#include "entlm/autodiff.hpp"
#include "entlm/tensor.hpp"

namespace entlm {

// Checkpoint name reserved for the prompt matrix.
inline constexpr const char* kPromptTensorName = "prompt.embeddings";

// V_p x H trainable prefix vectors.
template <class Real>
struct PromptEmbeddings {
  Tensor<Real> matrix;

  std::size_t count() const { return matrix.rows(); }
  std::size_t hidden() const { return matrix.cols(); }
};

// normal(0, 0.02) entries, deterministic under seed. count == 0 throws
// ConfigError.
template <class Real>
PromptEmbeddings<Real> init_prompts(std::size_t count, std::size_t hidden, std::uint64_t seed);

template <class Real>
struct PrefixedInput {
  ad::Var hidden;               // (V_p + T) x H, prompt rows first
  std::size_t prefix_len = 0;   // V_p
  ad::Mask loss_mask;           // V_p + T entries, zero on prompt rows
  ad::Mask attention_mask;      // (V_p + T)^2 lower-triangular keep flags
};

// Prepends the prompt rows to an embedded sequence. Prompt rows get no
// positional, lexical or entity additions (they are used as given). Every
// real token may attend to every prompt position. With `prompts` absent the
// input passes through with a plain causal mask.
template <class Real>
PrefixedInput<Real> attach_prefix(ad::Tape<Real>& tape, ad::Var embedded, const ad::Var* prompts,
                                  std::span<const std::uint8_t> loss_mask);

// Lower-triangular keep flags for n positions.
ad::Mask causal_mask(std::size_t n);

}  // namespace entlm
