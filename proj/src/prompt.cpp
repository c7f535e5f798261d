#include "entlm/prompt.hpp"

#include <random>

namespace entlm {

template <class Real>
PromptEmbeddings<Real> init_prompts(std::size_t count, std::size_t hidden, std::uint64_t seed) {
  if (count == 0) throw ConfigError("prompt token count must be at least 1");
  if (hidden == 0) throw ConfigError("prompt hidden size must be positive");
  PromptEmbeddings<Real> p{Tensor<Real>({count, hidden})};
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(0.0, 0.02);
  for (auto& v : p.matrix.data) v = static_cast<Real>(nd(rng));
  return p;
}

ad::Mask causal_mask(std::size_t n) {
  ad::Mask mask(n * n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j <= i; ++j) mask[i * n + j] = 1;
  }
  return mask;
}

template <class Real>
PrefixedInput<Real> attach_prefix(ad::Tape<Real>& tape, ad::Var embedded, const ad::Var* prompts,
                                  std::span<const std::uint8_t> loss_mask) {
  const std::size_t t = tape.value(embedded).rows();
  if (loss_mask.size() != t) {
    throw DimensionError("attach_prefix: " + std::to_string(loss_mask.size()) + " loss-mask entries for " +
                         std::to_string(t) + " tokens");
  }
  PrefixedInput<Real> out;
  if (prompts == nullptr) {
    out.hidden = embedded;
  } else {
    const auto& pv = tape.value(*prompts);
    if (pv.cols() != tape.value(embedded).cols()) {
      throw DimensionError("attach_prefix: prompt matrix " + shape_str(pv.shape) + " vs embedding " +
                           shape_str(tape.value(embedded).shape));
    }
    out.prefix_len = pv.rows();
    const ad::Var parts[] = {*prompts, embedded};
    out.hidden = ad::concat_rows<Real>(tape, parts);
  }
  out.loss_mask.assign(out.prefix_len, 0);
  out.loss_mask.insert(out.loss_mask.end(), loss_mask.begin(), loss_mask.end());
  out.attention_mask = causal_mask(out.prefix_len + t);
  return out;
}

template PromptEmbeddings<float> init_prompts<float>(std::size_t, std::size_t, std::uint64_t);
template PromptEmbeddings<double> init_prompts<double>(std::size_t, std::size_t, std::uint64_t);
template PrefixedInput<float> attach_prefix<float>(ad::Tape<float>&, ad::Var, const ad::Var*,
                                                   std::span<const std::uint8_t>);
template PrefixedInput<double> attach_prefix<double>(ad::Tape<double>&, ad::Var, const ad::Var*,
                                                     std::span<const std::uint8_t>);

}  // namespace entlm
