#pragma once

#include <set>
#include <string>
#include <vector>

#include "entlm/model.hpp"
#include "entlm/prompt.hpp"

namespace entlm {

enum class TuneMode { kPretrain, kFinetune, kPtune };

// "pretrain" | "finetune" | "ptune". Throws ConfigError.
TuneMode parse_tune_mode(const std::string& text);
std::string to_string(TuneMode mode);

// Names of the trainable tensors; everything else is frozen.
struct FreezeSpec {
  std::set<std::string> trainable;
};

// pretrain / finetune: every backbone tensor, minus disabled channel tables.
// ptune: exactly the prompt matrix, plus the enabled channel tables when
// `tune_channels` is set.
FreezeSpec freeze_spec(TuneMode mode, const ModelConfig& config, bool tune_channels = false);

template <class Real>
struct TrainableTensor {
  std::string name;
  Tensor<Real>* tensor = nullptr;
  bool decay = false;  // matrices and embedding tables; not gains or biases
};

// Sets requires_grad on exactly the trainable tensors and returns them in
// checkpoint order, prompt last. A name that matches nothing throws
// ConfigError.
template <class Real>
std::vector<TrainableTensor<Real>> apply_freeze(Parameters<Real>& params, PromptEmbeddings<Real>* prompts,
                                                const FreezeSpec& spec);

}  // namespace entlm
