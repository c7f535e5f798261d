#include "entlm/prefix_tuning.hpp"

#include "entlm/errors.hpp"

namespace entlm {

TuneMode parse_tune_mode(const std::string& text) {
  if (text == "pretrain") return TuneMode::kPretrain;
  if (text == "finetune") return TuneMode::kFinetune;
  if (text == "ptune") return TuneMode::kPtune;
  throw ConfigError("unknown mode '" + text + "' (expected pretrain, finetune or ptune)");
}

std::string to_string(TuneMode mode) {
  switch (mode) {
    case TuneMode::kPretrain:
      return "pretrain";
    case TuneMode::kFinetune:
      return "finetune";
    case TuneMode::kPtune:
      return "ptune";
  }
  return "?";
}

FreezeSpec freeze_spec(TuneMode mode, const ModelConfig& config, bool tune_channels) {
  FreezeSpec spec;
  if (mode == TuneMode::kPtune) {
    spec.trainable.insert(kPromptTensorName);
    if (tune_channels && config.lexical) spec.trainable.insert("lex_emb");
    if (tune_channels && config.entity) spec.trainable.insert("ent_emb");
    return spec;
  }
  Parameters<float> shapes;
  shapes.layers.resize(config.n_layers);
  shapes.visit([&](const std::string& name, const Tensor<float>&) {
    if (name == "lex_emb" && !config.lexical) return;
    if (name == "ent_emb" && !config.entity) return;
    spec.trainable.insert(name);
  });
  return spec;
}

template <class Real>
std::vector<TrainableTensor<Real>> apply_freeze(Parameters<Real>& params, PromptEmbeddings<Real>* prompts,
                                                const FreezeSpec& spec) {
  std::vector<TrainableTensor<Real>> view;
  std::set<std::string> seen;
  auto consider = [&](const std::string& name, Tensor<Real>& t) {
    const bool on = spec.trainable.count(name) != 0;
    t.requires_grad = on;
    if (!on) return;
    seen.insert(name);
    view.push_back({name, &t, t.shape.size() == 2});
  };
  params.visit(consider);
  if (prompts != nullptr) consider(kPromptTensorName, prompts->matrix);
  for (const auto& name : spec.trainable) {
    if (seen.count(name) == 0) throw ConfigError("freeze spec names unknown tensor '" + name + "'");
  }
  return view;
}

template std::vector<TrainableTensor<float>> apply_freeze<float>(Parameters<float>&, PromptEmbeddings<float>*,
                                                                 const FreezeSpec&);
template std::vector<TrainableTensor<double>> apply_freeze<double>(Parameters<double>&, PromptEmbeddings<double>*,
                                                                   const FreezeSpec&);

}  // namespace entlm
