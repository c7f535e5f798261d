#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "entlm/corpus.hpp"
#include "entlm/model.hpp"
#include "entlm/prefix_tuning.hpp"

namespace entlm {

// Linear warmup from 0, half-cosine from peak to min, then constant min.
struct ScheduleConfig {
  double peak = 1e-4;
  double min = 5e-6;
  std::size_t warmup_steps = 2000;
  std::size_t decay_end_step = 100000;

  // Throws ConfigError.
  void validate() const;
};

double lr_at(std::size_t step, const ScheduleConfig& schedule);

// Scales every gradient by threshold / norm when the global L2 norm exceeds
// `threshold`; returns the factor used (1 when unchanged). Missing gradients
// count as zero. Throws NumericError on a non-finite gradient, ConfigError on
// threshold <= 0.
template <class Real>
double clip_grad_norm(std::span<const TrainableTensor<Real>> params, double threshold);

template <class Real>
double global_grad_norm(std::span<const TrainableTensor<Real>> params);

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.95;
  double eps = 1e-8;
  double weight_decay = 0.1;
};

// Moments keyed by tensor name.
struct OptimizerState {
  std::size_t step = 0;
  std::map<std::string, std::vector<double>> m;
  std::map<std::string, std::vector<double>> v;
};

// One bias-corrected Adam update with decoupled decay
//   w <- w - lr * m_hat / (sqrt(v_hat) + eps) - lr * wd * w   (decay only where flagged)
// Nothing is written if any new value would be non-finite (NumericError).
template <class Real>
void adamw_step(std::span<const TrainableTensor<Real>> params, OptimizerState& state, double lr,
                const AdamWConfig& config);

struct RunConfig {
  TuneMode mode = TuneMode::kPretrain;
  std::uint64_t seed = 1234;

  std::filesystem::path corpus;
  std::filesystem::path vocab;            // built from the corpus when empty
  std::filesystem::path init_checkpoint;  // finetune / ptune
  std::filesystem::path nouns, adjectives, verbs;

  ModelConfig model;  // vocab is taken from the vocab file
  std::size_t batch_size = 32;
  std::size_t epochs = 3;
  std::size_t max_steps = 0;  // 0: run every epoch
  ScheduleConfig schedule;
  double clip = 0.5;
  AdamWConfig adamw;

  LossMaskPolicy loss_mask = LossMaskPolicy::kAllTokens;
  LossWeighting loss_weighting = LossWeighting::kToken;
  std::string tagger = "none";
  bool splice = false;
  std::size_t prompt_tokens = 50;
  bool tune_channels = true;

  SplitRatio split{100, 1};
  std::size_t eval_every = 0;        // 0: evaluate after the last step only
  std::size_t checkpoint_every = 0;  // 0: final checkpoint only
  bool log_wall_time = false;

  void validate() const;
};

// Defaults for a mode: pretrain lr 1e-4 / 3 epochs / 100:1 / all tokens;
// finetune and ptune lr 5e-5 / 6 epochs / 8:2 / response only.
RunConfig default_run_config(TuneMode mode);

// key = value lines in file order; '#' starts a comment. Throws ConfigError.
std::vector<std::pair<std::string, std::string>> parse_key_values(const std::string& text);

// `mode` (or `default_mode` when absent) selects the defaults the other keys
// override. Relative paths resolve against `base_dir`. Throws ConfigError.
RunConfig parse_run_config(const std::string& text, const std::filesystem::path& base_dir = {},
                           TuneMode default_mode = TuneMode::kPretrain);
RunConfig load_run_config(const std::filesystem::path& path, TuneMode default_mode = TuneMode::kPretrain);
std::string to_text(const RunConfig& config);

struct MetricsRow {
  std::size_t step = 0;
  double lr = 0;
  double loss = 0;
  double ppl = 0;
  std::optional<double> eval_ppl;
  std::optional<double> seconds;

  bool operator==(const MetricsRow&) const = default;
};

// CSV with header step,lr,loss,ppl,eval_ppl,seconds; empty cells for absent
// values; 17 significant digits.
struct MetricsLog {
  std::vector<MetricsRow> rows;

  std::string to_csv() const;
  static MetricsLog from_csv(const std::string& text);
  void save(const std::filesystem::path& path) const;
  static MetricsLog load(const std::filesystem::path& path);

  bool operator==(const MetricsLog&) const = default;
};

struct PplResult {
  double nll_sum = 0;
  std::size_t tokens = 0;

  double mean_nll() const { return nll_sum / static_cast<double>(tokens); }
  double ppl() const;
};

// exp of the token-weighted mean masked NLL, accumulated in double; dropout
// off. Sequences are evaluated in parallel and summed in order. Throws
// EmptyLossError when no sequence has a target.
template <class Real>
PplResult evaluate_ppl(const Parameters<Real>& params, std::span<const TokenSequence> data, const ModelConfig& config,
                       const PromptEmbeddings<Real>* prompts = nullptr);

struct Dataset {
  std::vector<TokenSequence> train;
  std::vector<TokenSequence> test;
};

// Splits dialogues, then linearizes both parts under the run's mask policy,
// tagger and splicing switch.
Dataset prepare_dataset(const RunConfig& run, const Vocab& vocab, std::span<const Dialogue> corpus);

struct TrainState {
  ModelConfig config;
  Parameters<float> params;
  std::optional<PromptEmbeddings<float>> prompts;
};

struct TrainResult {
  MetricsLog log;
  std::size_t steps = 0;
  double final_eval_ppl = 0;
};

// The training loop. Updates `state` in place. When `out_dir` is given,
// writes metrics.csv, checkpoint.ckpt at the checkpoint cadence and
// model.ckpt at the end. On a non-finite loss, saves the last good state to
// last_good.ckpt (when `out_dir` is given) and throws NumericError.
TrainResult train(const RunConfig& run, TrainState& state, const Dataset& data,
                  const std::optional<std::filesystem::path>& out_dir = std::nullopt);

}  // namespace entlm
