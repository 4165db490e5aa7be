#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "pararec/attention.hpp"
#include "pararec/config.hpp"
#include "pararec/data.hpp"
#include "pararec/decoder.hpp"
#include "pararec/encoder.hpp"
#include "pararec/gradcheck.hpp"
#include "pararec/lexicon.hpp"
#include "pararec/metrics.hpp"

namespace pararec {

// The assembled recognizer: encoder -> vertical attention -> per-line LSTM
// -> class projection. One instance per training/eval run; forward state is
// cached per sample, so a model instance is single-threaded.
class Model {
 public:
  Model(const RunConfig& cfg, const std::u32string& alphabet);

  void init_params(Rng& rng);
  void collect_params(ParamSet& ps);
  ParamSet& params() { return params_; }
  int classes() const { return static_cast<int>(alphabet_.size()) + 1; }
  const std::u32string& alphabet() const { return alphabet_; }
  const RunConfig& config() const { return config_; }
  Encoder& encoder() { return encoder_; }
  // CTC-only training for the line-level pretraining stage.
  void set_lambda(real v) { config_.lambda = v; }

  struct SampleLoss {
    real total = 0, ctc = 0, ce = 0;
    bool skipped = false;  // infeasible CTC target
  };

  // Forward + full backward for one sample; gradients accumulate into the
  // registered parameter tensors. use_dropout=false gives the deterministic
  // path the gradient checker differentiates.
  SampleLoss train_sample(const ParagraphSample& sample, Rng& dropout_rng,
                          bool use_dropout);

  // Forward pass only, identical to the dropout-free training path.
  SampleLoss forward_loss(const ParagraphSample& sample);

  // Inference per Algorithm-style control flow: steps until the stop signal
  // or max_line_length; returns one posterior matrix per emitted line.
  std::vector<Tensor> infer(const Tensor& image) ;

  std::string greedy_text(const std::vector<Tensor>& line_probs) const;

 private:
  SampleLoss run_sample(const ParagraphSample& sample, Rng& dropout_rng,
                        bool use_dropout, bool do_backward);

  RunConfig config_;
  std::u32string alphabet_;
  Encoder encoder_;
  AttentionParams attention_;
  LstmParams lstm_;
  ClassProjection projection_;
  ParamSet params_;
};

// Plain SGD; Adam state allocated lazily when selected.
class Optimizer {
 public:
  Optimizer(std::string kind, real learning_rate);
  void step(ParamSet& params);

 private:
  std::string kind_;
  real lr_;
  long t_ = 0;
  std::vector<std::vector<real>> m_, v_;
};

struct IterationStats {
  int iteration = 0;
  real total = 0, ctc = 0, ce = 0;
};

// Mini-batch SGD over a fixed in-memory dataset; deterministic given the
// seed. Throws NumericError with iteration context when the loss or a
// parameter goes non-finite.
class Trainer {
 public:
  Trainer(Model& model, std::vector<ParagraphSample> dataset,
          const RunConfig& cfg);

  IterationStats run_iteration();
  const std::vector<IterationStats>& history() const { return history_; }
  int iterations_done() const { return static_cast<int>(history_.size()); }
  // Overrides the joint-loss weight (used by line-level pretraining).
  void set_lambda(real lambda) { lambda_override_ = lambda; }

 private:
  Model& model_;
  std::vector<ParagraphSample> dataset_;
  RunConfig config_;
  Optimizer optimizer_;
  Rng dropout_rng_, order_rng_, augment_rng_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
  std::optional<real> lambda_override_;
  std::vector<IterationStats> history_;
};

struct EvalOptions {
  bool greedy = true;
  bool wbs = false;
  WbsOptions wbs_options;
  // When empty, the corpus defaults to the transcripts of the split being
  // evaluated.
  std::vector<std::string> corpus;
};

struct EvalResult {
  std::optional<EvalReport> greedy;
  std::optional<EvalReport> wbs;
  std::vector<std::string> refs, greedy_hyps, wbs_hyps;
  std::vector<int> predicted_line_counts, true_line_counts;
};

EvalResult evaluate_split(Model& model, const std::vector<ParagraphSample>& samples,
                          const EvalOptions& options);

// Scales images into the geometry the model was configured for.
ParagraphSample preprocess_sample(const ParagraphSample& raw, int target_h,
                                  int target_w);

// Finite-difference sweep over every parameter tensor of a miniature model
// driven through the full joint loss (64-bit, dropout off). One report
// entry per tensor.
std::vector<GradCheckEntry> model_gradient_check(std::uint64_t seed);

}  // namespace pararec
