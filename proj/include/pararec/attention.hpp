#pragma once

#include <array>
#include <functional>
#include <string>
#include <vector>

#include "pararec/param.hpp"
#include "pararec/tensor.hpp"

namespace pararec {

// Decision vector layout: component 0 is "stop" (paragraph ends before this
// step emits a line), component 1 is "continue".
constexpr int kStopClass = 0;
constexpr int kContinueClass = 1;

struct AttentionConfig {
  int att_dim = 32;           // shared multiscale projection width
  int coverage_channels = 8;  // filters of the 1-d conv over past weights
  int coverage_kernel = 7;
};

struct AttentionParams {
  AttentionParams() = default;
  AttentionParams(int feat_channels, int hidden_dim,
                  const AttentionConfig& cfg);

  void init(Rng& rng);
  void collect_params(ParamSet& ps, const std::string& prefix);
  int att_dim() const { return w_feat.dim(0); }
  int feat_channels() const { return w_feat.dim(1); }
  int coverage_channels() const { return w_cov.dim(1); }
  int hidden_dim() const { return w_hidden.dim(1); }

  Tensor w_feat;      // [a, C] projection of the row descriptor
  Tensor w_cov;       // [a, K] projection of the coverage context
  Tensor w_hidden;    // [a, D] projection of the carried decoder state
  Tensor score_v;     // [a]    one score per row
  Tensor cov_kernel;  // [K, kernel] 1-d conv over the coverage vector
  Tensor cov_bias;    // [K]
  Tensor end_weight;  // [2, a+D] stop/continue logits
  Tensor end_bias;    // [2]
  Tensor grad_w_feat, grad_w_cov, grad_w_hidden, grad_score_v;
  Tensor grad_cov_kernel, grad_cov_bias, grad_end_weight, grad_end_bias;
};

struct AttentionStepOutput {
  Tensor line;               // [W, C] weighted sum of feature rows
  std::vector<real> beta;    // [H] attention weights, non-negative, sum 1
  std::array<real, 2> decision;  // softmax over (stop, continue)
};

// l_t for explicit weights; step() uses this with its computed beta.
Tensor line_from_weights(const Tensor& features, const std::vector<real>& beta);

// One paragraph's worth of vertical attention. Steps are strictly
// sequential: each consumes the running coverage (sum of all previous
// attention weights) and the decoder hidden state after the previous line.
// backward_step must be called in exact reverse step order.
class ParagraphAttention {
 public:
  ParagraphAttention(const Tensor& features, const AttentionParams& params);

  AttentionStepOutput step(const std::vector<real>& h_prev);
  int steps_taken() const { return static_cast<int>(cache_.size()); }

  // grad_line may be null (final supervision step has no line output);
  // grad_decision_logits is d(loss)/d(end-detector logits). Returns the
  // gradient w.r.t. the h_prev this step consumed and accumulates feature
  // and parameter gradients.
  std::vector<real> backward_step(const Tensor* grad_line,
                                  const std::array<real, 2>& grad_decision_logits,
                                  AttentionParams& params);

  const Tensor& feature_grad() const { return feature_grad_; }

 private:
  struct StepCache {
    std::vector<real> coverage;  // value seen by this step
    std::vector<real> h_prev;
    Tensor context;  // [H, K]
    Tensor scores;   // [H, a] tanh outputs
    std::vector<real> beta;
    std::vector<int> pool_argmax;  // per component of the max-pooled score
    std::array<real, 2> decision;
  };

  const Tensor* features_;
  const AttentionParams* params_;
  Tensor fprime_;               // [H, C] width-means of the rows
  std::vector<real> coverage_;  // running sum of betas
  std::vector<StepCache> cache_;
  Tensor feature_grad_;
  std::vector<real> coverage_grad_;  // reverse-pass accumulator
  int back_cursor_ = -1;
};

// Joint training objective: sum of per-line CTC losses plus lambda times the
// cross-entropy of each stop/continue decision. Targets are "continue" for
// the first L steps and "stop" at step L+1.
struct JointLossResult {
  bool feasible = true;
  int infeasible_line = -1;
  real total = 0, ctc_sum = 0, ce_sum = 0;
  std::vector<Tensor> line_logit_grads;  // per line, w.r.t. projection logits
  std::vector<std::array<real, 2>> decision_logit_grads;  // lambda included
};

JointLossResult joint_loss(const std::vector<Tensor>& line_probs,
                           const std::vector<std::vector<int>>& line_targets,
                           const std::vector<std::array<real, 2>>& decisions,
                           real lambda);

// Runs train-mode attention: exactly line_count+1 steps, the last one only
// supervising the stop decision. process_line maps (index, line features)
// to the decoder hidden state carried into the next step.
using LineProcessor =
    std::function<std::vector<real>(int, const Tensor&)>;

std::vector<AttentionStepOutput> run_paragraph_train(ParagraphAttention& att,
                                                     int line_count,
                                                     int hidden_dim,
                                                     const LineProcessor& fn);

// Inference: steps until the detector says stop or max_line_length is
// reached; a step that stops does not emit a line.
std::vector<AttentionStepOutput> run_paragraph_infer(ParagraphAttention& att,
                                                     int max_line_length,
                                                     int hidden_dim,
                                                     const LineProcessor& fn);

}  // namespace pararec
