#pragma once

#include <string>
#include <vector>

#include "pararec/ops.hpp"
#include "pararec/param.hpp"
#include "pararec/tensor.hpp"

namespace pararec {

// Single-layer LSTM weights, shared across all lines of a paragraph.
// Gate order along the first axis: input, forget, cell candidate, output.
struct LstmParams {
  LstmParams() = default;
  LstmParams(int input_dim, int hidden_dim);

  void init(Rng& rng);
  void collect_params(ParamSet& ps, const std::string& prefix);
  int input_dim() const { return w_input.dim(1); }
  int hidden_dim() const { return w_input.dim(0) / 4; }

  Tensor w_input;   // [4D, C]
  Tensor w_hidden;  // [4D, D]
  Tensor bias;      // [4D]
  Tensor grad_w_input, grad_w_hidden, grad_bias;
};

struct LstmState {
  std::vector<real> h, c;
  static LstmState zero(int hidden_dim) {
    return {std::vector<real>(static_cast<size_t>(hidden_dim), 0),
            std::vector<real>(static_cast<size_t>(hidden_dim), 0)};
  }
};

struct LstmInputGrads {
  Tensor grad_input;  // [T,C]
  LstmState grad_init;
};

// Left-to-right recurrence over one line's feature columns, caching gate
// activations for BPTT. A paragraph keeps one runner per line so that the
// backward pass can flow through the carried (h,c) state.
class LstmLineRunner {
 public:
  // x is [T,C]; returns the hidden sequence [T,D].
  const Tensor& forward(const Tensor& x, const LstmState& init,
                        const LstmParams& params);
  const LstmState& final_state() const { return final_; }
  const Tensor& hidden_seq() const { return hidden_; }

  // grad_hidden is [T,D]; grad_final adds the gradient arriving through the
  // carried state from the following line (pass zeros for the last line).
  LstmInputGrads backward(const Tensor& grad_hidden,
                          const LstmState& grad_final, LstmParams& params);

 private:
  Tensor input_, hidden_;
  Tensor gate_i_, gate_f_, gate_g_, gate_o_;  // all [T,D]
  Tensor cell_, cell_tanh_;                   // [T,D]
  LstmState init_, final_;
  bool has_forward_ = false;
};

// Per-timestep affine map to N+1 class logits (a 1x1 convolution over the
// sequence); rows of prob_matrix() sum to 1.
class ClassProjection {
 public:
  ClassProjection() = default;
  ClassProjection(int hidden_dim, int classes);

  void init(Rng& rng);
  Tensor forward(const Tensor& hidden) const;  // logits [T,classes]
  // The hidden sequence is passed back in explicitly so several lines can
  // share one projection before any backward runs.
  Tensor backward(const Tensor& grad_logits, const Tensor& hidden);
  void collect_params(ParamSet& ps, const std::string& prefix);

  Tensor weight;  // [classes, D]
  Tensor bias;    // [classes]
  Tensor grad_weight, grad_bias;
};

// Row softmax of logits: the per-line posterior matrix.
Tensor prob_matrix_from_logits(const Tensor& logits);

}  // namespace pararec
