#pragma once

#include <string>

#include "pararec/ops.hpp"
#include "pararec/param.hpp"
#include "pararec/tensor.hpp"

namespace pararec {

// 3x3 (or any odd-k) convolution with bias. forward() caches the input so
// backward() can produce analytic partials; backward before forward throws.
class Conv2dLayer {
 public:
  Conv2dLayer() = default;
  Conv2dLayer(int in_ch, int out_ch, int k, Stride stride, Stride pad);

  void init(Rng& rng);
  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& grad_out);
  void collect_params(ParamSet& ps, const std::string& prefix);
  std::size_t weight_count() const { return kernel.size() + bias.size(); }

  Tensor kernel, bias;
  Tensor grad_kernel, grad_bias;
  Stride stride{1, 1}, pad{0, 0};

 private:
  Tensor cached_input_;
  bool has_forward_ = false;
};

// Filter/gate pair combined as tanh(conv_f(x)) * sigmoid(conv_g(x)).
// Shape- and channel-preserving: stride 1, zero-pad to keep H,W.
class GatedConv2d {
 public:
  GatedConv2d() = default;
  GatedConv2d(int channels, int k);

  void init(Rng& rng);
  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& grad_out);
  void collect_params(ParamSet& ps, const std::string& prefix);
  std::size_t weight_count() const {
    return filter.weight_count() + gate.weight_count();
  }

  Conv2dLayer filter, gate;

 private:
  Tensor cached_filter_out_, cached_gate_out_;
  bool has_forward_ = false;
};

// Per-channel normalization over spatial positions (biased variance,
// divisor H*W) with learnable scale/shift.
class InstanceNorm2d {
 public:
  InstanceNorm2d() = default;
  explicit InstanceNorm2d(int channels, real eps = 1e-5);

  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& grad_out);
  void collect_params(ParamSet& ps, const std::string& prefix);
  std::size_t weight_count() const { return gamma.size() + beta.size(); }

  Tensor gamma, beta;
  Tensor grad_gamma, grad_beta;
  real eps = 1e-5;

 private:
  Tensor cached_norm_;  // (x - mu) / sqrt(var + eps)
  std::vector<real> cached_invstd_;
  bool has_forward_ = false;
};

// Depthwise 3x3 stage (one kernel per input channel, no bias) followed by a
// 1x1 pointwise mix with bias. Stride applies to the depthwise stage.
class DepthwiseSeparableConv2d {
 public:
  DepthwiseSeparableConv2d() = default;
  DepthwiseSeparableConv2d(int in_ch, int out_ch, int k, Stride stride,
                           Stride pad);

  void init(Rng& rng);
  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& grad_out);
  void collect_params(ParamSet& ps, const std::string& prefix);
  std::size_t weight_count() const {
    return depthwise.size() + pointwise.size() + bias.size();
  }
  // Weight count of a plain conv with the same in/out channels and kernel.
  std::size_t dense_equivalent_count() const;

  Tensor depthwise;  // [Ci,k,k]
  Tensor pointwise;  // [Co,Ci,1,1]
  Tensor bias;       // [Co]
  Tensor grad_depthwise, grad_pointwise, grad_bias;
  Stride stride{1, 1}, pad{1, 1};

 private:
  Tensor cached_input_, cached_mid_;
  bool has_forward_ = false;
};

// Dropout site that picks one of two modes per pass: elementwise masking or
// whole-channel masking, each with its own keep scaling (inverted dropout).
class MixedDropout {
 public:
  MixedDropout() = default;
  MixedDropout(real drop_prob, real elementwise_share)
      : drop_prob(drop_prob), elementwise_share(elementwise_share) {}

  Tensor forward(const Tensor& x, bool train, Rng& rng);
  Tensor backward(const Tensor& grad_out) const;

  real drop_prob = 0.25;
  real elementwise_share = 0.5;

 private:
  Tensor mask_;  // empty when the last pass was identity
};

}  // namespace pararec
