#pragma once

#include <string>
#include <vector>

#include "pararec/layers.hpp"

namespace pararec {

// Where the gated layer sits inside a convolution block. `early` (between
// conv2's dropout and conv3) is the default; `late` (after conv3's norm)
// reproduces the placement that destabilizes training; `none` drops it.
enum class GatedPlacement { early, late, none };

struct EncoderConfig {
  std::vector<int> cb_channels{8, 16, 32, 64};
  std::vector<Stride> cb_strides{{2, 2}, {2, 2}, {2, 1}, {1, 1}};
  std::vector<int> dscb_channels{64, 64};
  GatedPlacement gated_placement = GatedPlacement::early;
  bool norm_after_gated = false;
  real dropout_prob = 0.25;
  real dropout_elementwise_share = 0.5;
  real instance_norm_eps = 1e-5;

  static EncoderConfig toy() { return {}; }
  static EncoderConfig full();

  // Cumulative (vertical, horizontal) downsampling factor.
  Stride stride_product() const;
  int output_channels() const;
  void validate() const;
};

// conv1(3x3,s1) -> ReLU -> IN -> DMD -> conv2(3x3,s1) -> ReLU -> IN -> DMD
// -> [gated] -> conv3(3x3, block stride) -> ReLU -> IN -> DMD, with the
// gated layer moved or removed per placement.
class ConvBlock {
 public:
  ConvBlock(int in_ch, int out_ch, Stride block_stride,
            const EncoderConfig& cfg);
  void init(Rng& rng);
  Tensor forward(const Tensor& x, bool train, Rng& dropout_rng);
  Tensor backward(const Tensor& grad_out);
  void collect_params(ParamSet& ps, const std::string& prefix);
  std::size_t weight_count() const;

 private:
  Tensor stage_forward(int stage, const Tensor& x, bool train, Rng& rng);
  Tensor stage_backward(int stage, const Tensor& grad);

  Conv2dLayer conv_[3];
  InstanceNorm2d norm_[3];
  MixedDropout drop_[3];
  Tensor preact_[3];
  GatedConv2d gated_;
  InstanceNorm2d gated_norm_;
  GatedPlacement placement_;
  bool norm_after_gated_;
};

// Same block layout built from depthwise-separable convolutions; all three
// stages keep stride 1 so feature dimensions are preserved.
class DscBlock {
 public:
  DscBlock(int in_ch, int out_ch, const EncoderConfig& cfg);
  void init(Rng& rng);
  Tensor forward(const Tensor& x, bool train, Rng& dropout_rng);
  Tensor backward(const Tensor& grad_out);
  void collect_params(ParamSet& ps, const std::string& prefix);
  std::size_t weight_count() const;
  std::size_t dense_equivalent_count() const;

 private:
  DepthwiseSeparableConv2d conv_[3];
  InstanceNorm2d norm_[3];
  MixedDropout drop_[3];
  Tensor preact_[3];
};

// Full feature extractor: the CB stack, then the DSCB stack, with
// element-wise-sum residuals between consecutive blocks whenever the
// input/output shapes match. Non-finite activations abort with the
// offending block named.
class Encoder {
 public:
  Encoder() = default;
  Encoder(int in_channels, const EncoderConfig& cfg);
  void init(Rng& rng);

  Tensor forward(const Tensor& image, bool train, Rng& dropout_rng);
  Tensor backward(const Tensor& grad_features);
  void collect_params(ParamSet& ps, const std::string& prefix);

  std::size_t weight_count() const;
  // Feature-map height/width for a given input size.
  std::pair<int, int> feature_dims(int h, int w) const;
  int feature_channels() const { return config_.output_channels(); }
  const EncoderConfig& config() const { return config_; }
  const std::vector<DscBlock>& dsc_blocks() const { return dscbs_; }

 private:
  EncoderConfig config_;
  std::vector<ConvBlock> cbs_;
  std::vector<DscBlock> dscbs_;
  std::vector<char> residual_;  // per block, set during forward
};

}  // namespace pararec
