#include "pararec/encoder.hpp"

#include <stdexcept>

#include "pararec/errors.hpp"

namespace pararec {

EncoderConfig EncoderConfig::full() {
  EncoderConfig cfg;
  cfg.cb_channels = {16, 32, 64, 128, 128, 128};
  cfg.cb_strides = {{2, 2}, {2, 2}, {2, 2}, {2, 1}, {2, 1}, {1, 1}};
  cfg.dscb_channels = {128, 128};
  return cfg;
}

Stride EncoderConfig::stride_product() const {
  Stride p{1, 1};
  for (const auto& s : cb_strides) {
    p.first *= s.first;
    p.second *= s.second;
  }
  return p;
}

int EncoderConfig::output_channels() const {
  if (!dscb_channels.empty()) return dscb_channels.back();
  return cb_channels.back();
}

void EncoderConfig::validate() const {
  if (cb_channels.empty())
    throw std::invalid_argument("encoder config: need at least one conv block");
  if (cb_strides.size() != cb_channels.size())
    throw std::invalid_argument(
        "encoder config: cb_strides count " + std::to_string(cb_strides.size()) +
        " != cb_channels count " + std::to_string(cb_channels.size()));
  for (const auto& s : cb_strides)
    if (s.first < 1 || s.second < 1)
      throw std::invalid_argument("encoder config: strides must be >= 1");
  if (!(dropout_prob >= 0 && dropout_prob < 1))
    throw std::invalid_argument("encoder config: dropout_prob must be in [0,1)");
}

// ------------------------------------------------------------- ConvBlock

ConvBlock::ConvBlock(int in_ch, int out_ch, Stride block_stride,
                     const EncoderConfig& cfg)
    : conv_{Conv2dLayer(in_ch, out_ch, 3, {1, 1}, {1, 1}),
            Conv2dLayer(out_ch, out_ch, 3, {1, 1}, {1, 1}),
            Conv2dLayer(out_ch, out_ch, 3, block_stride, {1, 1})},
      norm_{InstanceNorm2d(out_ch, cfg.instance_norm_eps),
            InstanceNorm2d(out_ch, cfg.instance_norm_eps),
            InstanceNorm2d(out_ch, cfg.instance_norm_eps)},
      drop_{MixedDropout(cfg.dropout_prob, cfg.dropout_elementwise_share),
            MixedDropout(cfg.dropout_prob, cfg.dropout_elementwise_share),
            MixedDropout(cfg.dropout_prob, cfg.dropout_elementwise_share)},
      gated_(out_ch, 3),
      gated_norm_(out_ch, cfg.instance_norm_eps),
      placement_(cfg.gated_placement),
      norm_after_gated_(cfg.norm_after_gated) {}

void ConvBlock::init(Rng& rng) {
  for (auto& c : conv_) c.init(rng);
  gated_.init(rng);
}

Tensor ConvBlock::stage_forward(int stage, const Tensor& x, bool train,
                                Rng& rng) {
  preact_[stage] = conv_[stage].forward(x);
  // Checked before the ReLU: NaN compares false there and would be masked.
  if (!preact_[stage].all_finite())
    throw NumericError("conv" + std::to_string(stage + 1),
                       "non-finite activation");
  Tensor r = activate(preact_[stage], Activation::relu);
  Tensor n = norm_[stage].forward(r);
  return drop_[stage].forward(n, train, rng);
}

Tensor ConvBlock::stage_backward(int stage, const Tensor& grad) {
  Tensor gn = drop_[stage].backward(grad);
  Tensor gr = norm_[stage].backward(gn);
  Tensor gz = activate_backward(preact_[stage], Activation::relu, gr);
  return conv_[stage].backward(gz);
}

Tensor ConvBlock::forward(const Tensor& x, bool train, Rng& dropout_rng) {
  Tensor y = stage_forward(0, x, train, dropout_rng);
  y = stage_forward(1, y, train, dropout_rng);
  if (placement_ == GatedPlacement::early) {
    y = gated_.forward(y);
    if (norm_after_gated_) y = gated_norm_.forward(y);
    if (!y.all_finite())
      throw NumericError("gated", "non-finite activation");
  }
  y = stage_forward(2, y, train, dropout_rng);
  if (placement_ == GatedPlacement::late) {
    y = gated_.forward(y);
    if (norm_after_gated_) y = gated_norm_.forward(y);
    if (!y.all_finite())
      throw NumericError("gated", "non-finite activation");
  }
  return y;
}

Tensor ConvBlock::backward(const Tensor& grad_out) {
  Tensor g = grad_out;
  if (placement_ == GatedPlacement::late) {
    if (norm_after_gated_) g = gated_norm_.backward(g);
    g = gated_.backward(g);
  }
  g = stage_backward(2, g);
  if (placement_ == GatedPlacement::early) {
    if (norm_after_gated_) g = gated_norm_.backward(g);
    g = gated_.backward(g);
  }
  g = stage_backward(1, g);
  return stage_backward(0, g);
}

void ConvBlock::collect_params(ParamSet& ps, const std::string& prefix) {
  conv_[0].collect_params(ps, prefix + ".conv1");
  norm_[0].collect_params(ps, prefix + ".norm1");
  conv_[1].collect_params(ps, prefix + ".conv2");
  norm_[1].collect_params(ps, prefix + ".norm2");
  if (placement_ != GatedPlacement::none) {
    gated_.collect_params(ps, prefix + ".gated");
    if (norm_after_gated_) gated_norm_.collect_params(ps, prefix + ".gated_norm");
  }
  conv_[2].collect_params(ps, prefix + ".conv3");
  norm_[2].collect_params(ps, prefix + ".norm3");
}

std::size_t ConvBlock::weight_count() const {
  std::size_t n = 0;
  for (const auto& c : conv_) n += c.weight_count();
  for (const auto& m : norm_) n += m.weight_count();
  if (placement_ != GatedPlacement::none) {
    n += gated_.weight_count();
    if (norm_after_gated_) n += gated_norm_.weight_count();
  }
  return n;
}

// -------------------------------------------------------------- DscBlock

DscBlock::DscBlock(int in_ch, int out_ch, const EncoderConfig& cfg)
    : conv_{DepthwiseSeparableConv2d(in_ch, out_ch, 3, {1, 1}, {1, 1}),
            DepthwiseSeparableConv2d(out_ch, out_ch, 3, {1, 1}, {1, 1}),
            DepthwiseSeparableConv2d(out_ch, out_ch, 3, {1, 1}, {1, 1})},
      norm_{InstanceNorm2d(out_ch, cfg.instance_norm_eps),
            InstanceNorm2d(out_ch, cfg.instance_norm_eps),
            InstanceNorm2d(out_ch, cfg.instance_norm_eps)},
      drop_{MixedDropout(cfg.dropout_prob, cfg.dropout_elementwise_share),
            MixedDropout(cfg.dropout_prob, cfg.dropout_elementwise_share),
            MixedDropout(cfg.dropout_prob, cfg.dropout_elementwise_share)} {}

void DscBlock::init(Rng& rng) {
  for (auto& c : conv_) c.init(rng);
}

Tensor DscBlock::forward(const Tensor& x, bool train, Rng& dropout_rng) {
  Tensor y = x;
  for (int s = 0; s < 3; ++s) {
    preact_[s] = conv_[s].forward(y);
    if (!preact_[s].all_finite())
      throw NumericError("dsc" + std::to_string(s + 1),
                         "non-finite activation");
    Tensor r = activate(preact_[s], Activation::relu);
    Tensor n = norm_[s].forward(r);
    y = drop_[s].forward(n, train, dropout_rng);
  }
  return y;
}

Tensor DscBlock::backward(const Tensor& grad_out) {
  Tensor g = grad_out;
  for (int s = 2; s >= 0; --s) {
    Tensor gn = drop_[s].backward(g);
    Tensor gr = norm_[s].backward(gn);
    Tensor gz = activate_backward(preact_[s], Activation::relu, gr);
    g = conv_[s].backward(gz);
  }
  return g;
}

void DscBlock::collect_params(ParamSet& ps, const std::string& prefix) {
  for (int s = 0; s < 3; ++s) {
    conv_[s].collect_params(ps, prefix + ".dsc" + std::to_string(s + 1));
    norm_[s].collect_params(ps, prefix + ".norm" + std::to_string(s + 1));
  }
}

std::size_t DscBlock::weight_count() const {
  std::size_t n = 0;
  for (const auto& c : conv_) n += c.weight_count();
  for (const auto& m : norm_) n += m.weight_count();
  return n;
}

std::size_t DscBlock::dense_equivalent_count() const {
  std::size_t n = 0;
  for (const auto& c : conv_) n += c.dense_equivalent_count();
  for (const auto& m : norm_) n += m.weight_count();
  return n;
}

// --------------------------------------------------------------- Encoder

Encoder::Encoder(int in_channels, const EncoderConfig& cfg) : config_(cfg) {
  cfg.validate();
  int ch = in_channels;
  for (std::size_t i = 0; i < cfg.cb_channels.size(); ++i) {
    cbs_.emplace_back(ch, cfg.cb_channels[i], cfg.cb_strides[i], cfg);
    ch = cfg.cb_channels[i];
  }
  for (int dc : cfg.dscb_channels) {
    dscbs_.emplace_back(ch, dc, cfg);
    ch = dc;
  }
  residual_.assign(cbs_.size() + dscbs_.size(), 0);
}

void Encoder::init(Rng& rng) {
  for (auto& b : cbs_) b.init(rng);
  for (auto& b : dscbs_) b.init(rng);
}

Tensor Encoder::forward(const Tensor& image, bool train, Rng& dropout_rng) {
  Tensor x = image;
  std::size_t bi = 0;
  auto run_block = [&](auto& block, const std::string& name) {
    Tensor y;
    try {
      y = block.forward(x, train, dropout_rng);
    } catch (const NumericError& e) {
      throw NumericError("encoder." + name + "." + e.where(),
                         "non-finite activation");
    }
    if (y.same_shape(x)) {
      add_inplace(y, x);
      residual_[bi] = 1;
    } else {
      residual_[bi] = 0;
    }
    if (!y.all_finite())
      throw NumericError("encoder." + name, "non-finite activation");
    x = std::move(y);
    ++bi;
  };
  for (std::size_t i = 0; i < cbs_.size(); ++i)
    run_block(cbs_[i], "cb" + std::to_string(i + 1));
  for (std::size_t i = 0; i < dscbs_.size(); ++i)
    run_block(dscbs_[i], "dscb" + std::to_string(i + 1));
  return x;
}

Tensor Encoder::backward(const Tensor& grad_features) {
  Tensor g = grad_features;
  std::size_t bi = residual_.size();
  for (std::size_t i = dscbs_.size(); i-- > 0;) {
    --bi;
    Tensor gin = dscbs_[i].backward(g);
    if (residual_[bi]) add_inplace(gin, g);
    g = std::move(gin);
  }
  for (std::size_t i = cbs_.size(); i-- > 0;) {
    --bi;
    Tensor gin = cbs_[i].backward(g);
    if (residual_[bi]) add_inplace(gin, g);
    g = std::move(gin);
  }
  return g;
}

void Encoder::collect_params(ParamSet& ps, const std::string& prefix) {
  for (std::size_t i = 0; i < cbs_.size(); ++i)
    cbs_[i].collect_params(ps, prefix + ".cb" + std::to_string(i + 1));
  for (std::size_t i = 0; i < dscbs_.size(); ++i)
    dscbs_[i].collect_params(ps, prefix + ".dscb" + std::to_string(i + 1));
}

std::size_t Encoder::weight_count() const {
  std::size_t n = 0;
  for (const auto& b : cbs_) n += b.weight_count();
  for (const auto& b : dscbs_) n += b.weight_count();
  return n;
}

std::pair<int, int> Encoder::feature_dims(int h, int w) const {
  for (const auto& s : config_.cb_strides) {
    h = (h + 2 - 3) / s.first + 1;
    w = (w + 2 - 3) / s.second + 1;
  }
  // DSC blocks are shape-preserving.
  return {h, w};
}

}  // namespace pararec
