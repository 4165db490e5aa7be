#include "pararec/layers.hpp"

#include <cmath>
#include <stdexcept>

namespace pararec {

namespace {

void require_forward(bool flag, const char* who) {
  if (!flag)
    throw std::logic_error(std::string(who) +
                           ": backward called before forward");
}

}  // namespace

// ---------------------------------------------------------------- Conv2d

Conv2dLayer::Conv2dLayer(int in_ch, int out_ch, int k, Stride stride,
                         Stride pad)
    : kernel({out_ch, in_ch, k, k}),
      bias({out_ch}),
      grad_kernel({out_ch, in_ch, k, k}),
      grad_bias({out_ch}),
      stride(stride),
      pad(pad) {
  if (k % 2 == 0) throw std::invalid_argument("conv kernel size must be odd");
}

void Conv2dLayer::init(Rng& rng) {
  const int k = kernel.dim(2);
  init_uniform_fan(kernel, kernel.dim(1) * k * k, kernel.dim(0) * k * k, rng);
  bias.fill(0);
}

Tensor Conv2dLayer::forward(const Tensor& x) {
  cached_input_ = x;
  has_forward_ = true;
  return conv2d(x, kernel, bias, stride, pad);
}

Tensor Conv2dLayer::backward(const Tensor& grad_out) {
  require_forward(has_forward_, "Conv2dLayer");
  Tensor gin(cached_input_.shape());
  conv2d_backward(cached_input_, kernel, grad_out, stride, pad, &gin,
                  &grad_kernel, &grad_bias);
  return gin;
}

void Conv2dLayer::collect_params(ParamSet& ps, const std::string& prefix) {
  ps.add(prefix + ".kernel", kernel, grad_kernel);
  ps.add(prefix + ".bias", bias, grad_bias);
}

// ------------------------------------------------------------- GatedConv2d

GatedConv2d::GatedConv2d(int channels, int k)
    : filter(channels, channels, k, {1, 1}, {k / 2, k / 2}),
      gate(channels, channels, k, {1, 1}, {k / 2, k / 2}) {}

void GatedConv2d::init(Rng& rng) {
  filter.init(rng);
  gate.init(rng);
}

Tensor GatedConv2d::forward(const Tensor& x) {
  cached_filter_out_ = filter.forward(x);
  cached_gate_out_ = gate.forward(x);
  has_forward_ = true;
  Tensor out(cached_filter_out_.shape());
  const real* f = cached_filter_out_.data();
  const real* g = cached_gate_out_.data();
  real* o = out.data();
  for (std::size_t i = 0; i < out.size(); ++i)
    o[i] = std::tanh(f[i]) * (real(1) / (real(1) + std::exp(-g[i])));
  return out;
}

Tensor GatedConv2d::backward(const Tensor& grad_out) {
  require_forward(has_forward_, "GatedConv2d");
  Tensor gf(cached_filter_out_.shape());
  Tensor gg(cached_gate_out_.shape());
  const real* f = cached_filter_out_.data();
  const real* g = cached_gate_out_.data();
  const real* go = grad_out.data();
  for (std::size_t i = 0; i < gf.size(); ++i) {
    const real t = std::tanh(f[i]);
    const real s = real(1) / (real(1) + std::exp(-g[i]));
    gf[i] = go[i] * s * (real(1) - t * t);
    gg[i] = go[i] * t * s * (real(1) - s);
  }
  Tensor gin = filter.backward(gf);
  add_inplace(gin, gate.backward(gg));
  return gin;
}

void GatedConv2d::collect_params(ParamSet& ps, const std::string& prefix) {
  filter.collect_params(ps, prefix + ".filter");
  gate.collect_params(ps, prefix + ".gate");
}

// ---------------------------------------------------------- InstanceNorm2d

InstanceNorm2d::InstanceNorm2d(int channels, real eps)
    : gamma(Tensor::full({channels}, 1)),
      beta({channels}),
      grad_gamma({channels}),
      grad_beta({channels}),
      eps(eps) {
  if (eps <= 0) throw std::invalid_argument("instance norm eps must be > 0");
}

Tensor InstanceNorm2d::forward(const Tensor& x) {
  if (x.rank() != 3 || x.dim(0) != gamma.dim(0))
    throw std::invalid_argument("InstanceNorm2d: expected [C,H,W] with C=" +
                                std::to_string(gamma.dim(0)) + ", got " +
                                x.shape_str());
  const int c = x.dim(0);
  const std::size_t hw = static_cast<size_t>(x.dim(1)) * x.dim(2);
  cached_norm_ = Tensor(x.shape());
  cached_invstd_.assign(static_cast<size_t>(c), real(0));
  Tensor out(x.shape());
  for (int ch = 0; ch < c; ++ch) {
    const real* xd = x.data() + static_cast<size_t>(ch) * hw;
    real* nd = cached_norm_.data() + static_cast<size_t>(ch) * hw;
    real* od = out.data() + static_cast<size_t>(ch) * hw;
    real mu = 0;
    for (std::size_t i = 0; i < hw; ++i) mu += xd[i];
    mu /= static_cast<real>(hw);
    real var = 0;
    for (std::size_t i = 0; i < hw; ++i) {
      const real d = xd[i] - mu;
      var += d * d;
    }
    var /= static_cast<real>(hw);
    const real invstd = real(1) / std::sqrt(var + eps);
    cached_invstd_[static_cast<size_t>(ch)] = invstd;
    const real g = gamma[static_cast<size_t>(ch)];
    const real b = beta[static_cast<size_t>(ch)];
    for (std::size_t i = 0; i < hw; ++i) {
      nd[i] = (xd[i] - mu) * invstd;
      od[i] = nd[i] * g + b;
    }
  }
  has_forward_ = true;
  return out;
}

Tensor InstanceNorm2d::backward(const Tensor& grad_out) {
  require_forward(has_forward_, "InstanceNorm2d");
  const int c = cached_norm_.dim(0);
  const std::size_t hw =
      static_cast<size_t>(cached_norm_.dim(1)) * cached_norm_.dim(2);
  Tensor gin(cached_norm_.shape());
  const real n = static_cast<real>(hw);
  for (int ch = 0; ch < c; ++ch) {
    const real* nd = cached_norm_.data() + static_cast<size_t>(ch) * hw;
    const real* gd = grad_out.data() + static_cast<size_t>(ch) * hw;
    real* od = gin.data() + static_cast<size_t>(ch) * hw;
    real sum_g = 0, sum_gn = 0;
    for (std::size_t i = 0; i < hw; ++i) {
      sum_g += gd[i];
      sum_gn += gd[i] * nd[i];
    }
    grad_beta[static_cast<size_t>(ch)] += sum_g;
    grad_gamma[static_cast<size_t>(ch)] += sum_gn;
    const real scale =
        gamma[static_cast<size_t>(ch)] * cached_invstd_[static_cast<size_t>(ch)] / n;
    for (std::size_t i = 0; i < hw; ++i)
      od[i] = scale * (n * gd[i] - sum_g - nd[i] * sum_gn);
  }
  return gin;
}

void InstanceNorm2d::collect_params(ParamSet& ps, const std::string& prefix) {
  ps.add(prefix + ".gamma", gamma, grad_gamma);
  ps.add(prefix + ".beta", beta, grad_beta);
}

// --------------------------------------------- DepthwiseSeparableConv2d

DepthwiseSeparableConv2d::DepthwiseSeparableConv2d(int in_ch, int out_ch,
                                                   int k, Stride stride,
                                                   Stride pad)
    : depthwise({in_ch, k, k}),
      pointwise({out_ch, in_ch, 1, 1}),
      bias({out_ch}),
      grad_depthwise({in_ch, k, k}),
      grad_pointwise({out_ch, in_ch, 1, 1}),
      grad_bias({out_ch}),
      stride(stride),
      pad(pad) {
  if (k % 2 == 0) throw std::invalid_argument("dsc kernel size must be odd");
}

void DepthwiseSeparableConv2d::init(Rng& rng) {
  const int k = depthwise.dim(1);
  init_uniform_fan(depthwise, k * k, k * k, rng);
  init_uniform_fan(pointwise, pointwise.dim(1), pointwise.dim(0), rng);
  bias.fill(0);
}

std::size_t DepthwiseSeparableConv2d::dense_equivalent_count() const {
  const std::size_t k = static_cast<size_t>(depthwise.dim(1));
  return static_cast<size_t>(pointwise.dim(0)) * pointwise.dim(1) * k * k +
         bias.size();
}

Tensor DepthwiseSeparableConv2d::forward(const Tensor& x) {
  if (x.rank() != 3 || x.dim(0) != depthwise.dim(0))
    throw std::invalid_argument("DepthwiseSeparableConv2d: expected [C,H,W] with C=" +
                                std::to_string(depthwise.dim(0)) + ", got " +
                                x.shape_str());
  cached_input_ = x;
  const int ci = x.dim(0), k = depthwise.dim(1);
  const int ho = (x.dim(1) + 2 * pad.first - k) / stride.first + 1;
  const int wo = (x.dim(2) + 2 * pad.second - k) / stride.second + 1;
  if (ho <= 0 || wo <= 0)
    throw std::invalid_argument("DepthwiseSeparableConv2d: non-positive output size");

  // Depthwise: each channel convolved with its own kernel.
  Tensor mid({ci, ho, wo});
  for (int ch = 0; ch < ci; ++ch) {
    Tensor xc({1, x.dim(1), x.dim(2)});
    std::copy(x.data() + static_cast<size_t>(ch) * x.dim(1) * x.dim(2),
              x.data() + static_cast<size_t>(ch + 1) * x.dim(1) * x.dim(2),
              xc.data());
    Tensor kc({1, 1, k, k});
    std::copy(depthwise.data() + static_cast<size_t>(ch) * k * k,
              depthwise.data() + static_cast<size_t>(ch + 1) * k * k,
              kc.data());
    Tensor oc = conv2d(xc, kc, Tensor(), stride, pad);
    std::copy(oc.data(), oc.data() + oc.size(),
              mid.data() + static_cast<size_t>(ch) * ho * wo);
  }
  cached_mid_ = mid;
  has_forward_ = true;
  return conv2d(mid, pointwise, bias, {1, 1}, {0, 0});
}

Tensor DepthwiseSeparableConv2d::backward(const Tensor& grad_out) {
  require_forward(has_forward_, "DepthwiseSeparableConv2d");
  Tensor gmid(cached_mid_.shape());
  conv2d_backward(cached_mid_, pointwise, grad_out, {1, 1}, {0, 0}, &gmid,
                  &grad_pointwise, &grad_bias);

  const int ci = cached_input_.dim(0), k = depthwise.dim(1);
  const int h = cached_input_.dim(1), w = cached_input_.dim(2);
  const int ho = cached_mid_.dim(1), wo = cached_mid_.dim(2);
  Tensor gin(cached_input_.shape());
  for (int ch = 0; ch < ci; ++ch) {
    Tensor xc({1, h, w});
    std::copy(cached_input_.data() + static_cast<size_t>(ch) * h * w,
              cached_input_.data() + static_cast<size_t>(ch + 1) * h * w,
              xc.data());
    Tensor kc({1, 1, k, k});
    std::copy(depthwise.data() + static_cast<size_t>(ch) * k * k,
              depthwise.data() + static_cast<size_t>(ch + 1) * k * k,
              kc.data());
    Tensor gc({1, ho, wo});
    std::copy(gmid.data() + static_cast<size_t>(ch) * ho * wo,
              gmid.data() + static_cast<size_t>(ch + 1) * ho * wo, gc.data());
    Tensor gxc({1, h, w});
    Tensor gkc({1, 1, k, k});
    conv2d_backward(xc, kc, gc, stride, pad, &gxc, &gkc, nullptr);
    std::copy(gxc.data(), gxc.data() + gxc.size(),
              gin.data() + static_cast<size_t>(ch) * h * w);
    for (int i = 0; i < k * k; ++i)
      grad_depthwise[static_cast<size_t>(ch) * k * k + i] += gkc[static_cast<size_t>(i)];
  }
  return gin;
}

void DepthwiseSeparableConv2d::collect_params(ParamSet& ps,
                                              const std::string& prefix) {
  ps.add(prefix + ".depthwise", depthwise, grad_depthwise);
  ps.add(prefix + ".pointwise", pointwise, grad_pointwise);
  ps.add(prefix + ".bias", bias, grad_bias);
}

// ------------------------------------------------------------ MixedDropout

Tensor MixedDropout::forward(const Tensor& x, bool train, Rng& rng) {
  if (!train || drop_prob <= 0) {
    mask_ = Tensor();
    return x;
  }
  const real keep = real(1) - drop_prob;
  const real scale = real(1) / keep;
  std::uniform_real_distribution<real> unif(0, 1);
  mask_ = Tensor(x.shape());
  if (unif(rng) < elementwise_share) {
    for (std::size_t i = 0; i < mask_.size(); ++i)
      mask_[i] = unif(rng) < keep ? scale : real(0);
  } else {
    // Whole feature maps dropped together.
    const int c = x.dim(0);
    const std::size_t hw = x.size() / static_cast<size_t>(c);
    for (int ch = 0; ch < c; ++ch) {
      const real m = unif(rng) < keep ? scale : real(0);
      real* md = mask_.data() + static_cast<size_t>(ch) * hw;
      for (std::size_t i = 0; i < hw; ++i) md[i] = m;
    }
  }
  Tensor out(x.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * mask_[i];
  return out;
}

Tensor MixedDropout::backward(const Tensor& grad_out) const {
  if (mask_.empty()) return grad_out;
  Tensor gin(grad_out.shape());
  for (std::size_t i = 0; i < gin.size(); ++i)
    gin[i] = grad_out[i] * mask_[i];
  return gin;
}

}  // namespace pararec
