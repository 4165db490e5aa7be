#include "pararec/ops.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace pararec {

namespace {

void check_conv_args(const Tensor& input, const Tensor& kernel,
                     const Tensor& bias, Stride stride, Stride zero_pad) {
  if (input.rank() != 3)
    throw std::invalid_argument("conv2d: input must be [C,H,W], got " +
                                input.shape_str());
  if (kernel.rank() != 4)
    throw std::invalid_argument("conv2d: kernel must be [Co,Ci,kh,kw], got " +
                                kernel.shape_str());
  if (kernel.dim(1) != input.dim(0))
    throw std::invalid_argument(
        "conv2d: kernel expects " + std::to_string(kernel.dim(1)) +
        " input channels but input has " + std::to_string(input.dim(0)));
  if (!bias.empty() && (bias.rank() != 1 || bias.dim(0) != kernel.dim(0)))
    throw std::invalid_argument("conv2d: bias must be [Co], got " +
                                bias.shape_str());
  if (stride.first < 1 || stride.second < 1)
    throw std::invalid_argument("conv2d: stride must be >= 1");
  if (zero_pad.first < 0 || zero_pad.second < 0)
    throw std::invalid_argument("conv2d: padding must be >= 0");
}

std::pair<int, int> conv_out_dims(const Tensor& input, const Tensor& kernel,
                                  Stride stride, Stride zero_pad) {
  const int ho =
      (input.dim(1) + 2 * zero_pad.first - kernel.dim(2)) / stride.first + 1;
  const int wo =
      (input.dim(2) + 2 * zero_pad.second - kernel.dim(3)) / stride.second + 1;
  if (ho <= 0 || wo <= 0)
    throw std::invalid_argument("conv2d: non-positive output size for input " +
                                input.shape_str() + " kernel " +
                                kernel.shape_str());
  return {ho, wo};
}

}  // namespace

namespace {

// Contiguous zero-padded copy of a [C,H,W] tensor; hot loops then run
// branch-free over full kernel windows.
std::vector<real> pad_input(const Tensor& input, int ph, int pw) {
  const int ci = input.dim(0), h = input.dim(1), w = input.dim(2);
  const int hp = h + 2 * ph, wp = w + 2 * pw;
  std::vector<real> padded(static_cast<size_t>(ci) * hp * wp, real(0));
  for (int ic = 0; ic < ci; ++ic)
    for (int y = 0; y < h; ++y) {
      const real* src = input.data() + (static_cast<size_t>(ic) * h + y) * w;
      real* dst = padded.data() +
                  (static_cast<size_t>(ic) * hp + y + ph) * wp + pw;
      std::copy(src, src + w, dst);
    }
  return padded;
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias,
              Stride stride, Stride zero_pad) {
  check_conv_args(input, kernel, bias, stride, zero_pad);
  const auto [ho, wo] = conv_out_dims(input, kernel, stride, zero_pad);
  const int ci = input.dim(0), h = input.dim(1), w = input.dim(2);
  const int co = kernel.dim(0), kh = kernel.dim(2), kw = kernel.dim(3);
  const int sh = stride.first, sw = stride.second;
  const int ph = zero_pad.first, pw = zero_pad.second;
  const int hp = h + 2 * ph, wp = w + 2 * pw;

  const std::vector<real> padded = pad_input(input, ph, pw);
  Tensor out({co, ho, wo});
  const real* kd = kernel.data();
  real* od = out.data();

  for (int oc = 0; oc < co; ++oc) {
    const real b = bias.empty() ? real(0) : bias[static_cast<size_t>(oc)];
    for (int y = 0; y < ho; ++y) {
      real* orow = od + (static_cast<size_t>(oc) * ho + y) * wo;
      for (int x = 0; x < wo; ++x) orow[x] = b;
      for (int ic = 0; ic < ci; ++ic) {
        const real* xbase = padded.data() + static_cast<size_t>(ic) * hp * wp +
                            static_cast<size_t>(y) * sh * wp;
        const real* kbase =
            kd + ((static_cast<size_t>(oc) * ci + ic) * kh) * kw;
        for (int i = 0; i < kh; ++i) {
          const real* xrow = xbase + static_cast<size_t>(i) * wp;
          const real* krow = kbase + static_cast<size_t>(i) * kw;
          if (sw == 1) {
            for (int j = 0; j < kw; ++j) {
              const real kv = krow[j];
              const real* xp = xrow + j;
              for (int x = 0; x < wo; ++x) orow[x] += kv * xp[x];
            }
          } else {
            for (int j = 0; j < kw; ++j) {
              const real kv = krow[j];
              const real* xp = xrow + j;
              for (int x = 0; x < wo; ++x) orow[x] += kv * xp[x * sw];
            }
          }
        }
      }
    }
  }
  return out;
}

void conv2d_backward(const Tensor& input, const Tensor& kernel,
                     const Tensor& grad_out, Stride stride, Stride zero_pad,
                     Tensor* grad_input, Tensor* grad_kernel,
                     Tensor* grad_bias) {
  check_conv_args(input, kernel, Tensor(), stride, zero_pad);
  const auto [ho, wo] = conv_out_dims(input, kernel, stride, zero_pad);
  if (grad_out.rank() != 3 || grad_out.dim(0) != kernel.dim(0) ||
      grad_out.dim(1) != ho || grad_out.dim(2) != wo)
    throw std::invalid_argument("conv2d_backward: grad_out shape " +
                                grad_out.shape_str() + " does not match");

  const int ci = input.dim(0), h = input.dim(1), w = input.dim(2);
  const int co = kernel.dim(0), kh = kernel.dim(2), kw = kernel.dim(3);
  const int sh = stride.first, sw = stride.second;
  const int ph = zero_pad.first, pw = zero_pad.second;
  const int hp = h + 2 * ph, wp = w + 2 * pw;

  if (grad_input && !grad_input->same_shape(input)) *grad_input = Tensor(input.shape());
  if (grad_kernel && !grad_kernel->same_shape(kernel)) *grad_kernel = Tensor(kernel.shape());
  if (grad_bias && (grad_bias->rank() != 1 || grad_bias->dim(0) != co))
    *grad_bias = Tensor({co});

  const std::vector<real> padded = pad_input(input, ph, pw);
  std::vector<real> gpadded;
  if (grad_input) gpadded.assign(padded.size(), real(0));
  const real* kd = kernel.data();
  const real* gd = grad_out.data();

  for (int oc = 0; oc < co; ++oc) {
    for (int y = 0; y < ho; ++y) {
      const real* grow = gd + (static_cast<size_t>(oc) * ho + y) * wo;
      if (grad_bias) {
        real s = 0;
        for (int x = 0; x < wo; ++x) s += grow[x];
        (*grad_bias)[static_cast<size_t>(oc)] += s;
      }
      for (int ic = 0; ic < ci; ++ic) {
        const std::size_t plane = static_cast<size_t>(ic) * hp * wp +
                                  static_cast<size_t>(y) * sh * wp;
        const real* xbase = padded.data() + plane;
        real* gxbase = grad_input ? gpadded.data() + plane : nullptr;
        const size_t kbase = ((static_cast<size_t>(oc) * ci + ic) * kh) * kw;
        for (int i = 0; i < kh; ++i) {
          const real* xrow = xbase + static_cast<size_t>(i) * wp;
          real* gxrow = gxbase ? gxbase + static_cast<size_t>(i) * wp : nullptr;
          for (int j = 0; j < kw; ++j) {
            const real kv = kd[kbase + static_cast<size_t>(i) * kw + j];
            const real* xp = xrow + j;
            real* gxp = gxrow ? gxrow + j : nullptr;
            real gk = 0;
            if (sw == 1) {
              if (gxp) {
                for (int x = 0; x < wo; ++x) {
                  const real g = grow[x];
                  gk += g * xp[x];
                  gxp[x] += g * kv;
                }
              } else {
                for (int x = 0; x < wo; ++x) gk += grow[x] * xp[x];
              }
            } else {
              for (int x = 0; x < wo; ++x) {
                const real g = grow[x];
                gk += g * xp[x * sw];
                if (gxp) gxp[x * sw] += g * kv;
              }
            }
            if (grad_kernel)
              (*grad_kernel)[kbase + static_cast<size_t>(i) * kw + j] += gk;
          }
        }
      }
    }
  }

  if (grad_input) {
    for (int ic = 0; ic < ci; ++ic)
      for (int y = 0; y < h; ++y) {
        const real* src = gpadded.data() +
                          (static_cast<size_t>(ic) * hp + y + ph) * wp + pw;
        real* dst =
            grad_input->data() + (static_cast<size_t>(ic) * h + y) * w;
        for (int x = 0; x < w; ++x) dst[x] += src[x];
      }
  }
}

Tensor activate(const Tensor& input, Activation kind) {
  Tensor out(input.shape());
  const real* xd = input.data();
  real* od = out.data();
  const std::size_t n = input.size();
  switch (kind) {
    case Activation::relu:
      for (std::size_t i = 0; i < n; ++i) od[i] = xd[i] > 0 ? xd[i] : 0;
      break;
    case Activation::tanh:
      for (std::size_t i = 0; i < n; ++i) od[i] = std::tanh(xd[i]);
      break;
    case Activation::sigmoid:
      for (std::size_t i = 0; i < n; ++i)
        od[i] = real(1) / (real(1) + std::exp(-xd[i]));
      break;
  }
  return out;
}

Tensor activate_backward(const Tensor& input, Activation kind,
                         const Tensor& grad_out) {
  if (!input.same_shape(grad_out))
    throw std::invalid_argument("activate_backward: shape mismatch");
  Tensor gin(input.shape());
  const real* xd = input.data();
  const real* gd = grad_out.data();
  real* od = gin.data();
  const std::size_t n = input.size();
  switch (kind) {
    case Activation::relu:
      for (std::size_t i = 0; i < n; ++i) od[i] = xd[i] > 0 ? gd[i] : 0;
      break;
    case Activation::tanh:
      for (std::size_t i = 0; i < n; ++i) {
        const real t = std::tanh(xd[i]);
        od[i] = gd[i] * (real(1) - t * t);
      }
      break;
    case Activation::sigmoid:
      for (std::size_t i = 0; i < n; ++i) {
        const real s = real(1) / (real(1) + std::exp(-xd[i]));
        od[i] = gd[i] * s * (real(1) - s);
      }
      break;
  }
  return gin;
}

namespace {

// Iterates all 1-d slices along `axis` of a row-major tensor.
template <typename Fn>
void for_each_axis_slice(const std::vector<int>& shape, int axis, Fn&& fn) {
  std::size_t inner = 1, outer = 1;
  for (int i = axis + 1; i < static_cast<int>(shape.size()); ++i)
    inner *= static_cast<size_t>(shape[static_cast<size_t>(i)]);
  for (int i = 0; i < axis; ++i)
    outer *= static_cast<size_t>(shape[static_cast<size_t>(i)]);
  const std::size_t n = static_cast<size_t>(shape[static_cast<size_t>(axis)]);
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t in = 0; in < inner; ++in)
      fn(o * n * inner + in, inner, n);
}

}  // namespace

Tensor softmax(const Tensor& input, int axis) {
  if (axis < 0 || axis >= input.rank())
    throw std::invalid_argument("softmax: axis out of range");
  Tensor out(input.shape());
  const real* xd = input.data();
  real* od = out.data();
  for_each_axis_slice(input.shape(), axis,
                      [&](std::size_t base, std::size_t stride, std::size_t n) {
                        real mx = xd[base];
                        for (std::size_t k = 1; k < n; ++k)
                          mx = std::max(mx, xd[base + k * stride]);
                        real sum = 0;
                        for (std::size_t k = 0; k < n; ++k) {
                          const real e = std::exp(xd[base + k * stride] - mx);
                          od[base + k * stride] = e;
                          sum += e;
                        }
                        const real inv = real(1) / sum;
                        for (std::size_t k = 0; k < n; ++k)
                          od[base + k * stride] *= inv;
                      });
  return out;
}

Tensor softmax_backward(const Tensor& output, const Tensor& grad_out,
                        int axis) {
  if (!output.same_shape(grad_out))
    throw std::invalid_argument("softmax_backward: shape mismatch");
  Tensor gin(output.shape());
  const real* pd = output.data();
  const real* gd = grad_out.data();
  real* od = gin.data();
  for_each_axis_slice(output.shape(), axis,
                      [&](std::size_t base, std::size_t stride, std::size_t n) {
                        real dot = 0;
                        for (std::size_t k = 0; k < n; ++k)
                          dot += pd[base + k * stride] * gd[base + k * stride];
                        for (std::size_t k = 0; k < n; ++k)
                          od[base + k * stride] =
                              pd[base + k * stride] *
                              (gd[base + k * stride] - dot);
                      });
  return gin;
}

std::vector<real> matvec(const Tensor& w, const std::vector<real>& x) {
  const int m = w.dim(0), n = w.dim(1);
  if (static_cast<int>(x.size()) != n)
    throw std::invalid_argument("matvec: dimension mismatch");
  std::vector<real> y(static_cast<size_t>(m), real(0));
  const real* wd = w.data();
  for (int i = 0; i < m; ++i) {
    real s = 0;
    const real* row = wd + static_cast<size_t>(i) * n;
    for (int j = 0; j < n; ++j) s += row[j] * x[static_cast<size_t>(j)];
    y[static_cast<size_t>(i)] = s;
  }
  return y;
}

std::vector<real> matvec_t(const Tensor& w, const std::vector<real>& y) {
  const int m = w.dim(0), n = w.dim(1);
  if (static_cast<int>(y.size()) != m)
    throw std::invalid_argument("matvec_t: dimension mismatch");
  std::vector<real> x(static_cast<size_t>(n), real(0));
  const real* wd = w.data();
  for (int i = 0; i < m; ++i) {
    const real yi = y[static_cast<size_t>(i)];
    if (yi == real(0)) continue;
    const real* row = wd + static_cast<size_t>(i) * n;
    for (int j = 0; j < n; ++j) x[static_cast<size_t>(j)] += yi * row[j];
  }
  return x;
}

void outer_acc(Tensor& gw, const std::vector<real>& y,
               const std::vector<real>& x) {
  const int m = gw.dim(0), n = gw.dim(1);
  if (static_cast<int>(y.size()) != m || static_cast<int>(x.size()) != n)
    throw std::invalid_argument("outer_acc: dimension mismatch");
  real* gd = gw.data();
  for (int i = 0; i < m; ++i) {
    const real yi = y[static_cast<size_t>(i)];
    if (yi == real(0)) continue;
    real* row = gd + static_cast<size_t>(i) * n;
    for (int j = 0; j < n; ++j) row[j] += yi * x[static_cast<size_t>(j)];
  }
}

}  // namespace pararec
