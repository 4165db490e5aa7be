#pragma once

#include <utility>
#include <vector>

#include "pararec/tensor.hpp"

namespace pararec {

using Stride = std::pair<int, int>;  // (vertical, horizontal)

// 2-d cross-correlation over a [C,H,W] input with a [Co,Ci,kh,kw] kernel and
// per-output-channel bias. Output extents follow the floor rule
// H' = (H + 2*ph - kh)/sh + 1.
Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias,
              Stride stride, Stride zero_pad);

// Analytic partials of conv2d. Any of the grad outputs may be null.
void conv2d_backward(const Tensor& input, const Tensor& kernel,
                     const Tensor& grad_out, Stride stride, Stride zero_pad,
                     Tensor* grad_input, Tensor* grad_kernel,
                     Tensor* grad_bias);

enum class Activation { relu, tanh, sigmoid };

Tensor activate(const Tensor& input, Activation kind);
// Needs the forward input (relu kink, tanh/sigmoid reuse of the value).
Tensor activate_backward(const Tensor& input, Activation kind,
                         const Tensor& grad_out);

// Numerically stable softmax along `axis` (max-subtraction).
Tensor softmax(const Tensor& input, int axis);
// Jacobian-vector product given the softmax output.
Tensor softmax_backward(const Tensor& output, const Tensor& grad_out,
                        int axis);

// Small dense helpers used by the recurrent layers.
// w is [m,n]; x has length n; returns length m.
std::vector<real> matvec(const Tensor& w, const std::vector<real>& x);
// Transposed product: returns w^T y, length n.
std::vector<real> matvec_t(const Tensor& w, const std::vector<real>& y);
// gw += y x^T for gw [m,n].
void outer_acc(Tensor& gw, const std::vector<real>& y,
               const std::vector<real>& x);

}  // namespace pararec
