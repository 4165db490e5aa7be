#include "pararec/tensor.hpp"

#include <stdexcept>

namespace pararec {

void Tensor::throw_shape_mismatch(std::size_t got) const {
  throw std::invalid_argument("tensor data length " + std::to_string(got) +
                              " does not match shape " + shape_str());
}

void add_inplace(Tensor& y, const Tensor& x) {
  if (!y.same_shape(x))
    throw std::invalid_argument("add_inplace: shape mismatch " +
                                y.shape_str() + " vs " + x.shape_str());
  real* yd = y.data();
  const real* xd = x.data();
  for (std::size_t i = 0; i < y.size(); ++i) yd[i] += xd[i];
}

void axpy_inplace(Tensor& y, real a, const Tensor& x) {
  if (!y.same_shape(x))
    throw std::invalid_argument("axpy_inplace: shape mismatch " +
                                y.shape_str() + " vs " + x.shape_str());
  real* yd = y.data();
  const real* xd = x.data();
  for (std::size_t i = 0; i < y.size(); ++i) yd[i] += a * xd[i];
}

}  // namespace pararec
