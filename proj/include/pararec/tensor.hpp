#pragma once

#include <cassert>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

namespace pararec {

// Compute precision. Gradient checks require double; see RunConfig::precision
// for what the runtime flag controls (checkpoint storage width).
using real = double;

// Dense row-major n-d array. Shapes are fixed at construction; ops allocate
// fresh tensors rather than aliasing.
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(std::vector<int> shape) : shape_(std::move(shape)) {
    data_.assign(count(shape_), real(0));
  }

  Tensor(std::vector<int> shape, std::vector<real> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    if (data_.size() != count(shape_))
      throw_shape_mismatch(data_.size());
  }

  static Tensor full(std::vector<int> shape, real v) {
    Tensor t(std::move(shape));
    for (auto& x : t.data_) x = v;
    return t;
  }

  int rank() const { return static_cast<int>(shape_.size()); }
  int dim(int i) const { return shape_[static_cast<size_t>(i)]; }
  const std::vector<int>& shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  real* data() { return data_.data(); }
  const real* data() const { return data_.data(); }

  real& operator[](std::size_t i) { return data_[i]; }
  real operator[](std::size_t i) const { return data_[i]; }

  // Row-major indexers. Bounds are asserted in debug builds only.
  real& at(int i, int j) {
    assert(rank() == 2 && i >= 0 && i < dim(0) && j >= 0 && j < dim(1));
    return data_[static_cast<size_t>(i) * dim(1) + j];
  }
  real at(int i, int j) const { return const_cast<Tensor*>(this)->at(i, j); }

  real& at(int c, int h, int w) {
    assert(rank() == 3 && c < dim(0) && h < dim(1) && w < dim(2));
    return data_[(static_cast<size_t>(c) * dim(1) + h) * dim(2) + w];
  }
  real at(int c, int h, int w) const {
    return const_cast<Tensor*>(this)->at(c, h, w);
  }

  real& at(int a, int b, int c, int d) {
    assert(rank() == 4);
    return data_[((static_cast<size_t>(a) * dim(1) + b) *
                      static_cast<size_t>(dim(2)) +
                  c) *
                     dim(3) +
                 d];
  }
  real at(int a, int b, int c, int d) const {
    return const_cast<Tensor*>(this)->at(a, b, c, d);
  }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  void fill(real v) {
    for (auto& x : data_) x = v;
  }

  bool all_finite() const {
    for (real v : data_)
      if (!std::isfinite(v)) return false;
    return true;
  }

  std::string shape_str() const {
    std::string s = "[";
    for (size_t i = 0; i < shape_.size(); ++i) {
      if (i) s += ",";
      s += std::to_string(shape_[i]);
    }
    return s + "]";
  }

  static std::size_t count(const std::vector<int>& shape) {
    std::size_t n = 1;
    for (int d : shape) n *= static_cast<size_t>(d);
    return n;
  }

 private:
  void throw_shape_mismatch(std::size_t got) const;

  std::vector<int> shape_;
  std::vector<real> data_;
};

// Elementwise y += x; shapes must match.
void add_inplace(Tensor& y, const Tensor& x);

// Elementwise y += a * x.
void axpy_inplace(Tensor& y, real a, const Tensor& x);

}  // namespace pararec
