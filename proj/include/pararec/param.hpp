#pragma once

#include <random>
#include <string>
#include <vector>

#include "pararec/tensor.hpp"

namespace pararec {

using Rng = std::mt19937_64;

struct ParamRef {
  std::string name;
  Tensor* value = nullptr;
  Tensor* grad = nullptr;
};

// Flat registry of named parameter/gradient pairs. Layers append their
// tensors under a dotted prefix; the optimizer, checkpoint writer and
// gradient checker all walk this list.
class ParamSet {
 public:
  void add(const std::string& name, Tensor& value, Tensor& grad) {
    items_.push_back({name, &value, &grad});
  }

  const std::vector<ParamRef>& items() const { return items_; }

  std::size_t total_count() const {
    std::size_t n = 0;
    for (const auto& p : items_) n += p.value->size();
    return n;
  }

  void zero_grads() {
    for (auto& p : items_) p.grad->fill(0);
  }

  const ParamRef* find(const std::string& name) const {
    for (const auto& p : items_)
      if (p.name == name) return &p;
    return nullptr;
  }

 private:
  std::vector<ParamRef> items_;
};

// Uniform in +-sqrt(6/(fan_in+fan_out)); keeps early activations in the
// linear range of tanh/sigmoid.
inline void init_uniform_fan(Tensor& t, int fan_in, int fan_out, Rng& rng) {
  const real bound = std::sqrt(real(6) / (fan_in + fan_out));
  std::uniform_real_distribution<real> dist(-bound, bound);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = dist(rng);
}

inline void fill_uniform(Tensor& t, real lo, real hi, Rng& rng) {
  std::uniform_real_distribution<real> dist(lo, hi);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = dist(rng);
}

}  // namespace pararec
