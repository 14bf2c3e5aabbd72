#ifndef TPR_CORE_PARAM_HPP
#define TPR_CORE_PARAM_HPP

#include <string>
#include <vector>

#include "tpr/core/rng.hpp"
#include "tpr/core/tensor.hpp"

namespace tpr {

template <typename T>
struct Parameter {
  Parameter() = default;
  Parameter(std::string name_, std::vector<int> shape)
      : name(std::move(name_)), value(shape), grad(std::move(shape)) {}

  std::string name;
  Tensor<T> value;
  Tensor<T> grad;

  void zero_grad() { grad.zero(); }
};

template <typename T>
using ParamRefs = std::vector<Parameter<T>*>;

template <typename T>
inline void zero_grads(const ParamRefs<T>& params) {
  for (auto* p : params) p->zero_grad();
}

// He-style fan-in init for conv/dense weights.
template <typename T>
inline void init_normal_fan_in(Parameter<T>& p, int fan_in, Rng& rng,
                               double gain = 1.0) {
  const double std = gain * std::sqrt(2.0 / static_cast<double>(fan_in));
  for (std::int64_t i = 0; i < p.value.numel(); ++i)
    p.value[i] = static_cast<T>(rng.normal() * std);
}

template <typename T>
inline void init_uniform(Parameter<T>& p, double lo, double hi, Rng& rng) {
  for (std::int64_t i = 0; i < p.value.numel(); ++i)
    p.value[i] = static_cast<T>(rng.uniform(lo, hi));
}

}  // namespace tpr

#endif
