#ifndef TPR_CORE_ELEMENTWISE_HPP
#define TPR_CORE_ELEMENTWISE_HPP

#include "tpr/core/tensor.hpp"

namespace tpr {

template <typename T>
inline Tensor<T> relu(const Tensor<T>& x) {
  Tensor<T> y = Tensor<T>::uninit(x.shape());
  const std::int64_t n = x.numel();
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < n; ++i) y[i] = x[i] > T(0) ? x[i] : T(0);
  return y;
}

// dx = dy * 1[x > 0]
template <typename T>
inline Tensor<T> relu_backward(const Tensor<T>& x, const Tensor<T>& dy) {
  Tensor<T> dx = Tensor<T>::uninit(x.shape());
  const std::int64_t n = x.numel();
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < n; ++i) dx[i] = x[i] > T(0) ? dy[i] : T(0);
  return dx;
}

template <typename T>
inline void axpy(T alpha, const Tensor<T>& x, Tensor<T>& y) {
  const std::int64_t n = x.numel();
  for (std::int64_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

}  // namespace tpr

#endif
