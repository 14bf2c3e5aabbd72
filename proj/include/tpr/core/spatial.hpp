#ifndef TPR_CORE_SPATIAL_HPP
#define TPR_CORE_SPATIAL_HPP

#include <cmath>

#include "tpr/core/errors.hpp"
#include "tpr/core/tensor.hpp"

namespace tpr {

// Softmax over all cells of a single-channel map, max-subtracted.
// `logits` and the returned map are indexed [row, col] (contiguous).
template <typename T>
inline void spatial_softmax(const T* logits, std::int64_t cells, T* probs) {
  T max_v = logits[0];
  for (std::int64_t i = 1; i < cells; ++i) max_v = std::max(max_v, logits[i]);
  double sum = 0.0;
  for (std::int64_t i = 0; i < cells; ++i) {
    const double e = std::exp(static_cast<double>(logits[i] - max_v));
    probs[i] = static_cast<T>(e);
    sum += e;
  }
  const T inv = static_cast<T>(1.0 / sum);
  for (std::int64_t i = 0; i < cells; ++i) probs[i] *= inv;
}

template <typename T>
inline Tensor<T> spatial_softmax(const Tensor<T>& map) {
  require_shape(map.ndim() == 2, "spatial_softmax expects a 2-d map");
  Tensor<T> out(map.shape());
  spatial_softmax(map.data(), map.numel(), out.data());
  return out;
}

// d logits = probs * (d probs - sum(probs * d probs))
template <typename T>
inline void spatial_softmax_backward(const T* probs, const T* dprobs,
                                     std::int64_t cells, T* dlogits) {
  double dot = 0.0;
  for (std::int64_t i = 0; i < cells; ++i)
    dot += static_cast<double>(probs[i]) * static_cast<double>(dprobs[i]);
  for (std::int64_t i = 0; i < cells; ++i)
    dlogits[i] = probs[i] * (dprobs[i] - static_cast<T>(dot));
}

// Normalized grid coordinate of a cell center: -1 + (2i+1)/size.
template <typename T>
inline T grid_coord(int i, int size) {
  return static_cast<T>(-1.0 + (2.0 * i + 1.0) / static_cast<double>(size));
}

}  // namespace tpr

#endif
