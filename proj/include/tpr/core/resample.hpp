#ifndef TPR_CORE_RESAMPLE_HPP
#define TPR_CORE_RESAMPLE_HPP

#include <array>

#include "tpr/core/errors.hpp"
#include "tpr/core/tensor.hpp"

namespace tpr {
namespace detail {

// Half-pixel-centers mapping for 2x upsampling: output pixel i samples the
// input at (i + 0.5)/2 - 0.5. Weights depend only on parity; border taps are
// clamped, which preserves constants exactly.
struct UpTap {
  int lo, hi;
  double w_lo, w_hi;
};

inline UpTap up2_tap(int i, int in_size) {
  const double src = (static_cast<double>(i) + 0.5) / 2.0 - 0.5;
  int lo = static_cast<int>(std::floor(src));
  const double frac = src - lo;
  int hi = lo + 1;
  if (lo < 0) lo = 0;
  if (hi > in_size - 1) hi = in_size - 1;
  return {lo, hi, 1.0 - frac, frac};
}

}  // namespace detail

// [N, H, W, C] -> [N, 2H, 2W, C], bilinear, half-pixel centers.
template <typename T>
inline Tensor<T> upsample_bilinear_2x(const Tensor<T>& x) {
  require_shape(x.ndim() == 4, "upsample input must be NHWC");
  const int n = x.size(0), h = x.size(1), w = x.size(2), c = x.size(3);
  Tensor<T> y = Tensor<T>::uninit({n, 2 * h, 2 * w, c});
#pragma omp parallel for schedule(static)
  for (int i = 0; i < n; ++i) {
    for (int oy = 0; oy < 2 * h; ++oy) {
      const auto ty = detail::up2_tap(oy, h);
      for (int ox = 0; ox < 2 * w; ++ox) {
        const auto tx = detail::up2_tap(ox, w);
        T* dst = &y.at(i, oy, ox, 0);
        const T* p00 = &x.at(i, ty.lo, tx.lo, 0);
        const T* p01 = &x.at(i, ty.lo, tx.hi, 0);
        const T* p10 = &x.at(i, ty.hi, tx.lo, 0);
        const T* p11 = &x.at(i, ty.hi, tx.hi, 0);
        const T w00 = static_cast<T>(ty.w_lo * tx.w_lo);
        const T w01 = static_cast<T>(ty.w_lo * tx.w_hi);
        const T w10 = static_cast<T>(ty.w_hi * tx.w_lo);
        const T w11 = static_cast<T>(ty.w_hi * tx.w_hi);
        for (int ch = 0; ch < c; ++ch)
          dst[ch] = w00 * p00[ch] + w01 * p01[ch] + w10 * p10[ch] + w11 * p11[ch];
      }
    }
  }
  return y;
}

template <typename T>
inline Tensor<T> upsample_bilinear_2x_backward(const std::vector<int>& x_shape,
                                               const Tensor<T>& dy) {
  const int n = x_shape[0], h = x_shape[1], w = x_shape[2], c = x_shape[3];
  Tensor<T> dx({n, h, w, c});
#pragma omp parallel for schedule(static)
  for (int i = 0; i < n; ++i) {
    for (int oy = 0; oy < 2 * h; ++oy) {
      const auto ty = detail::up2_tap(oy, h);
      for (int ox = 0; ox < 2 * w; ++ox) {
        const auto tx = detail::up2_tap(ox, w);
        const T* src = &dy.at(i, oy, ox, 0);
        T* p00 = &dx.at(i, ty.lo, tx.lo, 0);
        T* p01 = &dx.at(i, ty.lo, tx.hi, 0);
        T* p10 = &dx.at(i, ty.hi, tx.lo, 0);
        T* p11 = &dx.at(i, ty.hi, tx.hi, 0);
        const T w00 = static_cast<T>(ty.w_lo * tx.w_lo);
        const T w01 = static_cast<T>(ty.w_lo * tx.w_hi);
        const T w10 = static_cast<T>(ty.w_hi * tx.w_lo);
        const T w11 = static_cast<T>(ty.w_hi * tx.w_hi);
        for (int ch = 0; ch < c; ++ch) {
          p00[ch] += w00 * src[ch];
          p01[ch] += w01 * src[ch];
          p10[ch] += w10 * src[ch];
          p11[ch] += w11 * src[ch];
        }
      }
    }
  }
  return dx;
}

}  // namespace tpr

#endif
