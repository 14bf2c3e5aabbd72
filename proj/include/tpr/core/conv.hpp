#ifndef TPR_CORE_CONV_HPP
#define TPR_CORE_CONV_HPP

#include <omp.h>

#include <vector>

#include "tpr/core/blas.hpp"
#include "tpr/core/errors.hpp"
#include "tpr/core/param.hpp"
#include "tpr/core/tensor.hpp"

namespace tpr {

// SAME zero padding: output spatial dims are ceil(in/stride); when the total
// pad is odd the extra row/column goes at the bottom/right.
struct SamePad {
  int out, before;
  static SamePad compute(int in, int k, int stride) {
    const int out = (in + stride - 1) / stride;
    const int total = std::max(0, (out - 1) * stride + k - in);
    return {out, total / 2};
  }
};

namespace detail {

// col[p, (ky*kw + kx)*cin + ci] over output positions p = oy*out_w + ox.
template <typename T>
void im2col(const T* x, int h, int w, int cin, int kh, int kw, int stride,
            int pad_y, int pad_x, int out_h, int out_w, T* col) {
  const int patch = kh * kw * cin;
  for (int oy = 0; oy < out_h; ++oy) {
    for (int ox = 0; ox < out_w; ++ox) {
      T* dst = col + (static_cast<size_t>(oy) * out_w + ox) * patch;
      const int iy0 = oy * stride - pad_y;
      const int ix0 = ox * stride - pad_x;
      for (int ky = 0; ky < kh; ++ky) {
        const int iy = iy0 + ky;
        if (iy < 0 || iy >= h) {
          std::fill(dst, dst + kw * cin, T(0));
          dst += kw * cin;
          continue;
        }
        const T* row = x + (static_cast<size_t>(iy) * w) * cin;
        for (int kx = 0; kx < kw; ++kx) {
          const int ix = ix0 + kx;
          if (ix < 0 || ix >= w) {
            std::fill(dst, dst + cin, T(0));
          } else {
            std::copy(row + static_cast<size_t>(ix) * cin,
                      row + static_cast<size_t>(ix + 1) * cin, dst);
          }
          dst += cin;
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* col, int h, int w, int cin, int kh, int kw,
                int stride, int pad_y, int pad_x, int out_h, int out_w, T* x) {
  const int patch = kh * kw * cin;
  for (int oy = 0; oy < out_h; ++oy) {
    for (int ox = 0; ox < out_w; ++ox) {
      const T* src = col + (static_cast<size_t>(oy) * out_w + ox) * patch;
      const int iy0 = oy * stride - pad_y;
      const int ix0 = ox * stride - pad_x;
      for (int ky = 0; ky < kh; ++ky) {
        const int iy = iy0 + ky;
        if (iy < 0 || iy >= h) {
          src += kw * cin;
          continue;
        }
        T* row = x + (static_cast<size_t>(iy) * w) * cin;
        for (int kx = 0; kx < kw; ++kx) {
          const int ix = ix0 + kx;
          if (ix >= 0 && ix < w) {
            T* dst = row + static_cast<size_t>(ix) * cin;
            for (int ci = 0; ci < cin; ++ci) dst[ci] += src[ci];
          }
          src += cin;
        }
      }
    }
  }
}

}  // namespace detail

// 2D convolution, NHWC activations, [kh, kw, cin, cout] kernels, stride 1
// or 2, SAME zero padding. im2col + GEMM; the batch loop is the parallel
// axis (GEMMs stay single-threaded, see blas.hpp).
template <typename T>
class Conv2D {
 public:
  // Per-image col matrices above this many elements are recomputed in the
  // backward pass instead of being kept from the forward.
  static constexpr std::int64_t kColCacheLimit = 2 * 1000 * 1000;

  Conv2D() = default;
  Conv2D(std::string name, int kh, int kw, int cin, int cout, int stride,
         bool bias = true)
      : kh_(kh), kw_(kw), cin_(cin), cout_(cout), stride_(stride),
        has_bias_(bias), w_(name + ".w", {kh, kw, cin, cout}) {
    require_config(stride == 1 || stride == 2, "conv stride must be 1 or 2");
    require_config(kh % 2 == 1 && kw % 2 == 1, "conv kernels must be odd");
    if (has_bias_) b_ = Parameter<T>(name + ".b", {cout});
  }

  void init(Rng& rng, double gain = 1.0) {
    init_normal_fan_in(w_, kh_ * kw_ * cin_, rng, gain);
    if (has_bias_) b_.value.zero();
  }

  struct Cache {
    std::vector<int> x_shape;
    Tensor<T> x;    // kept only when col is not
    Tensor<T> col;  // [n, p, patch] when cached
    bool has_col = false;
  };

  // x: [N, H, W, cin] -> y: [N, ceil(H/s), ceil(W/s), cout]
  Tensor<T> forward(const Tensor<T>& x, Cache* cache = nullptr) {
    require_shape(x.ndim() == 4, "conv input must be NHWC");
    require_shape(x.size(3) == cin_, "conv input channels mismatch: got " +
                                         std::to_string(x.size(3)) +
                                         ", kernel expects " +
                                         std::to_string(cin_));
    const int n = x.size(0), h = x.size(1), w = x.size(2);
    const auto py = SamePad::compute(h, kh_, stride_);
    const auto px = SamePad::compute(w, kw_, stride_);
    Tensor<T> y = Tensor<T>::uninit({n, py.out, px.out, cout_});
    const int p = py.out * px.out;
    const int patch = kh_ * kw_ * cin_;
    const std::int64_t col_elems = static_cast<std::int64_t>(p) * patch;

    const bool keep_col = cache && col_elems <= kColCacheLimit;
    if (cache) {
      cache->x_shape = x.shape();
      cache->has_col = keep_col;
      if (keep_col)
        cache->col = Tensor<T>::uninit({n, p, patch});
      else
        cache->x = x;
    }
    ensure_scratch(static_cast<size_t>(col_elems));

#pragma omp parallel for schedule(static)
    for (int i = 0; i < n; ++i) {
      T* col = keep_col ? cache->col.data() + col_elems * i : scratch(static_cast<size_t>(col_elems));
      detail::im2col(x.data() + image_elems(x) * i, h, w, cin_, kh_, kw_,
                     stride_, py.before, px.before, py.out, px.out, col);
      T* out = y.data() + static_cast<size_t>(p) * cout_ * i;
      gemm(false, false, p, cout_, patch, T(1), col, patch, w_.value.data(),
           cout_, T(0), out, cout_);
      if (has_bias_) {
        for (int q = 0; q < p; ++q)
          for (int c = 0; c < cout_; ++c) out[static_cast<size_t>(q) * cout_ + c] += b_.value[c];
      }
    }
    return y;
  }

  // Accumulates parameter grads; returns dx (empty tensor when !need_dx).
  // `first_active_image` skips leading batch entries whose upstream grad is
  // identically zero.
  Tensor<T> backward(const Cache& cache, const Tensor<T>& dy, bool need_dx = true,
                     int first_active_image = 0) {
    const int n = cache.x_shape[0], h = cache.x_shape[1], w = cache.x_shape[2];
    const auto py = SamePad::compute(h, kh_, stride_);
    const auto px = SamePad::compute(w, kw_, stride_);
    const int p = py.out * px.out;
    const int patch = kh_ * kw_ * cin_;
    const std::int64_t col_elems = static_cast<std::int64_t>(p) * patch;
    require_shape(dy.size(0) == n && dy.size(1) == py.out &&
                      dy.size(2) == px.out && dy.size(3) == cout_,
                  "conv backward dy shape mismatch");
    Tensor<T> dx;
    if (need_dx) dx = Tensor<T>({n, h, w, cin_});
    ensure_scratch(2 * static_cast<size_t>(col_elems));

    // Per-image weight-grad partials, reduced in index order afterwards so
    // results do not depend on the worker count.
    const int active = n - first_active_image;
    std::vector<std::vector<T>> dw_parts(static_cast<size_t>(active));
    std::vector<std::vector<T>> db_parts(static_cast<size_t>(active));

#pragma omp parallel for schedule(static)
    for (int i = first_active_image; i < n; ++i) {
      T* scr = scratch(2 * static_cast<size_t>(col_elems));
      const T* col;
      if (cache.has_col) {
        col = cache.col.data() + col_elems * i;
      } else {
        detail::im2col(cache.x.data() + static_cast<size_t>(h) * w * cin_ * i, h, w,
                       cin_, kh_, kw_, stride_, py.before, px.before, py.out,
                       px.out, scr);
        col = scr;
      }
      T* dcol = scr + col_elems;
      const T* dyi = dy.data() + static_cast<size_t>(p) * cout_ * i;

      auto& dw = dw_parts[static_cast<size_t>(i - first_active_image)];
      dw.assign(static_cast<size_t>(patch) * cout_, T(0));
      gemm(true, false, patch, cout_, p, T(1), col, patch, dyi, cout_, T(0),
           dw.data(), cout_);

      if (has_bias_) {
        auto& db = db_parts[static_cast<size_t>(i - first_active_image)];
        db.assign(static_cast<size_t>(cout_), T(0));
        for (int q = 0; q < p; ++q)
          for (int c = 0; c < cout_; ++c) db[c] += dyi[static_cast<size_t>(q) * cout_ + c];
      }

      if (need_dx) {
        gemm(false, true, p, patch, cout_, T(1), dyi, cout_, w_.value.data(),
             cout_, T(0), dcol, patch);
        detail::col2im_add(dcol, h, w, cin_, kh_, kw_, stride_, py.before,
                           px.before, py.out, px.out,
                           dx.data() + static_cast<size_t>(h) * w * cin_ * i);
      }
    }

    for (const auto& dw : dw_parts)
      for (size_t j = 0; j < dw.size(); ++j) w_.grad[static_cast<std::int64_t>(j)] += dw[j];
    if (has_bias_)
      for (const auto& db : db_parts)
        for (size_t j = 0; j < db.size(); ++j) b_.grad[static_cast<std::int64_t>(j)] += db[j];
    return dx;
  }

  ParamRefs<T> params() {
    ParamRefs<T> out{&w_};
    if (has_bias_) out.push_back(&b_);
    return out;
  }

  int out_channels() const { return cout_; }
  int stride() const { return stride_; }
  Parameter<T>& weight() { return w_; }
  Parameter<T>& bias() { return b_; }

 private:
  static size_t image_elems(const Tensor<T>& t) {
    return static_cast<size_t>(t.size(1)) * t.size(2) * t.size(3);
  }

  void ensure_scratch(size_t elems) {
    const int nt = omp_get_max_threads();
    if (static_cast<int>(scratch_.size()) < nt) scratch_.resize(static_cast<size_t>(nt));
    for (auto& s : scratch_)
      if (s.size() < elems) s.resize(elems);
  }

  T* scratch(size_t elems) {
    auto& s = scratch_[static_cast<size_t>(omp_get_thread_num())];
    if (s.size() < elems) s.resize(elems);  // serial fallback path
    return s.data();
  }

  int kh_ = 0, kw_ = 0, cin_ = 0, cout_ = 0, stride_ = 1;
  bool has_bias_ = true;
  Parameter<T> w_, b_;
  std::vector<std::vector<T>> scratch_;
};

}  // namespace tpr

#endif
