#ifndef TPR_CORE_BATCHNORM_HPP
#define TPR_CORE_BATCHNORM_HPP

#include <cmath>
#include <vector>

#include "tpr/core/errors.hpp"
#include "tpr/core/param.hpp"
#include "tpr/core/tensor.hpp"

namespace tpr {

enum class BnMode { train, eval };

// Per-channel batch normalization over N*H*W, NHWC layout.
// eps 1e-5, running-stat momentum 0.9 (running = 0.9*running + 0.1*batch).
template <typename T>
class BatchNorm {
 public:
  BatchNorm() = default;
  BatchNorm(std::string name, int channels, double eps = 1e-5,
            double momentum = 0.9)
      : c_(channels), eps_(eps), momentum_(momentum),
        gamma_(name + ".gamma", {channels}), beta_(name + ".beta", {channels}),
        running_mean_(static_cast<size_t>(channels), T(0)),
        running_var_(static_cast<size_t>(channels), T(1)) {
    gamma_.value.fill(T(1));
  }

  struct Cache {
    Tensor<T> xhat;
    std::vector<T> invstd;
    BnMode mode = BnMode::train;
  };

  // With fuse_relu the output is max(0, gamma*xhat + beta); the cached xhat
  // is unaffected, and a post-relu output is a valid relu mask for backward.
  Tensor<T> forward(const Tensor<T>& x, BnMode mode, Cache* cache = nullptr,
                    bool fuse_relu = false) {
    require_shape(x.ndim() == 4 && x.size(3) == c_, "batchnorm channel mismatch");
    const std::int64_t m = x.numel() / c_;
    require(mode == BnMode::eval || m >= 2, "batchnorm train mode needs >= 2 samples");
    Tensor<T> y = Tensor<T>::uninit(x.shape());
    if (cache) {
      cache->xhat = Tensor<T>::uninit(x.shape());
      cache->invstd.assign(static_cast<size_t>(c_), T(0));
      cache->mode = mode;
    }

#pragma omp parallel for schedule(static)
    for (int c = 0; c < c_; ++c) {
      T mean, var;
      if (mode == BnMode::train) {
        double sum = 0.0, sum_sq = 0.0;
        for (std::int64_t i = 0; i < m; ++i) {
          const double v = static_cast<double>(x[i * c_ + c]);
          sum += v;
          sum_sq += v * v;
        }
        const double mu = sum / static_cast<double>(m);
        mean = static_cast<T>(mu);
        var = static_cast<T>(std::max(0.0, sum_sq / static_cast<double>(m) - mu * mu));
        running_mean_[static_cast<size_t>(c)] = static_cast<T>(
            momentum_ * running_mean_[static_cast<size_t>(c)] + (1.0 - momentum_) * mean);
        running_var_[static_cast<size_t>(c)] = static_cast<T>(
            momentum_ * running_var_[static_cast<size_t>(c)] + (1.0 - momentum_) * var);
      } else {
        mean = running_mean_[static_cast<size_t>(c)];
        var = running_var_[static_cast<size_t>(c)];
      }
      const T invstd = T(1) / static_cast<T>(std::sqrt(static_cast<double>(var) + eps_));
      const T g = gamma_.value[c], b = beta_.value[c];
      for (std::int64_t i = 0; i < m; ++i) {
        const T xh = (x[i * c_ + c] - mean) * invstd;
        if (cache) cache->xhat[i * c_ + c] = xh;
        const T out = g * xh + b;
        y[i * c_ + c] = fuse_relu && out < T(0) ? T(0) : out;
      }
      if (cache) cache->invstd[static_cast<size_t>(c)] = invstd;
    }
    return y;
  }

  Tensor<T> backward(const Cache& cache, const Tensor<T>& dy) {
    const std::int64_t m = dy.numel() / c_;
    Tensor<T> dx = Tensor<T>::uninit(dy.shape());

#pragma omp parallel for schedule(static)
    for (int c = 0; c < c_; ++c) {
      double sum_dy = 0.0, sum_dy_xhat = 0.0;
      for (std::int64_t i = 0; i < m; ++i) {
        const double d = static_cast<double>(dy[i * c_ + c]);
        sum_dy += d;
        sum_dy_xhat += d * static_cast<double>(cache.xhat[i * c_ + c]);
      }
      gamma_.grad[c] += static_cast<T>(sum_dy_xhat);
      beta_.grad[c] += static_cast<T>(sum_dy);

      const T g = gamma_.value[c];
      const T invstd = cache.invstd[static_cast<size_t>(c)];
      if (cache.mode == BnMode::eval) {
        // Running stats are constants in eval mode.
        for (std::int64_t i = 0; i < m; ++i) dx[i * c_ + c] = dy[i * c_ + c] * g * invstd;
        continue;
      }
      const T k = g * invstd / static_cast<T>(m);
      const T mean_dy = static_cast<T>(sum_dy);
      const T mean_dy_xhat = static_cast<T>(sum_dy_xhat);
      for (std::int64_t i = 0; i < m; ++i) {
        dx[i * c_ + c] = k * (static_cast<T>(m) * dy[i * c_ + c] - mean_dy -
                              cache.xhat[i * c_ + c] * mean_dy_xhat);
      }
    }
    return dx;
  }

  ParamRefs<T> params() { return {&gamma_, &beta_}; }

  std::vector<T>& running_mean() { return running_mean_; }
  std::vector<T>& running_var() { return running_var_; }
  Parameter<T>& gamma() { return gamma_; }
  Parameter<T>& beta() { return beta_; }
  int channels() const { return c_; }

 private:
  int c_ = 0;
  double eps_ = 1e-5, momentum_ = 0.9;
  Parameter<T> gamma_, beta_;
  std::vector<T> running_mean_, running_var_;
};

}  // namespace tpr

#endif
