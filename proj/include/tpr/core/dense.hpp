#ifndef TPR_CORE_DENSE_HPP
#define TPR_CORE_DENSE_HPP

#include "tpr/core/blas.hpp"
#include "tpr/core/errors.hpp"
#include "tpr/core/param.hpp"
#include "tpr/core/tensor.hpp"

namespace tpr {

// Fully connected layer, x: [N, in] -> y: [N, out]. Weights [in, out].
template <typename T>
class Dense {
 public:
  Dense() = default;
  Dense(std::string name, int in, int out)
      : in_(in), out_(out), w_(name + ".w", {in, out}), b_(name + ".b", {out}) {}

  void init(Rng& rng, double gain = 1.0) {
    init_normal_fan_in(w_, in_, rng, gain);
    b_.value.zero();
  }

  Tensor<T> forward(const Tensor<T>& x) const {
    require_shape(x.ndim() == 2 && x.size(1) == in_, "dense input mismatch");
    const int n = x.size(0);
    Tensor<T> y = Tensor<T>::uninit({n, out_});
    gemm(false, false, n, out_, in_, T(1), x.data(), in_, w_.value.data(),
         out_, T(0), y.data(), out_);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < out_; ++j) y.at(i, j) += b_.value[j];
    return y;
  }

  Tensor<T> backward(const Tensor<T>& x, const Tensor<T>& dy) {
    const int n = x.size(0);
    gemm(true, false, in_, out_, n, T(1), x.data(), in_, dy.data(), out_, T(1),
         w_.grad.data(), out_);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < out_; ++j) b_.grad[j] += dy.at(i, j);
    Tensor<T> dx = Tensor<T>::uninit({n, in_});
    gemm(false, true, n, in_, out_, T(1), dy.data(), out_, w_.value.data(),
         out_, T(0), dx.data(), in_);
    return dx;
  }

  ParamRefs<T> params() { return {&w_, &b_}; }
  int in_features() const { return in_; }
  int out_features() const { return out_; }

 private:
  int in_ = 0, out_ = 0;
  Parameter<T> w_, b_;
};

}  // namespace tpr

#endif
