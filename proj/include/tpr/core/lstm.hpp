#ifndef TPR_CORE_LSTM_HPP
#define TPR_CORE_LSTM_HPP

#include <cmath>

#include "tpr/core/blas.hpp"
#include "tpr/core/errors.hpp"
#include "tpr/core/param.hpp"
#include "tpr/core/tensor.hpp"

namespace tpr {

template <typename T>
struct LstmState {
  Tensor<T> h, c;
  LstmState() = default;
  LstmState(int n, int hidden) : h({n, hidden}), c({n, hidden}) {}
};

// Single LSTM cell with gate order [i, f, g, o]; forget-gate bias starts
// at 1. Callers unroll it over time and keep the per-step caches for BPTT.
template <typename T>
class LstmCell {
 public:
  LstmCell() = default;
  LstmCell(std::string name, int in, int hidden)
      : in_(in), hidden_(hidden), wx_(name + ".wx", {in, 4 * hidden}),
        wh_(name + ".wh", {hidden, 4 * hidden}), b_(name + ".b", {4 * hidden}) {}

  void init(Rng& rng) {
    init_normal_fan_in(wx_, in_, rng);
    init_normal_fan_in(wh_, hidden_, rng);
    b_.value.zero();
    for (int j = 0; j < hidden_; ++j) b_.value[hidden_ + j] = T(1);
  }

  struct Cache {
    Tensor<T> x, h_prev, c_prev;
    Tensor<T> i, f, g, o, c_new, tanh_c;
  };

  LstmState<T> forward(const Tensor<T>& x, const LstmState<T>& prev,
                       Cache* cache = nullptr) const {
    require_shape(x.ndim() == 2 && x.size(1) == in_, "lstm input mismatch");
    const int n = x.size(0);
    Tensor<T> z({n, 4 * hidden_});
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < 4 * hidden_; ++j) z.at(i, j) = b_.value[j];
    gemm(false, false, n, 4 * hidden_, in_, T(1), x.data(), in_,
         wx_.value.data(), 4 * hidden_, T(1), z.data(), 4 * hidden_);
    gemm(false, false, n, 4 * hidden_, hidden_, T(1), prev.h.data(), hidden_,
         wh_.value.data(), 4 * hidden_, T(1), z.data(), 4 * hidden_);

    LstmState<T> next(n, hidden_);
    Tensor<T> gi({n, hidden_}), gf({n, hidden_}), gg({n, hidden_}), go({n, hidden_}),
        tanh_c({n, hidden_});
    for (int r = 0; r < n; ++r) {
      for (int j = 0; j < hidden_; ++j) {
        const T zi = z.at(r, j);
        const T zf = z.at(r, hidden_ + j);
        const T zg = z.at(r, 2 * hidden_ + j);
        const T zo = z.at(r, 3 * hidden_ + j);
        const T i_g = sigmoid(zi), f_g = sigmoid(zf);
        const T g_g = static_cast<T>(std::tanh(static_cast<double>(zg)));
        const T o_g = sigmoid(zo);
        const T c_new = f_g * prev.c.at(r, j) + i_g * g_g;
        const T tc = static_cast<T>(std::tanh(static_cast<double>(c_new)));
        next.c.at(r, j) = c_new;
        next.h.at(r, j) = o_g * tc;
        gi.at(r, j) = i_g;
        gf.at(r, j) = f_g;
        gg.at(r, j) = g_g;
        go.at(r, j) = o_g;
        tanh_c.at(r, j) = tc;
      }
    }
    if (cache) {
      cache->x = x;
      cache->h_prev = prev.h;
      cache->c_prev = prev.c;
      cache->i = std::move(gi);
      cache->f = std::move(gf);
      cache->g = std::move(gg);
      cache->o = std::move(go);
      cache->c_new = next.c;
      cache->tanh_c = std::move(tanh_c);
    }
    return next;
  }

  // dh, dc: grads on this step's outputs. Returns dx; adds grads into the
  // previous step's dh/dc accumulators.
  Tensor<T> backward(const Cache& cache, const Tensor<T>& dh, const Tensor<T>& dc,
                     Tensor<T>& dh_prev, Tensor<T>& dc_prev) {
    const int n = dh.size(0);
    Tensor<T> dz({n, 4 * hidden_});
    for (int r = 0; r < n; ++r) {
      for (int j = 0; j < hidden_; ++j) {
        const T i_g = cache.i.at(r, j), f_g = cache.f.at(r, j);
        const T g_g = cache.g.at(r, j), o_g = cache.o.at(r, j);
        const T tc = cache.tanh_c.at(r, j);
        const T dct = dc.at(r, j) + dh.at(r, j) * o_g * (T(1) - tc * tc);
        const T do_ = dh.at(r, j) * tc;
        dz.at(r, 3 * hidden_ + j) = do_ * o_g * (T(1) - o_g);
        dz.at(r, hidden_ + j) = dct * cache.c_prev.at(r, j) * f_g * (T(1) - f_g);
        dz.at(r, j) = dct * g_g * i_g * (T(1) - i_g);
        dz.at(r, 2 * hidden_ + j) = dct * i_g * (T(1) - g_g * g_g);
        dc_prev.at(r, j) += dct * f_g;
      }
    }
    gemm(true, false, in_, 4 * hidden_, n, T(1), cache.x.data(), in_, dz.data(),
         4 * hidden_, T(1), wx_.grad.data(), 4 * hidden_);
    gemm(true, false, hidden_, 4 * hidden_, n, T(1), cache.h_prev.data(),
         hidden_, dz.data(), 4 * hidden_, T(1), wh_.grad.data(), 4 * hidden_);
    for (int r = 0; r < n; ++r)
      for (int j = 0; j < 4 * hidden_; ++j) b_.grad[j] += dz.at(r, j);

    gemm(false, true, n, hidden_, 4 * hidden_, T(1), dz.data(), 4 * hidden_,
         wh_.value.data(), 4 * hidden_, T(1), dh_prev.data(), hidden_);
    Tensor<T> dx({n, in_});
    gemm(false, true, n, in_, 4 * hidden_, T(1), dz.data(), 4 * hidden_,
         wx_.value.data(), 4 * hidden_, T(0), dx.data(), in_);
    return dx;
  }

  ParamRefs<T> params() { return {&wx_, &wh_, &b_}; }
  int hidden_size() const { return hidden_; }
  int input_size() const { return in_; }

 private:
  static T sigmoid(T v) {
    return static_cast<T>(1.0 / (1.0 + std::exp(-static_cast<double>(v))));
  }

  int in_ = 0, hidden_ = 0;
  Parameter<T> wx_, wh_, b_;
};

}  // namespace tpr

#endif
