#ifndef TPR_AGENTS_QNET_HPP
#define TPR_AGENTS_QNET_HPP

#include "tpr/core/conv.hpp"
#include "tpr/core/dense.hpp"
#include "tpr/core/elementwise.hpp"
#include "tpr/core/lstm.hpp"

namespace tpr {

// Recurrent Q network over raw observations: a small conv torso, a dense
// bottleneck and an LSTM feeding a linear head of `out_dim` units
// (K*4*actions for the option bank).
template <typename T>
class ConvLstmQNet {
 public:
  ConvLstmQNet() = default;
  ConvLstmQNet(const std::string& name, int h, int w, int hidden, int out_dim)
      : h_(h), w_(w), hidden_(hidden), out_dim_(out_dim),
        conv1_(name + ".c1", 5, 5, 3, 8, 2), conv2_(name + ".c2", 5, 5, 8, 16, 2),
        conv3_(name + ".c3", 3, 3, 16, 32, 2),
        flat_dim_((h / 8) * (w / 8) * 32),
        fc_(name + ".fc", flat_dim_, 128),
        lstm_(name + ".lstm", 128, hidden),
        out_(name + ".out", hidden, out_dim) {}

  void init(Rng& rng) {
    conv1_.init(rng);
    conv2_.init(rng);
    conv3_.init(rng);
    fc_.init(rng);
    lstm_.init(rng);
    out_.init(rng, 0.1);  // small head keeps early Q values near zero
  }

  struct StepCache {
    typename Conv2D<T>::Cache c1, c2, c3;
    Tensor<T> a1, a2, a3;  // post-relu conv activations
    Tensor<T> flat, fc_out, h_out;
    typename LstmCell<T>::Cache lstm;
  };

  LstmState<T> initial_state(int n) const { return LstmState<T>(n, hidden_); }

  Tensor<T> forward_step(const Tensor<T>& obs, LstmState<T>& state,
                         StepCache* cache = nullptr) {
    auto a1 = relu(conv1_.forward(obs, cache ? &cache->c1 : nullptr));
    auto a2 = relu(conv2_.forward(a1, cache ? &cache->c2 : nullptr));
    auto a3 = relu(conv3_.forward(a2, cache ? &cache->c3 : nullptr));
    Tensor<T> flat = a3;
    flat.reshape({obs.size(0), flat_dim_});
    auto fc = relu(fc_.forward(flat));
    auto next = lstm_.forward(fc, state, cache ? &cache->lstm : nullptr);
    auto q = out_.forward(next.h);
    if (cache) {
      cache->a1 = std::move(a1);
      cache->a2 = std::move(a2);
      cache->a3 = std::move(a3);
      cache->flat = std::move(flat);
      cache->fc_out = std::move(fc);
      cache->h_out = next.h;
    }
    state = std::move(next);
    return q;
  }

  // BPTT over a window; dq[t] is the loss gradient on step t's output.
  void backward_sequence(std::vector<StepCache>& caches,
                         const std::vector<Tensor<T>>& dq) {
    const int steps = static_cast<int>(caches.size());
    const int n = dq[0].size(0);
    Tensor<T> dh({n, hidden_}), dc({n, hidden_});
    for (int t = steps - 1; t >= 0; --t) {
      auto& cache = caches[static_cast<size_t>(t)];
      auto dh_step = out_.backward(cache.h_out, dq[static_cast<size_t>(t)]);
      for (std::int64_t i = 0; i < dh.numel(); ++i) dh[i] += dh_step[i];
      Tensor<T> dh_prev({n, hidden_}), dc_prev({n, hidden_});
      auto dfc = lstm_.backward(cache.lstm, dh, dc, dh_prev, dc_prev);
      dh = std::move(dh_prev);
      dc = std::move(dc_prev);

      auto dfc_pre = relu_backward(cache.fc_out, dfc);
      auto dflat = fc_.backward(cache.flat, dfc_pre);
      dflat.reshape(cache.a3.shape());
      auto da3 = relu_backward(cache.a3, dflat);
      auto da2_post = conv3_.backward(cache.c3, da3);
      auto da2 = relu_backward(cache.a2, da2_post);
      auto da1_post = conv2_.backward(cache.c2, da2);
      auto da1 = relu_backward(cache.a1, da1_post);
      (void)conv1_.backward(cache.c1, da1, /*need_dx=*/false);
    }
  }

  ParamRefs<T> params() {
    ParamRefs<T> out;
    for (auto* p : conv1_.params()) out.push_back(p);
    for (auto* p : conv2_.params()) out.push_back(p);
    for (auto* p : conv3_.params()) out.push_back(p);
    for (auto* p : fc_.params()) out.push_back(p);
    for (auto* p : lstm_.params()) out.push_back(p);
    for (auto* p : out_.params()) out.push_back(p);
    return out;
  }

  void copy_values_from(ConvLstmQNet& other) {
    auto mine = params();
    auto theirs = other.params();
    for (size_t i = 0; i < mine.size(); ++i) mine[i]->value = theirs[i]->value;
  }

  int out_dim() const { return out_dim_; }
  int hidden() const { return hidden_; }

 private:
  int h_ = 0, w_ = 0, hidden_ = 0, out_dim_ = 0;
  Conv2D<T> conv1_, conv2_, conv3_;
  int flat_dim_ = 0;
  Dense<T> fc_;
  LstmCell<T> lstm_;
  Dense<T> out_;
};

// Recurrent Q network over precomputed keypoint-state vectors (thermometer
// bits + feature readout): dense, LSTM, linear head of `actions` units.
template <typename T>
class VecLstmQNet {
 public:
  VecLstmQNet() = default;
  VecLstmQNet(const std::string& name, int in_dim, int hidden, int out_dim)
      : in_dim_(in_dim), hidden_(hidden), out_dim_(out_dim),
        fc_(name + ".fc", in_dim, 128), lstm_(name + ".lstm", 128, hidden),
        out_(name + ".out", hidden, out_dim) {}

  void init(Rng& rng) {
    fc_.init(rng);
    lstm_.init(rng);
    out_.init(rng, 0.1);
  }

  struct StepCache {
    Tensor<T> input, fc_out, h_out;
    typename LstmCell<T>::Cache lstm;
  };

  LstmState<T> initial_state(int n) const { return LstmState<T>(n, hidden_); }

  Tensor<T> forward_step(const Tensor<T>& x, LstmState<T>& state,
                         StepCache* cache = nullptr) {
    auto fc = relu(fc_.forward(x));
    auto next = lstm_.forward(fc, state, cache ? &cache->lstm : nullptr);
    auto q = out_.forward(next.h);
    if (cache) {
      cache->input = x;
      cache->fc_out = std::move(fc);
      cache->h_out = next.h;
    }
    state = std::move(next);
    return q;
  }

  void backward_sequence(std::vector<StepCache>& caches,
                         const std::vector<Tensor<T>>& dq) {
    const int steps = static_cast<int>(caches.size());
    const int n = dq[0].size(0);
    Tensor<T> dh({n, hidden_}), dc({n, hidden_});
    for (int t = steps - 1; t >= 0; --t) {
      auto& cache = caches[static_cast<size_t>(t)];
      auto dh_step = out_.backward(cache.h_out, dq[static_cast<size_t>(t)]);
      for (std::int64_t i = 0; i < dh.numel(); ++i) dh[i] += dh_step[i];
      Tensor<T> dh_prev({n, hidden_}), dc_prev({n, hidden_});
      auto dfc = lstm_.backward(cache.lstm, dh, dc, dh_prev, dc_prev);
      dh = std::move(dh_prev);
      dc = std::move(dc_prev);
      auto dfc_pre = relu_backward(cache.fc_out, dfc);
      (void)fc_.backward(cache.input, dfc_pre);
    }
  }

  ParamRefs<T> params() {
    ParamRefs<T> out;
    for (auto* p : fc_.params()) out.push_back(p);
    for (auto* p : lstm_.params()) out.push_back(p);
    for (auto* p : out_.params()) out.push_back(p);
    return out;
  }

  void copy_values_from(VecLstmQNet& other) {
    auto mine = params();
    auto theirs = other.params();
    for (size_t i = 0; i < mine.size(); ++i) mine[i]->value = theirs[i]->value;
  }

  int out_dim() const { return out_dim_; }
  int in_dim() const { return in_dim_; }

 private:
  int in_dim_ = 0, hidden_ = 0, out_dim_ = 0;
  Dense<T> fc_;
  LstmCell<T> lstm_;
  Dense<T> out_;
};

}  // namespace tpr

#endif
