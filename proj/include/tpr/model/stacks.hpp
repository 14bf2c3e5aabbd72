#ifndef TPR_MODEL_STACKS_HPP
#define TPR_MODEL_STACKS_HPP

#include <memory>
#include <string>
#include <vector>

#include "tpr/core/batchnorm.hpp"
#include "tpr/core/conv.hpp"
#include "tpr/core/elementwise.hpp"
#include "tpr/core/resample.hpp"

namespace tpr {

struct LayerSpec {
  int kernel = 3;
  int cin = 0;
  int cout = 0;
  int stride = 1;
  bool bn_relu = true;        // Conv-BatchNorm-ReLU; false = plain conv
  bool upsample_before = false;  // bilinear 2x applied to the layer input
};

// A stack of Conv[-BatchNorm-ReLU] layers with optional 2x upsampling in
// front of individual layers. Covers the feature encoder, KeyNet and both
// refine nets; the spec of each lives in transporter.hpp.
template <typename T>
class ConvStack {
 public:
  ConvStack() = default;
  ConvStack(const std::string& name, std::vector<LayerSpec> specs)
      : specs_(std::move(specs)) {
    for (size_t i = 0; i < specs_.size(); ++i) {
      const auto& s = specs_[i];
      const std::string lname = name + ".l" + std::to_string(i);
      // a bias in front of batch norm is cancelled by the mean subtraction
      convs_.emplace_back(lname, s.kernel, s.kernel, s.cin, s.cout, s.stride,
                          /*bias=*/!s.bn_relu);
      bns_.emplace_back(s.bn_relu ? BatchNorm<T>(lname + ".bn", s.cout) : BatchNorm<T>());
    }
  }

  void init(Rng& rng) {
    for (size_t i = 0; i < convs_.size(); ++i) convs_[i].init(rng);
  }

  struct Cache {
    std::vector<typename Conv2D<T>::Cache> conv;
    std::vector<std::vector<int>> pre_up_shape;   // shape before upsampling, if any
    std::vector<typename BatchNorm<T>::Cache> bn;
    std::vector<Tensor<T>> bn_out;                // pre-relu activations
  };

  Tensor<T> forward(const Tensor<T>& x, BnMode mode, Cache* cache = nullptr) {
    Tensor<T> cur = x;
    if (cache) {
      cache->conv.resize(specs_.size());
      cache->pre_up_shape.assign(specs_.size(), {});
      cache->bn.resize(specs_.size());
      cache->bn_out.assign(specs_.size(), Tensor<T>());
    }
    for (size_t i = 0; i < specs_.size(); ++i) {
      const auto& s = specs_[i];
      if (s.upsample_before) {
        if (cache) cache->pre_up_shape[i] = cur.shape();
        cur = upsample_bilinear_2x(cur);
      }
      cur = convs_[i].forward(cur, cache ? &cache->conv[i] : nullptr);
      if (s.bn_relu) {
        // relu fused into the bn output pass; a post-relu activation is a
        // valid relu mask, so the cache stays usable for backward
        cur = bns_[i].forward(cur, mode, cache ? &cache->bn[i] : nullptr, true);
        if (cache) cache->bn_out[i] = cur;
      }
    }
    return cur;
  }

  // `first_active_image`: leading images of the batch whose upstream grad is
  // identically zero (stop-gradient branch); conv GEMMs skip them. With
  // `need_dx` false the first layer's input gradient is not formed.
  Tensor<T> backward(const Tensor<T>& dy, const Cache& cache,
                     int first_active_image = 0, bool need_dx = false) {
    Tensor<T> dcur = dy;
    for (int i = static_cast<int>(specs_.size()) - 1; i >= 0; --i) {
      const auto& s = specs_[static_cast<size_t>(i)];
      if (s.bn_relu) {
        dcur = relu_backward(cache.bn_out[static_cast<size_t>(i)], dcur);
        dcur = bns_[static_cast<size_t>(i)].backward(cache.bn[static_cast<size_t>(i)], dcur);
      }
      const bool dx_here = i > 0 || need_dx;
      dcur = convs_[static_cast<size_t>(i)].backward(
          cache.conv[static_cast<size_t>(i)], dcur, dx_here, first_active_image);
      if (s.upsample_before)
        dcur = upsample_bilinear_2x_backward(cache.pre_up_shape[static_cast<size_t>(i)], dcur);
    }
    return dcur;
  }

  ParamRefs<T> params() {
    ParamRefs<T> out;
    for (size_t i = 0; i < convs_.size(); ++i) {
      for (auto* p : convs_[i].params()) out.push_back(p);
      if (specs_[i].bn_relu)
        for (auto* p : bns_[i].params()) out.push_back(p);
    }
    return out;
  }

  // Running statistics are state, not parameters; checkpoints carry both.
  std::vector<std::pair<std::string, std::vector<T>*>> stat_buffers() {
    std::vector<std::pair<std::string, std::vector<T>*>> out;
    for (size_t i = 0; i < bns_.size(); ++i) {
      if (!specs_[i].bn_relu) continue;
      out.emplace_back(bns_[i].gamma().name + ".running_mean", &bns_[i].running_mean());
      out.emplace_back(bns_[i].gamma().name + ".running_var", &bns_[i].running_var());
    }
    return out;
  }

  const std::vector<LayerSpec>& specs() const { return specs_; }
  Conv2D<T>& conv(size_t i) { return convs_[i]; }
  BatchNorm<T>& bn(size_t i) { return bns_[i]; }

 private:
  std::vector<LayerSpec> specs_;
  std::vector<Conv2D<T>> convs_;
  std::vector<BatchNorm<T>> bns_;
};

}  // namespace tpr

#endif
