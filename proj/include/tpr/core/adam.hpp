#ifndef TPR_CORE_ADAM_HPP
#define TPR_CORE_ADAM_HPP

#include <cmath>
#include <cstdint>
#include <vector>

#include "tpr/core/errors.hpp"
#include "tpr/core/param.hpp"

namespace tpr {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double decay_factor = 0.95;   // lr multiplier applied every decay_period steps
  std::int64_t decay_period = 100000;
};

// Bias-corrected Adam with a stepped learning-rate decay schedule.
// Accumulators are matched to the parameter list positionally, so the same
// list must be passed on every call.
template <typename T>
class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {
    require_config(cfg_.decay_period >= 1, "adam decay period must be >= 1");
  }

  const AdamConfig& config() const { return cfg_; }
  std::int64_t step_count() const { return step_; }

  // Learning rate the next step will use.
  double effective_lr() const {
    const auto decays = step_ / cfg_.decay_period;
    return cfg_.lr * std::pow(cfg_.decay_factor, static_cast<double>(decays));
  }

  void step(const ParamRefs<T>& params) {
    if (m_.empty()) {
      for (auto* p : params) {
        m_.emplace_back(p->value.shape());
        v_.emplace_back(p->value.shape());
      }
    }
    require(m_.size() == params.size(), "adam: parameter list changed size");
    const double lr = effective_lr();
    step_ += 1;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));

#pragma omp parallel for schedule(dynamic)
    for (std::int64_t pi = 0; pi < static_cast<std::int64_t>(params.size()); ++pi) {
      auto& p = *params[static_cast<size_t>(pi)];
      auto& m = m_[static_cast<size_t>(pi)];
      auto& v = v_[static_cast<size_t>(pi)];
      const std::int64_t n = p.value.numel();
      for (std::int64_t i = 0; i < n; ++i) {
        const double g = static_cast<double>(p.grad[i]);
        const double mi = cfg_.beta1 * static_cast<double>(m[i]) + (1.0 - cfg_.beta1) * g;
        const double vi = cfg_.beta2 * static_cast<double>(v[i]) + (1.0 - cfg_.beta2) * g * g;
        m[i] = static_cast<T>(mi);
        v[i] = static_cast<T>(vi);
        const double mhat = mi / bc1;
        const double vhat = vi / bc2;
        p.value[i] -= static_cast<T>(lr * mhat / (std::sqrt(vhat) + cfg_.eps));
      }
    }
  }

 private:
  AdamConfig cfg_;
  std::int64_t step_ = 0;
  std::vector<Tensor<T>> m_, v_;
};

}  // namespace tpr

#endif
