#ifndef TPR_AGENTS_ENCODING_HPP
#define TPR_AGENTS_ENCODING_HPP

#include <atomic>
#include <cmath>
#include <vector>

#include "tpr/core/errors.hpp"
#include "tpr/core/tensor.hpp"

namespace tpr {

// Out-of-range thermometer inputs are clamped; the count is observable so
// callers can surface it.
inline std::atomic<std::int64_t>& thermometer_clamp_count() {
  static std::atomic<std::int64_t> count{0};
  return count;
}

// Monotone unary encoding of coord in [-1,1] into B cumulative bits:
// level = clamp(floor((coord+1)/2 * B), 0, B), bits below the level set.
inline std::vector<float> thermometer_encode(double coord, int bins) {
  require_config(bins >= 2, "thermometer needs at least 2 bins");
  if (coord < -1.0 || coord > 1.0) {
    thermometer_clamp_count().fetch_add(1, std::memory_order_relaxed);
    coord = std::clamp(coord, -1.0, 1.0);
  }
  int level = static_cast<int>(std::floor((coord + 1.0) * 0.5 * bins));
  level = std::clamp(level, 0, bins);
  std::vector<float> bits(static_cast<size_t>(bins), 0.0f);
  for (int i = 0; i < level; ++i) bits[static_cast<size_t>(i)] = 1.0f;
  return bits;
}

// f_k = sum_uv H_k(u,v) * phi(u,v,:) / sum_uv H_k(u,v)
// phi: [N, h, w, D]; heat: [N, h, w, K] -> [N, K, D]
template <typename T>
Tensor<T> feature_readout(const Tensor<T>& phi, const Tensor<T>& heat) {
  require_shape(phi.size(0) == heat.size(0) && phi.size(1) == heat.size(1) &&
                    phi.size(2) == heat.size(2),
                "feature_readout: spatial dims differ");
  const int n = phi.size(0), h = phi.size(1), w = phi.size(2), d = phi.size(3);
  const int k = heat.size(3);
  Tensor<T> out({n, k, d});
  for (int i = 0; i < n; ++i)
    for (int c = 0; c < k; ++c) {
      double mass = 0.0;
      std::vector<double> acc(static_cast<size_t>(d), 0.0);
      for (int v = 0; v < h; ++v)
        for (int u = 0; u < w; ++u) {
          const double wgt = heat.at(i, v, u, c);
          mass += wgt;
          const T* f = &phi.at(i, v, u, 0);
          for (int ch = 0; ch < d; ++ch) acc[static_cast<size_t>(ch)] += wgt * f[ch];
        }
      for (int ch = 0; ch < d; ++ch)
        out.at(i, c, ch) = static_cast<T>(acc[static_cast<size_t>(ch)] / mass);
    }
  return out;
}

// K x 4 keypoint-displacement rewards between consecutive observations, in
// head order (x+, x-, y+, y-).
inline std::vector<std::array<double, 4>> intrinsic_rewards(
    const Tensor<float>& kp_t, const Tensor<float>& kp_t1) {
  require_shape(kp_t.same_shape(kp_t1), "intrinsic_rewards: K differs");
  const int k = kp_t.size(kp_t.ndim() - 2);
  std::vector<std::array<double, 4>> rewards(static_cast<size_t>(k));
  const float* a = kp_t.data();
  const float* b = kp_t1.data();
  for (int i = 0; i < k; ++i) {
    const double dx = static_cast<double>(b[2 * i]) - a[2 * i];
    const double dy = static_cast<double>(b[2 * i + 1]) - a[2 * i + 1];
    rewards[static_cast<size_t>(i)] = {dx, -dx, dy, -dy};
  }
  return rewards;
}

// Q-input state: thermometer bits for both coordinates of every keypoint
// followed by the feature readout, flattened.
struct ThermometerConfig {
  int bins = 16;
};

inline std::vector<float> keypoint_state(const Tensor<float>& kp,
                                         const Tensor<float>& readout,
                                         const ThermometerConfig& cfg) {
  const int k = kp.size(kp.ndim() - 2);
  std::vector<float> state;
  state.reserve(static_cast<size_t>(k) * (2 * cfg.bins + readout.size(readout.ndim() - 1)));
  const float* kpd = kp.data();
  for (int i = 0; i < k; ++i)
    for (int d = 0; d < 2; ++d) {
      auto bits = thermometer_encode(kpd[2 * i + d], cfg.bins);
      state.insert(state.end(), bits.begin(), bits.end());
    }
  const float* rd = readout.data();
  const std::int64_t n_read = readout.numel();
  state.insert(state.end(), rd, rd + n_read);
  return state;
}

}  // namespace tpr

#endif
