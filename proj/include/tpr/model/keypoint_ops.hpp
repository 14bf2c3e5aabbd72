#ifndef TPR_MODEL_KEYPOINT_OPS_HPP
#define TPR_MODEL_KEYPOINT_OPS_HPP

#include <cmath>
#include <vector>

#include "tpr/core/errors.hpp"
#include "tpr/core/spatial.hpp"
#include "tpr/core/tensor.hpp"

namespace tpr {

// Keypoint coordinates are (x, y) pairs in [-1, 1]^2; x runs along columns,
// y along rows, cell centers at -1 + (2i+1)/size.

// raw: [N, H', W', K] detector logits -> probs [N, K, H'*W'], kp [N, K, 2].
template <typename T>
struct KeypointExtraction {
  Tensor<T> probs;
  Tensor<T> keypoints;
};

template <typename T>
KeypointExtraction<T> keypoints_from_maps(const Tensor<T>& raw) {
  require_shape(raw.ndim() == 4, "keypoint maps must be [N,H,W,K]");
  const int n = raw.size(0), h = raw.size(1), w = raw.size(2), k = raw.size(3);
  KeypointExtraction<T> out{Tensor<T>::uninit({n, k, h * w}), Tensor<T>::uninit({n, k, 2})};
#pragma omp parallel for collapse(2) schedule(static)
  for (int i = 0; i < n; ++i) {
    for (int c = 0; c < k; ++c) {
      std::vector<T> logits(static_cast<size_t>(h) * w);
      for (int v = 0; v < h; ++v)
        for (int u = 0; u < w; ++u)
          logits[static_cast<size_t>(v) * w + u] = raw.at(i, v, u, c);
      T* probs = &out.probs.at(i, c, 0);
      spatial_softmax(logits.data(), h * w, probs);
      double px = 0.0, py = 0.0;
      for (int v = 0; v < h; ++v)
        for (int u = 0; u < w; ++u) {
          const double p = probs[static_cast<size_t>(v) * w + u];
          px += p * grid_coord<double>(u, w);
          py += p * grid_coord<double>(v, h);
        }
      out.keypoints.at(i, c, 0) = static_cast<T>(px);
      out.keypoints.at(i, c, 1) = static_cast<T>(py);
    }
  }
  return out;
}

// dkp: [N, K, 2] -> draw: [N, H', W', K]
template <typename T>
Tensor<T> keypoints_from_maps_backward(const KeypointExtraction<T>& cache,
                                       const Tensor<T>& dkp, int h, int w) {
  const int n = dkp.size(0), k = dkp.size(1);
  Tensor<T> draw = Tensor<T>::uninit({n, h, w, k});
#pragma omp parallel for collapse(2) schedule(static)
  for (int i = 0; i < n; ++i) {
    for (int c = 0; c < k; ++c) {
      const T* probs = &cache.probs.at(i, c, 0);
      const T dx = dkp.at(i, c, 0), dy = dkp.at(i, c, 1);
      std::vector<T> dprobs(static_cast<size_t>(h) * w);
      for (int v = 0; v < h; ++v)
        for (int u = 0; u < w; ++u)
          dprobs[static_cast<size_t>(v) * w + u] =
              dx * grid_coord<T>(u, w) + dy * grid_coord<T>(v, h);
      std::vector<T> dlogits(static_cast<size_t>(h) * w);
      spatial_softmax_backward(probs, dprobs.data(), h * w, dlogits.data());
      for (int v = 0; v < h; ++v)
        for (int u = 0; u < w; ++u) draw.at(i, v, u, c) = dlogits[static_cast<size_t>(v) * w + u];
    }
  }
  return draw;
}

// kp: [N, K, 2] -> heatmaps [N, H, W, K], H(v,u) = exp(-d^2 / (2 sigma^2)).
template <typename T>
Tensor<T> render_heatmaps(const Tensor<T>& kp, double sigma, int h, int w) {
  require(sigma > 0.0, "heatmap sigma must be positive");
  const int n = kp.size(0), k = kp.size(1);
  Tensor<T> maps = Tensor<T>::uninit({n, h, w, k});
  const double inv2s2 = 1.0 / (2.0 * sigma * sigma);
#pragma omp parallel for schedule(static)
  for (int i = 0; i < n; ++i)
    for (int c = 0; c < k; ++c) {
      const double kx = kp.at(i, c, 0), ky = kp.at(i, c, 1);
      for (int v = 0; v < h; ++v) {
        const double dy = grid_coord<double>(v, h) - ky;
        for (int u = 0; u < w; ++u) {
          const double dx = grid_coord<double>(u, w) - kx;
          maps.at(i, v, u, c) = static_cast<T>(std::exp(-(dx * dx + dy * dy) * inv2s2));
        }
      }
    }
  return maps;
}

// dmaps: [N, H, W, K] -> dkp: [N, K, 2]
template <typename T>
Tensor<T> render_heatmaps_backward(const Tensor<T>& kp, const Tensor<T>& maps,
                                   const Tensor<T>& dmaps, double sigma) {
  const int n = kp.size(0), k = kp.size(1);
  const int h = maps.size(1), w = maps.size(2);
  Tensor<T> dkp = Tensor<T>::uninit({n, k, 2});
  const double inv_s2 = 1.0 / (sigma * sigma);
#pragma omp parallel for schedule(static)
  for (int i = 0; i < n; ++i)
    for (int c = 0; c < k; ++c) {
      const double kx = kp.at(i, c, 0), ky = kp.at(i, c, 1);
      double gx = 0.0, gy = 0.0;
      for (int v = 0; v < h; ++v) {
        const double dy = grid_coord<double>(v, h) - ky;
        for (int u = 0; u < w; ++u) {
          const double dx = grid_coord<double>(u, w) - kx;
          const double g = static_cast<double>(dmaps.at(i, v, u, c)) *
                           static_cast<double>(maps.at(i, v, u, c)) * inv_s2;
          gx += g * dx;
          gy += g * dy;
        }
      }
      dkp.at(i, c, 0) = static_cast<T>(gx);
      dkp.at(i, c, 1) = static_cast<T>(gy);
    }
  return dkp;
}

// Feature transport: keypoints are applied sequentially; each step masks the
// running map by (1-Hs_k)(1-Ht_k) and composites in Ht_k * phi_t. For K=1
// this is exactly the single-equation form (mask, then add).
// phi_s/phi_t: [N, H, W, D]; hs/ht: [N, H, W, K].
// `stages` (optional, for backward) receives K+1 tensors, stages[0] = phi_s.
template <typename T>
Tensor<T> transport(const Tensor<T>& phi_s, const Tensor<T>& phi_t,
                    const Tensor<T>& hs, const Tensor<T>& ht,
                    std::vector<Tensor<T>>* stages = nullptr) {
  require_shape(phi_s.same_shape(phi_t), "transport: feature shapes differ");
  require_shape(hs.same_shape(ht), "transport: heatmap shapes differ");
  require_shape(phi_s.size(1) == hs.size(1) && phi_s.size(2) == hs.size(2),
                "transport: spatial dims differ");
  const int n = phi_s.size(0), h = phi_s.size(1), w = phi_s.size(2), d = phi_s.size(3);
  const int k = hs.size(3);
  Tensor<T> cur = phi_s;
  if (stages) {
    stages->clear();
    stages->push_back(cur);
  }
  for (int c = 0; c < k; ++c) {
    Tensor<T> next = Tensor<T>::uninit(cur.shape());
#pragma omp parallel for schedule(static)
    for (int i = 0; i < n; ++i)
      for (int v = 0; v < h; ++v)
        for (int u = 0; u < w; ++u) {
          const T m = (T(1) - hs.at(i, v, u, c)) * (T(1) - ht.at(i, v, u, c));
          const T a = ht.at(i, v, u, c);
          const T* src = &cur.at(i, v, u, 0);
          const T* tgt = &phi_t.at(i, v, u, 0);
          T* dst = &next.at(i, v, u, 0);
          for (int ch = 0; ch < d; ++ch) dst[ch] = m * src[ch] + a * tgt[ch];
        }
    cur = std::move(next);
    if (stages) stages->push_back(cur);
  }
  return cur;
}

template <typename T>
struct TransportGrads {
  Tensor<T> dphi_s, dphi_t, dhs, dht;
};

template <typename T>
TransportGrads<T> transport_backward(const Tensor<T>& phi_t, const Tensor<T>& hs,
                                     const Tensor<T>& ht,
                                     const std::vector<Tensor<T>>& stages,
                                     const Tensor<T>& dout) {
  const int n = phi_t.size(0), h = phi_t.size(1), w = phi_t.size(2), d = phi_t.size(3);
  const int k = hs.size(3);
  TransportGrads<T> g{Tensor<T>(phi_t.shape()), Tensor<T>(phi_t.shape()),
                      Tensor<T>(hs.shape()), Tensor<T>(ht.shape())};
  Tensor<T> dcur = dout;
  for (int c = k - 1; c >= 0; --c) {
    const Tensor<T>& below = stages[static_cast<size_t>(c)];
#pragma omp parallel for schedule(static)
    for (int i = 0; i < n; ++i)
      for (int v = 0; v < h; ++v)
        for (int u = 0; u < w; ++u) {
          const T hsv = hs.at(i, v, u, c), htv = ht.at(i, v, u, c);
          const T m = (T(1) - hsv) * (T(1) - htv);
          const T* dc = &dcur.at(i, v, u, 0);
          const T* bl = &below.at(i, v, u, 0);
          const T* tg = &phi_t.at(i, v, u, 0);
          T* dpt = &g.dphi_t.at(i, v, u, 0);
          double dm = 0.0, dht_add = 0.0;
          for (int ch = 0; ch < d; ++ch) {
            dm += static_cast<double>(dc[ch]) * static_cast<double>(bl[ch]);
            dht_add += static_cast<double>(dc[ch]) * static_cast<double>(tg[ch]);
            dpt[ch] += htv * dc[ch];
          }
          g.dhs.at(i, v, u, c) += static_cast<T>(-dm * (1.0 - static_cast<double>(htv)));
          g.dht.at(i, v, u, c) += static_cast<T>(dht_add - dm * (1.0 - static_cast<double>(hsv)));
          T* dcw = &dcur.at(i, v, u, 0);
          for (int ch = 0; ch < d; ++ch) dcw[ch] = m * dcw[ch];
        }
  }
  g.dphi_s = std::move(dcur);
  return g;
}

}  // namespace tpr

#endif
