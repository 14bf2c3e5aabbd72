#ifndef TPR_DATA_DIVERSE_BUFFER_HPP
#define TPR_DATA_DIVERSE_BUFFER_HPP

#include <cmath>
#include <limits>
#include <vector>

#include "tpr/data/pairs.hpp"

namespace tpr {

struct DiverseBufferConfig {
  int capacity = 5000;
  int proxy_h = 32, proxy_w = 32;   // grayscale nearest-neighbor space
  double random_replace_p = 0.05;

  void validate() const {
    require_config(capacity >= 1, "buffer capacity must be >= 1");
    require_config(proxy_h >= 1 && proxy_w >= 1, "proxy dims must be >= 1");
  }
};

struct ReplacementStats {
  std::int64_t proposals = 0;       // candidate pairs seen after the fill phase
  std::int64_t replaced = 0;
  std::int64_t replaced_random = 0; // replacements taken by the random branch
  std::vector<float> nn_distances;  // candidate NN distance per proposal

  double replacement_rate() const {
    return proposals ? static_cast<double>(replaced) / proposals : 0.0;
  }
};

// Diversity-maximizing pair buffer: filled unconditionally to capacity, then
// each candidate is paired with a sampled resident and replaces it when the
// candidate's nearest-neighbor distance (in low-resolution grayscale space)
// beats the resident's, or with a small fixed probability regardless.
class DiverseBuffer {
 public:
  DiverseBuffer(DiverseBufferConfig cfg, Rng rng) : cfg_(cfg), rng_(rng) {
    cfg_.validate();
  }

  int size() const { return static_cast<int>(pairs_.size()); }
  bool full() const { return size() >= cfg_.capacity; }
  const std::vector<FramePair>& pairs() const { return pairs_; }
  const ReplacementStats& stats() const { return stats_; }
  const std::vector<std::vector<float>>& proxies() const { return proxies_; }

  // Grayscale (channel mean) box-downscaled copy used for NN distances.
  std::vector<float> make_proxy(const FramePair& p) const {
    std::vector<float> proxy;
    append_gray_downscaled(p.xs, proxy);
    append_gray_downscaled(p.xt, proxy);
    return proxy;
  }

  void insert(std::vector<FramePair> new_pairs) {
    size_t cursor = 0;
    while (!full() && cursor < new_pairs.size()) {
      proxies_.push_back(make_proxy(new_pairs[cursor]));
      pairs_.push_back(std::move(new_pairs[cursor]));
      ++cursor;
    }
    if (cursor >= new_pairs.size()) return;

    // conditional phase: one sampled resident per remaining candidate
    const int m = static_cast<int>(new_pairs.size() - cursor);
    std::vector<int> existing(static_cast<size_t>(m));
    for (auto& e : existing) e = rng_.index(size());

    std::vector<float> cand_nn(static_cast<size_t>(m));
    std::vector<float> resident_nn(static_cast<size_t>(m));
    std::vector<std::vector<float>> cand_proxies(static_cast<size_t>(m));
#pragma omp parallel for schedule(dynamic)
    for (int i = 0; i < m; ++i) {
      cand_proxies[static_cast<size_t>(i)] = make_proxy(new_pairs[cursor + static_cast<size_t>(i)]);
      cand_nn[static_cast<size_t>(i)] =
          nn_distance(cand_proxies[static_cast<size_t>(i)], -1);
      resident_nn[static_cast<size_t>(i)] =
          nn_distance(proxies_[static_cast<size_t>(existing[static_cast<size_t>(i)])],
                      existing[static_cast<size_t>(i)]);
    }

    for (int i = 0; i < m; ++i) {
      stats_.proposals += 1;
      stats_.nn_distances.push_back(cand_nn[static_cast<size_t>(i)]);
      const bool random_branch = rng_.bernoulli(cfg_.random_replace_p);
      const bool better = cand_nn[static_cast<size_t>(i)] > resident_nn[static_cast<size_t>(i)];
      if (better || random_branch) {
        const int slot = existing[static_cast<size_t>(i)];
        pairs_[static_cast<size_t>(slot)] = std::move(new_pairs[cursor + static_cast<size_t>(i)]);
        proxies_[static_cast<size_t>(slot)] = std::move(cand_proxies[static_cast<size_t>(i)]);
        stats_.replaced += 1;
        if (!better) stats_.replaced_random += 1;
      }
    }
  }

  // Exact brute-force nearest neighbor in proxy space; `exclude` skips the
  // proxy's own slot when measuring a resident against the rest.
  float nn_distance(const std::vector<float>& proxy, int exclude) const {
    double best = std::numeric_limits<double>::infinity();
    for (size_t j = 0; j < proxies_.size(); ++j) {
      if (static_cast<int>(j) == exclude) continue;
      const auto& other = proxies_[j];
      double acc = 0.0;
      for (size_t d = 0; d < proxy.size(); ++d) {
        const double diff = static_cast<double>(proxy[d]) - other[d];
        acc += diff * diff;
      }
      best = std::min(best, acc);
    }
    return std::isinf(best) ? std::numeric_limits<float>::infinity()
                            : static_cast<float>(std::sqrt(best));
  }

 private:
  void append_gray_downscaled(const Tensor<float>& img, std::vector<float>& out) const {
    const int h = img.size(1), w = img.size(2);
    require_config(h % cfg_.proxy_h == 0 && w % cfg_.proxy_w == 0,
                   "proxy dims must divide the frame dims");
    const int fy = h / cfg_.proxy_h, fx = w / cfg_.proxy_w;
    const float inv = 1.0f / (3.0f * fy * fx);
    for (int py = 0; py < cfg_.proxy_h; ++py)
      for (int px = 0; px < cfg_.proxy_w; ++px) {
        float acc = 0.0f;
        for (int y = py * fy; y < (py + 1) * fy; ++y)
          for (int x = px * fx; x < (px + 1) * fx; ++x) {
            const float* p = &img.at(0, y, x, 0);
            acc += p[0] + p[1] + p[2];
          }
        out.push_back(acc * inv);
      }
  }

  DiverseBufferConfig cfg_;
  Rng rng_;
  std::vector<FramePair> pairs_;
  std::vector<std::vector<float>> proxies_;
  ReplacementStats stats_;
};

}  // namespace tpr

#endif
