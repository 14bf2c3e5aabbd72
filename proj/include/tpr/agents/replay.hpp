#ifndef TPR_AGENTS_REPLAY_HPP
#define TPR_AGENTS_REPLAY_HPP

#include <cstdint>
#include <mutex>
#include <vector>

#include "tpr/core/errors.hpp"
#include "tpr/core/rng.hpp"
#include "tpr/core/tensor.hpp"

namespace tpr {

// One agent step as the explorer replay stores it. Observations are
// byte-quantized; keypoints are the actor-time detector output.
struct ReplayRecord {
  std::vector<std::uint8_t> obs;   // H*W*3, round(v*255)
  std::vector<float> keypoints;    // K*2 at this observation
  std::uint8_t action = 0;
  float extrinsic_reward = 0.0f;
  bool done = false;
  std::uint32_t episode_id = 0;
};

// FIFO ring over whole records; sequence sampling never crosses episode
// boundaries. Appends and samples are serialized by a mutex (many actors,
// one learner), so no torn records are observable.
class SequenceReplay {
 public:
  SequenceReplay(int capacity, int obs_h, int obs_w)
      : capacity_(capacity), obs_h_(obs_h), obs_w_(obs_w) {
    require_config(capacity >= 2, "replay capacity too small");
  }

  int obs_height() const { return obs_h_; }
  int obs_width() const { return obs_w_; }

  void append(ReplayRecord rec) {
    std::lock_guard<std::mutex> lock(mu_);
    if (static_cast<int>(ring_.size()) < capacity_) {
      ring_.push_back(std::move(rec));
    } else {
      ring_[static_cast<size_t>(head_)] = std::move(rec);
      head_ = (head_ + 1) % capacity_;
    }
    total_ += 1;
  }

  int size() const {
    std::lock_guard<std::mutex> lock(mu_);
    return static_cast<int>(ring_.size());
  }

  std::int64_t total_appended() const {
    std::lock_guard<std::mutex> lock(mu_);
    return total_;
  }

  // A contiguous same-episode window of `length` records (in ring order).
  // Returns an empty vector when the buffer cannot provide one.
  std::vector<ReplayRecord> sample_window(int length, Rng& rng) const {
    std::lock_guard<std::mutex> lock(mu_);
    const int n = static_cast<int>(ring_.size());
    if (n < length) return {};
    for (int attempt = 0; attempt < 64; ++attempt) {
      const int start = rng.index(n - length + 1);
      bool ok = true;
      for (int i = 1; i < length; ++i) {
        const auto& prev = at_logical(start + i - 1);
        const auto& cur = at_logical(start + i);
        if (prev.done || prev.episode_id != cur.episode_id) {
          ok = false;
          break;
        }
      }
      if (ok) {
        std::vector<ReplayRecord> out;
        out.reserve(static_cast<size_t>(length));
        for (int i = 0; i < length; ++i) out.push_back(at_logical(start + i));
        return out;
      }
    }
    return {};
  }

  static std::vector<std::uint8_t> quantize(const Tensor<float>& obs) {
    std::vector<std::uint8_t> out(static_cast<size_t>(obs.numel()));
    for (std::int64_t i = 0; i < obs.numel(); ++i)
      out[static_cast<size_t>(i)] = static_cast<std::uint8_t>(
          std::clamp(obs[i], 0.0f, 1.0f) * 255.0f + 0.5f);
    return out;
  }

  static Tensor<float> dequantize(const std::vector<std::uint8_t>& obs, int h, int w) {
    Tensor<float> out = Tensor<float>::uninit({1, h, w, 3});
    for (size_t i = 0; i < obs.size(); ++i)
      out[static_cast<std::int64_t>(i)] = static_cast<float>(obs[i]) / 255.0f;
    return out;
  }

 private:
  // logical index 0 = oldest record
  const ReplayRecord& at_logical(int i) const {
    const int n = static_cast<int>(ring_.size());
    const int idx = n < capacity_ ? i : (head_ + i) % capacity_;
    return ring_[static_cast<size_t>(idx)];
  }

  int capacity_, obs_h_, obs_w_;
  mutable std::mutex mu_;
  std::vector<ReplayRecord> ring_;
  int head_ = 0;
  std::int64_t total_ = 0;
};

}  // namespace tpr

#endif
