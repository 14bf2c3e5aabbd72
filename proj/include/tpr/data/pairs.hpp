#ifndef TPR_DATA_PAIRS_HPP
#define TPR_DATA_PAIRS_HPP

#include <cstdint>

#include "tpr/data/episode.hpp"

namespace tpr {

struct FramePair {
  std::uint32_t episode_id = 0;
  std::uint16_t source_idx = 0;
  std::uint16_t target_idx = 0;
  Tensor<float> xs, xt;
};

enum class PairMode { halves, offset };

inline PairMode pair_mode_from_name(const std::string& s) {
  if (s == "halves") return PairMode::halves;
  if (s == "offset") return PairMode::offset;
  throw ConfigError("unknown pair mode: " + s + " (want halves|offset)");
}

inline constexpr int kMaxPairOffset = 20;

// halves: source uniform from the first half, target from the second half.
// offset: temporal offset uniform in [1, min(20, len-1)], then a uniform
// source position that keeps the target inside the episode.
inline FramePair sample_pair(const Episode& ep, PairMode mode, Rng& rng) {
  const int len = ep.length();
  require(len >= 2, "sample_pair: episode too short (need >= 2 frames)");
  int src = 0, tgt = 0;
  if (mode == PairMode::halves) {
    const int half = len / 2;
    src = rng.index(half);
    tgt = half + rng.index(len - half);
  } else {
    const int max_off = std::min(kMaxPairOffset, len - 1);
    const int off = 1 + rng.index(max_off);
    src = rng.index(len - off);
    tgt = src + off;
  }
  return {ep.id, static_cast<std::uint16_t>(src), static_cast<std::uint16_t>(tgt),
          ep.observations[static_cast<size_t>(src)],
          ep.observations[static_cast<size_t>(tgt)]};
}

}  // namespace tpr

#endif
