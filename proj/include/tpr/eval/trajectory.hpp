#ifndef TPR_EVAL_TRAJECTORY_HPP
#define TPR_EVAL_TRAJECTORY_HPP

#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <vector>

#include "tpr/core/errors.hpp"

namespace tpr {

// Time-indexed 2D track in normalized units. Detected trajectories are
// always present; ground-truth ones carry a per-step presence mask.
struct Trajectory {
  std::vector<std::array<double, 2>> points;
  std::vector<bool> present;  // empty = always present

  int length() const { return static_cast<int>(points.size()); }

  bool present_at(int t) const {
    return present.empty() || present[static_cast<size_t>(t)];
  }

  bool ever_present() const {
    if (present.empty()) return !points.empty();
    for (bool p : present)
      if (p) return true;
    return false;
  }
};

// Mean Euclidean distance over the steps where the ground truth is present;
// no value when it is absent throughout.
inline std::optional<double> trajectory_distance(const Trajectory& det,
                                                 const Trajectory& gt) {
  require(det.length() == gt.length(), "trajectory lengths differ");
  double acc = 0.0;
  int n = 0;
  for (int t = 0; t < det.length(); ++t) {
    if (!gt.present_at(t)) continue;
    const double dx = det.points[static_cast<size_t>(t)][0] - gt.points[static_cast<size_t>(t)][0];
    const double dy = det.points[static_cast<size_t>(t)][1] - gt.points[static_cast<size_t>(t)][1];
    acc += std::sqrt(dx * dx + dy * dy);
    n += 1;
  }
  if (n == 0) return std::nullopt;
  return acc / n;
}

}  // namespace tpr

#endif
