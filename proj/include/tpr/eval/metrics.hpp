#ifndef TPR_EVAL_METRICS_HPP
#define TPR_EVAL_METRICS_HPP

#include <functional>
#include <limits>

#include "tpr/data/episode.hpp"
#include "tpr/eval/assignment.hpp"
#include "tpr/util/csv.hpp"

namespace tpr {

struct PRPoint {
  int length = 0;
  double precision = std::numeric_limits<double>::quiet_NaN();  // NaN = undefined
  double recall = std::numeric_limits<double>::quiet_NaN();
  std::int64_t n_matched = 0;
  std::int64_t n_det = 0;
  std::int64_t n_gt = 0;
};

// precision = matched / detected; recall = matched / counted ground truths.
// Zero denominators leave the metric undefined rather than zero.
inline PRPoint precision_recall(const MatchResult& match, int length = 0) {
  PRPoint p;
  p.length = length;
  p.n_matched = static_cast<std::int64_t>(match.matches.size());
  p.n_det = match.n_det;
  p.n_gt = match.n_gt_counted;
  if (p.n_det > 0) p.precision = static_cast<double>(p.n_matched) / p.n_det;
  if (p.n_gt > 0) p.recall = static_cast<double>(p.n_matched) / p.n_gt;
  return p;
}

// Keypoint positions for every frame of an episode, detector-defined.
using EpisodeDetector =
    std::function<std::vector<std::vector<std::array<double, 2>>>(const Episode&)>;

// Long-horizon tracking metrics: for each window length L, episodes are cut
// into non-overlapping start-aligned windows; detected trajectories follow
// each keypoint index across the window; match counts pool over all windows
// before the precision/recall division.
inline std::vector<PRPoint> pr_vs_length(const std::vector<Episode>& episodes,
                                         const EpisodeDetector& detector,
                                         const std::vector<int>& lengths,
                                         double epsilon) {
  require(!episodes.empty(), "pr_vs_length: no episodes");
  // detect once per episode
  std::vector<std::vector<std::vector<std::array<double, 2>>>> detections;
  detections.reserve(episodes.size());
  for (const auto& ep : episodes) detections.push_back(detector(ep));

  std::vector<PRPoint> out;
  for (int L : lengths) {
    require(L >= 1, "pr_vs_length: window length must be >= 1");
    std::int64_t matched = 0, n_det = 0, n_gt = 0;
    for (size_t e = 0; e < episodes.size(); ++e) {
      const auto& ep = episodes[e];
      const auto& det = detections[e];
      const int n_kp = det.empty() ? 0 : static_cast<int>(det[0].size());
      const size_t n_obj = ep.truths.empty() ? 0 : ep.truths[0].size();
      for (int start = 0; start + L <= ep.length(); start += L) {
        std::vector<Trajectory> det_traj(static_cast<size_t>(n_kp));
        for (int k = 0; k < n_kp; ++k)
          for (int t = start; t < start + L; ++t)
            det_traj[static_cast<size_t>(k)].points.push_back(det[static_cast<size_t>(t)][static_cast<size_t>(k)]);
        std::vector<Trajectory> gt_traj(n_obj);
        for (size_t s = 0; s < n_obj; ++s)
          for (int t = start; t < start + L; ++t) {
            const auto& g = ep.truths[static_cast<size_t>(t)][s];
            gt_traj[s].points.push_back({g.x, g.y});
            gt_traj[s].present.push_back(g.present);
          }
        auto match = match_trajectories(det_traj, gt_traj, epsilon);
        matched += static_cast<std::int64_t>(match.matches.size());
        n_det += match.n_det;
        n_gt += match.n_gt_counted;
      }
    }
    PRPoint p;
    p.length = L;
    p.n_matched = matched;
    p.n_det = n_det;
    p.n_gt = n_gt;
    if (n_det > 0) p.precision = static_cast<double>(matched) / n_det;
    if (n_gt > 0) p.recall = static_cast<double>(matched) / n_gt;
    out.push_back(p);
  }
  return out;
}

// Matching thresholds used by the reference benchmarks: the average
// ground-truth spatial extent of entities per environment, in normalized
// [-1,1] coordinates.
inline double epsilon_for_benchmark(const std::string& env) {
  if (env == "pong") return 0.20;
  if (env == "ms_pacman") return 0.15;
  if (env == "frostbite") return 0.20;
  if (env == "stack_4") return 0.15;
  throw ConfigError("no epsilon table entry for: " + env);
}

inline void write_metrics_csv(const std::string& path, const std::string& provenance,
                              const std::vector<PRPoint>& points, double epsilon,
                              std::uint64_t seed) {
  CsvWriter csv(path, provenance,
                {"length", "precision", "recall", "n_matched", "n_det", "n_gt",
                 "epsilon", "seed"});
  for (const auto& p : points)
    csv.row({std::to_string(p.length), csv_num(p.precision), csv_num(p.recall),
             std::to_string(p.n_matched), std::to_string(p.n_det),
             std::to_string(p.n_gt), csv_num(epsilon), std::to_string(seed)});
}

}  // namespace tpr

#endif
