#ifndef TPR_EVAL_ASSIGNMENT_HPP
#define TPR_EVAL_ASSIGNMENT_HPP

#include <algorithm>
#include <optional>
#include <vector>

#include "tpr/eval/trajectory.hpp"

namespace tpr {

struct Match {
  int det = -1, gt = -1;
  double distance = 0.0;
};

struct MatchResult {
  std::vector<Match> matches;        // sorted by (det, gt)
  std::vector<int> unmatched_det;
  std::vector<int> unmatched_gt;     // counted gts only
  int n_det = 0;
  int n_gt_counted = 0;              // gts present at least once
};

namespace detail {

// Exhaustive branch-and-bound over assignments: maximize the matched count,
// then minimize total distance, then prefer the lexicographically smallest
// (det, gt) pairing. Exact by construction; intended for the small
// trajectory counts this toolkit meets (K and sprite counts of a few).
class AssignmentSolver {
 public:
  AssignmentSolver(const std::vector<std::vector<std::optional<double>>>& cost, int n_gt)
      : cost_(cost), n_det_(static_cast<int>(cost.size())), n_gt_(n_gt),
        gt_used_(static_cast<size_t>(n_gt), false) {}

  std::vector<std::pair<int, int>> solve() {
    current_.clear();
    best_count_ = -1;
    dfs(0, 0, 0.0);
    return best_;
  }

 private:
  void dfs(int det, int count, double cost_sum) {
    // bound: even matching every remaining det cannot beat the best count
    const int remaining = n_det_ - det;
    if (count + remaining < best_count_) return;
    if (det == n_det_) {
      consider(count, cost_sum);
      return;
    }
    // try gts in ascending order first so equal-cost solutions are found in
    // lexicographic order, then the skip branch
    for (int g = 0; g < n_gt_; ++g) {
      if (gt_used_[static_cast<size_t>(g)]) continue;
      const auto& c = cost_[static_cast<size_t>(det)][static_cast<size_t>(g)];
      if (!c) continue;
      gt_used_[static_cast<size_t>(g)] = true;
      current_.emplace_back(det, g);
      dfs(det + 1, count + 1, cost_sum + *c);
      current_.pop_back();
      gt_used_[static_cast<size_t>(g)] = false;
    }
    dfs(det + 1, count, cost_sum);
  }

  void consider(int count, double cost_sum) {
    if (count < best_count_) return;
    if (count == best_count_) {
      if (cost_sum > best_cost_) return;
      if (cost_sum == best_cost_ && !lex_less(current_, best_)) return;
    }
    best_count_ = count;
    best_cost_ = cost_sum;
    best_ = current_;
  }

  static bool lex_less(const std::vector<std::pair<int, int>>& a,
                       const std::vector<std::pair<int, int>>& b) {
    return std::lexicographical_compare(a.begin(), a.end(), b.begin(), b.end());
  }

  const std::vector<std::vector<std::optional<double>>>& cost_;
  int n_det_, n_gt_;
  std::vector<bool> gt_used_;
  std::vector<std::pair<int, int>> current_, best_;
  int best_count_ = -1;
  double best_cost_ = 0.0;
};

}  // namespace detail

// One-to-one assignment between detected and ground-truth trajectories.
// Pairs with mean distance above epsilon (or undefined) are infeasible;
// ground truths absent at every step are dropped from consideration and
// from the counted total. The assignment is exactly optimal.
inline MatchResult match_trajectories(const std::vector<Trajectory>& dets,
                                      const std::vector<Trajectory>& gts,
                                      double epsilon) {
  require(epsilon > 0.0, "match_trajectories: epsilon must be positive");
  MatchResult result;
  result.n_det = static_cast<int>(dets.size());

  std::vector<int> counted_gt;
  for (size_t g = 0; g < gts.size(); ++g)
    if (gts[g].ever_present()) counted_gt.push_back(static_cast<int>(g));
  result.n_gt_counted = static_cast<int>(counted_gt.size());

  std::vector<std::vector<std::optional<double>>> cost(
      dets.size(), std::vector<std::optional<double>>(counted_gt.size()));
  for (size_t d = 0; d < dets.size(); ++d)
    for (size_t g = 0; g < counted_gt.size(); ++g) {
      auto dist = trajectory_distance(dets[d], gts[static_cast<size_t>(counted_gt[g])]);
      if (dist && *dist <= epsilon) cost[d][g] = *dist;
    }

  detail::AssignmentSolver solver(cost, static_cast<int>(counted_gt.size()));
  auto pairs = solver.solve();

  std::vector<bool> det_matched(dets.size(), false), gt_matched(counted_gt.size(), false);
  for (const auto& [d, g] : pairs) {
    result.matches.push_back({d, counted_gt[static_cast<size_t>(g)], *cost[static_cast<size_t>(d)][static_cast<size_t>(g)]});
    det_matched[static_cast<size_t>(d)] = true;
    gt_matched[static_cast<size_t>(g)] = true;
  }
  std::sort(result.matches.begin(), result.matches.end(),
            [](const Match& a, const Match& b) {
              return a.det != b.det ? a.det < b.det : a.gt < b.gt;
            });
  for (size_t d = 0; d < dets.size(); ++d)
    if (!det_matched[d]) result.unmatched_det.push_back(static_cast<int>(d));
  for (size_t g = 0; g < counted_gt.size(); ++g)
    if (!gt_matched[g]) result.unmatched_gt.push_back(counted_gt[g]);
  return result;
}

}  // namespace tpr

#endif
