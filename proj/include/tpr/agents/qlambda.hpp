#ifndef TPR_AGENTS_QLAMBDA_HPP
#define TPR_AGENTS_QLAMBDA_HPP

#include <vector>

#include "tpr/core/errors.hpp"

namespace tpr {

// n-step Q(lambda) targets for one head over a contiguous window.
//
//   rewards[t]   reward of transition t (t = 0..T-1)
//   boot_max[i]  max_a Q_target(s_i, a) for state i (i = 0..T)
//   terminal[t]  transition t ended the episode
//
// G^(k)_t sums discounted rewards for k steps and bootstraps with
// gamma^k * boot_max[t+k] unless a terminal cuts it short; the target is the
// lambda-weighted mixture of G^(1..n') with n' truncated at the window end,
// the tail weight going to the longest return.
inline std::vector<double> q_lambda_targets(const std::vector<double>& rewards,
                                            const std::vector<double>& boot_max,
                                            const std::vector<bool>& terminal,
                                            int n, double lambda, double gamma) {
  require_config(n >= 1, "q_lambda: n must be >= 1");
  require_config(lambda >= 0.0 && lambda <= 1.0, "q_lambda: lambda must be in [0,1]");
  const int t_count = static_cast<int>(rewards.size());
  require(boot_max.size() == rewards.size() + 1, "q_lambda: need T+1 bootstrap values");
  require(terminal.size() == rewards.size(), "q_lambda: terminal flags size mismatch");

  std::vector<double> targets(static_cast<size_t>(t_count));
  for (int t = 0; t < t_count; ++t) {
    const int n_eff = std::min(n, t_count - t);
    double mix = 0.0;
    double weight_acc = 0.0;
    double running_reward = 0.0;
    double discount = 1.0;
    bool cut = false;
    for (int k = 1; k <= n_eff; ++k) {
      if (!cut) {
        running_reward += discount * rewards[static_cast<size_t>(t + k - 1)];
        if (terminal[static_cast<size_t>(t + k - 1)]) cut = true;
        discount *= gamma;
      }
      double g_k = running_reward;
      if (!cut) g_k += discount * boot_max[static_cast<size_t>(t + k)];
      const double w = k < n_eff ? (1.0 - lambda) * std::pow(lambda, k - 1)
                                 : std::pow(lambda, k - 1);
      mix += w * g_k;
      weight_acc += w;
    }
    (void)weight_acc;  // weights sum to 1 by construction
    targets[static_cast<size_t>(t)] = mix;
  }
  return targets;
}

}  // namespace tpr

#endif
