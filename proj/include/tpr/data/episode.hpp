#ifndef TPR_DATA_EPISODE_HPP
#define TPR_DATA_EPISODE_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "tpr/core/rng.hpp"
#include "tpr/env/sprite_env.hpp"
#include "tpr/util/csv.hpp"
#include "tpr/util/ppm.hpp"

namespace tpr {

// One rollout: frame i is the observation after step i (the reset frame is
// not stored), so length() == steps taken.
struct Episode {
  std::uint32_t id = 0;
  std::vector<Tensor<float>> observations;
  std::vector<GroundTruth> truths;
  std::vector<Action> actions;
  std::vector<double> rewards;

  int length() const { return static_cast<int>(observations.size()); }
};

// Uniform-random policy rollout, deterministic per (env config, seed).
inline Episode collect_episode(SpriteEnv& env, std::uint64_t seed,
                               std::uint32_t episode_id = 0) {
  Episode ep;
  ep.id = episode_id;
  (void)env.reset(seed);
  Rng policy = Rng(seed).fork("policy");
  while (!env.done()) {
    const auto action = static_cast<Action>(policy.index(kActionCount));
    auto res = env.step(action);
    ep.actions.push_back(action);
    ep.rewards.push_back(res.reward);
    ep.observations.push_back(std::move(res.observation));
    ep.truths.push_back(env.ground_truth());
  }
  return ep;
}

// Episode dump: index CSV plus one P6 PPM per frame.
inline void write_episode_dump(const std::string& dir, const Episode& ep,
                               const std::string& provenance) {
  const size_t n_sprites = ep.truths.empty() ? 0 : ep.truths[0].size();
  std::vector<std::string> cols = {"episode", "step", "action", "reward"};
  for (size_t s = 0; s < n_sprites; ++s) {
    const std::string base = "sprite" + std::to_string(s);
    cols.push_back(base + "_x");
    cols.push_back(base + "_y");
    cols.push_back(base + "_present");
  }
  CsvWriter csv(dir + "/index.csv", provenance, cols);
  for (int t = 0; t < ep.length(); ++t) {
    std::vector<std::string> row = {std::to_string(ep.id), std::to_string(t),
                                    std::to_string(static_cast<int>(ep.actions[t])),
                                    csv_num(ep.rewards[t])};
    for (const auto& g : ep.truths[t]) {
      row.push_back(csv_num(g.x));
      row.push_back(csv_num(g.y));
      row.push_back(g.present ? "1" : "0");
    }
    csv.row(row);
    char name[32];
    std::snprintf(name, sizeof(name), "/frame_%04d.ppm", t);
    write_ppm(dir + name, ep.observations[static_cast<size_t>(t)]);
  }
}

}  // namespace tpr

#endif
