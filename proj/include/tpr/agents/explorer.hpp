#ifndef TPR_AGENTS_EXPLORER_HPP
#define TPR_AGENTS_EXPLORER_HPP

#include <algorithm>
#include <cmath>
#include <memory>
#include <set>

#include "tpr/agents/bank.hpp"
#include "tpr/agents/replay.hpp"
#include "tpr/data/pairs.hpp"
#include "tpr/model/transporter.hpp"
#include "tpr/util/csv.hpp"

namespace tpr {

struct ExplorerConfig {
  BankConfig bank;
  TransporterConfig model;
  int actors = 8;
  std::int64_t budget_frames = 200000;    // environment frames (steps * action_repeat)
  int replay_capacity = 12000;            // agent steps
  int warmup_steps = 400;                 // before learner updates start
  int update_every = 8;                   // agent steps per learner update
  int bank_batch = 2;                     // windows per bank update
  int unroll = 21;                        // window length (n_step + 1)
  int model_batch = 4;                    // pairs per transporter update
  int model_update_every = 8;             // agent steps per transporter update
  int log_every_steps = 500;
  double model_lr = 1e-3;
  double bank_lr = 5e-4;
};

struct CurvePoint {
  std::int64_t step = 0;
  double episode_return_mean = 0.0;
  double episode_return_std = 0.0;
  double intrinsic_loss = 0.0;
  double td_loss = 0.0;
};

struct ExplorerResult {
  std::vector<CurvePoint> curve;
  std::vector<double> episode_returns;  // every finished episode, in order
  std::int64_t frames_used = 0;
};

// Option-bank explorer: actors step the environment with committed option
// heads while one learner trains every head from shared replay and learns
// the Transporter from frame pairs of the same stream, all without touching
// the extrinsic reward. Actor parameter snapshots refresh at episode
// boundaries. Rewards for the heads are recomputed from the current
// detector at learner time.
template <typename T>
class ExplorerTrainer {
 public:
  ExplorerTrainer(ExplorerConfig cfg, const SpriteEnvConfig& env_cfg, Rng master)
      : cfg_(cfg), env_cfg_(env_cfg),
        bank_(cfg.bank, master.fork("bank_init")),
        model_(cfg.model, master.fork("model_init")),
        replay_(cfg.replay_capacity, env_cfg.height, env_cfg.width),
        bank_opt_(make_adam(cfg.bank_lr)), model_opt_(make_adam(cfg.model_lr)),
        learn_rng_(master.fork("learner")), master_(master) {}

  QFunctionBank<T>& bank() { return bank_; }
  TransporterModel<T>& model() { return model_; }
  SequenceReplay& replay() { return replay_; }

  // Single learner updates, exposed so tests can drive the learner directly.
  double learn_bank_once() { return bank_update(); }
  double learn_model_once() { return model_update(); }

  ExplorerResult train() {
    ExplorerResult result;
    std::vector<Actor> actors;
    for (int a = 0; a < cfg_.actors; ++a) actors.push_back(make_actor(a));

    std::int64_t agent_steps = 0;
    const std::int64_t max_steps = cfg_.budget_frames / env_cfg_.action_repeat;
    std::vector<double> window_returns;
    double intrinsic_loss_acc = 0.0, td_loss_acc = 0.0;
    std::int64_t update_count = 0, log_marker = 0;

    while (agent_steps < max_steps) {
      for (auto& actor : actors) {
        if (agent_steps >= max_steps) break;
        step_actor(actor, result, window_returns);
        agent_steps += 1;

        if (agent_steps > cfg_.warmup_steps) {
          if (agent_steps % cfg_.update_every == 0) {
            const double td = bank_update();
            td_loss_acc += td;
            update_count += 1;
            if (update_count % cfg_.bank.target_sync_every == 0) bank_.sync_target();
          }
          if (agent_steps % cfg_.model_update_every == 0)
            intrinsic_loss_acc += model_update();
        }
      }
      if (agent_steps - log_marker >= cfg_.log_every_steps) {
        log_marker = agent_steps;
        result.curve.push_back(make_curve_point(agent_steps, window_returns,
                                                intrinsic_loss_acc, td_loss_acc));
        window_returns.clear();
        intrinsic_loss_acc = td_loss_acc = 0.0;
      }
    }
    result.frames_used = agent_steps * env_cfg_.action_repeat;
    return result;
  }

  // Fraction of probe states where the gap rule picks the keypoint whose
  // detection sits closest to the avatar (identity from ground truth).
  double controllability_accuracy(int probes, Rng rng) {
    SpriteEnv env(env_cfg_);
    int correct = 0;
    int done_probes = 0;
    std::uint64_t episode_seed = 1;
    while (done_probes < probes) {
      auto obs = env.reset(rng.fork(episode_seed++).next_u64());
      auto lstm = bank_.initial_state();
      while (!env.done() && done_probes < probes) {
        auto res = env.step(static_cast<Action>(rng.index(kActionCount)));
        obs = res.observation;
        if (env.step_count() % 7 == 0 && !env.done()) {
          auto q = bank_.online().forward_step(obs, lstm);
          const int picked = bank_.controllability_from_q(q);
          auto kp = model_.keypoints(obs);
          const auto gt = env.ground_truth();
          int nearest = 0;
          double best = 1e9;
          for (int k = 0; k < cfg_.model.k; ++k) {
            const double dx = kp.at(0, k, 0) - gt[0].x;
            const double dy = kp.at(0, k, 1) - gt[0].y;
            const double d = dx * dx + dy * dy;
            if (d < best) {
              best = d;
              nearest = k;
            }
          }
          correct += picked == nearest ? 1 : 0;
          done_probes += 1;
        }
      }
    }
    return static_cast<double>(correct) / probes;
  }

 private:
  struct Actor {
    std::unique_ptr<SpriteEnv> env;
    Tensor<T> obs;
    LstmState<T> lstm{};
    ExploreActorState explore;
    double episode_return = 0.0;
    bool at_episode_start = true;
    std::uint32_t episode_counter = 0;
    int index = 0;
  };

  static AdamConfig make_adam(double lr) {
    AdamConfig cfg;
    cfg.lr = lr;
    return cfg;
  }

  Actor make_actor(int index) {
    Actor a;
    a.index = index;
    a.env = std::make_unique<SpriteEnv>(env_cfg_);
    Rng actor_rng = master_.fork("actor").fork(static_cast<std::uint64_t>(index));
    a.explore = ExploreActorState::make(actor_rng.fork("explore"),
                                        cfg_.bank.eps_log_lo, cfg_.bank.eps_log_hi);
    a.obs = a.env->reset(actor_rng.fork("episodes").next_u64());
    a.lstm = bank_.initial_state();
    a.at_episode_start = true;
    return a;
  }

  void step_actor(Actor& actor, ExplorerResult& result, std::vector<double>& window_returns) {
    const auto action = act_explore(bank_, actor.obs, actor.lstm, actor.explore,
                                    actor.at_episode_start);
    actor.at_episode_start = false;
    auto res = actor.env->step(action);
    // keypoints at the pre-step observation, for the replay schema
    auto kp = model_.keypoints(actor.obs);

    ReplayRecord rec;
    rec.obs = SequenceReplay::quantize(actor.obs);
    rec.keypoints.assign(kp.data(), kp.data() + kp.numel());
    rec.action = static_cast<std::uint8_t>(action);
    rec.extrinsic_reward = static_cast<float>(res.reward);  // recorded, never trained on
    rec.done = res.done;
    rec.episode_id = (static_cast<std::uint32_t>(actor.index) << 20) | actor.episode_counter;
    replay_.append(std::move(rec));

    actor.episode_return += res.reward;
    actor.obs = std::move(res.observation);
    if (res.done) {
      result.episode_returns.push_back(actor.episode_return);
      window_returns.push_back(actor.episode_return);
      actor.episode_return = 0.0;
      actor.episode_counter += 1;
      Rng actor_rng = master_.fork("actor").fork(static_cast<std::uint64_t>(actor.index));
      actor.obs = actor.env->reset(
          actor_rng.fork("episodes").fork(actor.episode_counter).next_u64());
      actor.lstm = bank_.initial_state();
      actor.at_episode_start = true;  // snapshot refresh point in the 1-process setting
    }
  }

  // One bank update: sampled windows, recomputed keypoints, q(lambda)
  // targets per head from the target net, squared TD error on the taken
  // action of every head.
  double bank_update() {
    const auto& bc = cfg_.bank;
    double loss_acc = 0.0;
    int loss_terms = 0;
    for (int b = 0; b < cfg_.bank_batch; ++b) {
      auto window = replay_.sample_window(cfg_.unroll, learn_rng_);
      if (window.empty()) continue;
      const int t_count = cfg_.unroll - 1;

      // current-detector keypoints for every observation in the window
      std::vector<Tensor<T>> obs(window.size());
      for (size_t i = 0; i < window.size(); ++i)
        obs[i] = SequenceReplay::dequantize(window[i].obs, replay_.obs_height(),
                                            replay_.obs_width());
      Tensor<T> kp_all;
      {
        Tensor<T> stacked = Tensor<T>::uninit(
            {static_cast<int>(window.size()), replay_.obs_height(), replay_.obs_width(), 3});
        for (size_t i = 0; i < window.size(); ++i)
          std::copy(obs[i].data(), obs[i].data() + obs[i].numel(),
                    stacked.data() + obs[i].numel() * static_cast<std::int64_t>(i));
        kp_all = model_.keypoints(stacked);
      }

      // online and target unrolls
      std::vector<typename ConvLstmQNet<T>::StepCache> caches(window.size());
      std::vector<Tensor<T>> q_online(window.size());
      std::vector<Tensor<T>> q_target(window.size());
      auto online_state = bank_.online().initial_state(1);
      auto target_state = bank_.target().initial_state(1);
      for (size_t i = 0; i < window.size(); ++i) {
        q_online[i] = bank_.online().forward_step(obs[i], online_state, &caches[i]);
        q_target[i] = bank_.target().forward_step(obs[i], target_state);
      }

      std::vector<Tensor<T>> dq(window.size());
      for (auto& g : dq) g = Tensor<T>({1, bc.out_dim()});

      const double norm = 1.0 / (t_count * bc.head_count());
      for (int i = 0; i < bc.k; ++i) {
        // per-keypoint displacement rewards along the window
        std::vector<std::array<double, 4>> rewards(static_cast<size_t>(t_count));
        for (int t = 0; t < t_count; ++t) {
          const double dx = kp_all.at(t + 1, i, 0) - kp_all.at(t, i, 0);
          const double dy = kp_all.at(t + 1, i, 1) - kp_all.at(t, i, 1);
          rewards[static_cast<size_t>(t)] = {dx, -dx, dy, -dy};
        }
        for (int j = 0; j < 4; ++j) {
          const int head = i * 4 + j;
          std::vector<double> r(static_cast<size_t>(t_count));
          std::vector<double> boot(static_cast<size_t>(t_count + 1));
          std::vector<bool> term(static_cast<size_t>(t_count));
          for (int t = 0; t < t_count; ++t) {
            r[static_cast<size_t>(t)] = rewards[static_cast<size_t>(t)][static_cast<size_t>(j)];
            term[static_cast<size_t>(t)] = window[static_cast<size_t>(t)].done;
          }
          for (int t = 0; t <= t_count; ++t) {
            double best = -1e30;
            for (int a = 0; a < bc.actions; ++a)
              best = std::max(best, static_cast<double>(
                                        q_target[static_cast<size_t>(t)]
                                                [static_cast<std::int64_t>(head) * bc.actions + a]));
            boot[static_cast<size_t>(t)] = best;
          }
          auto targets = q_lambda_targets(r, boot, term, bc.n_step, bc.lambda, bc.gamma);
          for (int t = 0; t < t_count; ++t) {
            const int action = window[static_cast<size_t>(t)].action;
            const auto qi = static_cast<std::int64_t>(head) * bc.actions + action;
            const double err = static_cast<double>(q_online[static_cast<size_t>(t)][qi]) -
                               targets[static_cast<size_t>(t)];
            loss_acc += err * err;
            loss_terms += 1;
            dq[static_cast<size_t>(t)][qi] = static_cast<T>(2.0 * err * norm);
          }
        }
      }
      zero_grads(bank_.params());
      // grads only flow through transitions; drop the final step's cache
      caches.pop_back();
      dq.pop_back();
      bank_.online().backward_sequence(caches, dq);
      bank_opt_.step(bank_.params());
    }
    return loss_terms ? loss_acc / loss_terms : 0.0;
  }

  // Transporter update from frame pairs sampled out of replay windows.
  double model_update() {
    const int h = replay_.obs_height(), w = replay_.obs_width();
    Tensor<T> xs = Tensor<T>::uninit({cfg_.model_batch, h, w, 3});
    Tensor<T> xt = Tensor<T>::uninit({cfg_.model_batch, h, w, 3});
    int filled = 0;
    for (int attempt = 0; attempt < cfg_.model_batch * 8 && filled < cfg_.model_batch; ++attempt) {
      const int offset = 1 + learn_rng_.index(kMaxPairOffset);
      auto window = replay_.sample_window(offset + 1, learn_rng_);
      if (window.empty()) continue;
      auto a = SequenceReplay::dequantize(window.front().obs, h, w);
      auto b = SequenceReplay::dequantize(window.back().obs, h, w);
      std::copy(a.data(), a.data() + a.numel(), xs.data() + a.numel() * filled);
      std::copy(b.data(), b.data() + b.numel(), xt.data() + b.numel() * filled);
      filled += 1;
    }
    if (filled < cfg_.model_batch) return 0.0;
    return model_.train_step(xs, xt, model_opt_);
  }

  CurvePoint make_curve_point(std::int64_t step, const std::vector<double>& returns,
                              double intrinsic_loss, double td_loss) {
    CurvePoint p;
    p.step = step;
    p.intrinsic_loss = intrinsic_loss;
    p.td_loss = td_loss;
    if (!returns.empty()) {
      double mean = 0.0;
      for (double r : returns) mean += r;
      mean /= static_cast<double>(returns.size());
      double var = 0.0;
      for (double r : returns) var += (r - mean) * (r - mean);
      p.episode_return_mean = mean;
      p.episode_return_std = std::sqrt(var / static_cast<double>(returns.size()));
    }
    return p;
  }

  ExplorerConfig cfg_;
  SpriteEnvConfig env_cfg_;
  QFunctionBank<T> bank_;
  TransporterModel<T> model_;
  SequenceReplay replay_;
  Adam<T> bank_opt_, model_opt_;
  Rng learn_rng_;
  Rng master_;
};

// log10 of the sequential search-space ratio between primitive actions and
// committed options: steps*log10(actions) - commits*log10(options).
inline double search_space_log10_ratio(int actions, int steps, int options, int commits) {
  return steps * std::log10(static_cast<double>(actions)) -
         commits * std::log10(static_cast<double>(options));
}

// Extrinsic-reward-free policy evaluation: runs episodes, records returns
// and how many distinct discretized avatar cells were visited.
struct ExplorationEval {
  std::vector<double> returns;
  int distinct_cells = 0;

  double mean() const {
    if (returns.empty()) return 0.0;
    double m = 0.0;
    for (double r : returns) m += r;
    return m / static_cast<double>(returns.size());
  }
  double stddev() const {
    if (returns.size() < 2) return 0.0;
    const double m = mean();
    double var = 0.0;
    for (double r : returns) var += (r - m) * (r - m);
    return std::sqrt(var / static_cast<double>(returns.size()));
  }
  double percentile(double p) const {
    if (returns.empty()) return 0.0;
    auto sorted = returns;
    std::sort(sorted.begin(), sorted.end());
    const double idx = p / 100.0 * (static_cast<double>(sorted.size()) - 1);
    const size_t lo = static_cast<size_t>(idx);
    const size_t hi = std::min(lo + 1, sorted.size() - 1);
    const double frac = idx - static_cast<double>(lo);
    return sorted[lo] * (1.0 - frac) + sorted[hi] * frac;
  }
};

template <typename PolicyFn>
ExplorationEval evaluate_exploration(const SpriteEnvConfig& env_cfg, PolicyFn&& policy,
                                     int episodes, Rng rng) {
  SpriteEnv env(env_cfg);
  ExplorationEval eval;
  std::set<int> cells;
  const int grid = 8;
  for (int e = 0; e < episodes; ++e) {
    auto obs = env.reset(rng.fork(static_cast<std::uint64_t>(e)).next_u64());
    double ret = 0.0;
    bool first = true;
    while (!env.done()) {
      const Action a = policy(obs, first);
      first = false;
      auto res = env.step(a);
      ret += res.reward;
      obs = std::move(res.observation);
      const auto gt = env.ground_truth();
      const int cx = std::clamp(static_cast<int>((gt[0].x + 1.0) * 0.5 * grid), 0, grid - 1);
      const int cy = std::clamp(static_cast<int>((gt[0].y + 1.0) * 0.5 * grid), 0, grid - 1);
      cells.insert(cy * grid + cx);
    }
    eval.returns.push_back(ret);
  }
  eval.distinct_cells = static_cast<int>(cells.size());
  return eval;
}

}  // namespace tpr

#endif
