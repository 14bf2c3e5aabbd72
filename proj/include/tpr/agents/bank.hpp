#ifndef TPR_AGENTS_BANK_HPP
#define TPR_AGENTS_BANK_HPP

#include <array>

#include "tpr/agents/encoding.hpp"
#include "tpr/agents/qlambda.hpp"
#include "tpr/agents/qnet.hpp"
#include "tpr/env/sprite_env.hpp"

namespace tpr {

struct OptionHead {
  int keypoint = 0;   // 0..K-1
  int direction = 0;  // 0: x+, 1: x-, 2: y+, 3: y-

  int flat() const { return keypoint * 4 + direction; }
};

struct BankConfig {
  int k = 3;
  int actions = kActionCount;
  int hidden = 256;
  int obs_h = 64, obs_w = 64;
  int commit_steps = 20;          // T
  int n_step = 20;                // q(lambda) horizon
  double lambda = 0.9;
  double gamma = 0.9;
  double eps_log_lo = 1e-4, eps_log_hi = 0.4;
  int target_sync_every = 200;

  int head_count() const { return k * 4; }
  int out_dim() const { return k * 4 * actions; }
};

// The K x 4 option-head Q function bank: one shared recurrent network whose
// output reshapes to (K, 4, actions), plus a periodically synced target
// copy. Heads index intrinsic keypoint-displacement rewards.
template <typename T>
class QFunctionBank {
 public:
  QFunctionBank(BankConfig cfg, Rng init_rng)
      : cfg_(cfg),
        online_("bank", cfg.obs_h, cfg.obs_w, cfg.hidden, cfg.out_dim()),
        target_("bank_t", cfg.obs_h, cfg.obs_w, cfg.hidden, cfg.out_dim()) {
    require_config(cfg_.k >= 1 && cfg_.actions >= 2, "bank: bad K or action count");
    online_.init(init_rng);
    target_.copy_values_from(online_);
  }

  const BankConfig& config() const { return cfg_; }
  ConvLstmQNet<T>& online() { return online_; }
  ConvLstmQNet<T>& target() { return target_; }

  LstmState<T> initial_state() const { return online_.initial_state(1); }

  // Q values for one observation: [K, 4, actions] flattened row-major.
  Tensor<T> q_values(const Tensor<T>& obs, LstmState<T>& state) {
    return online_.forward_step(obs, state);
  }

  double q_at(const Tensor<T>& q, int head, int action) const {
    return q[static_cast<std::int64_t>(head) * cfg_.actions + action];
  }

  int argmax_action(const Tensor<T>& q, int head) const {
    int best = 0;
    double best_v = q_at(q, head, 0);
    for (int a = 1; a < cfg_.actions; ++a) {
      const double v = q_at(q, head, a);
      if (v > best_v) {
        best_v = v;
        best = a;
      }
    }
    return best;
  }

  // Gap-rule controllability on a Q table [K,4,a]: the keypoint whose mean
  // per-direction action gap max_a Q - min_a Q is largest; ties resolve to
  // the lowest index.
  int controllability_from_q(const Tensor<T>& q) const {
    int best_i = 0;
    double best_gap = -1.0;
    for (int i = 0; i < cfg_.k; ++i) {
      double gap_sum = 0.0;
      for (int j = 0; j < 4; ++j) {
        const int head = i * 4 + j;
        double lo = q_at(q, head, 0), hi = q_at(q, head, 0);
        for (int a = 1; a < cfg_.actions; ++a) {
          const double v = q_at(q, head, a);
          lo = std::min(lo, v);
          hi = std::max(hi, v);
        }
        gap_sum += hi - lo;
      }
      const double gap = gap_sum / 4.0;
      if (gap > best_gap + 1e-15) {
        best_gap = gap;
        best_i = i;
      }
    }
    return best_i;
  }

  int controllability(const Tensor<T>& obs) {
    auto state = initial_state();
    auto q = online_.forward_step(obs, state);
    return controllability_from_q(q);
  }

  void sync_target() { target_.copy_values_from(online_); }

  ParamRefs<T> params() { return online_.params(); }

 private:
  BankConfig cfg_;
  ConvLstmQNet<T> online_, target_;
};

// Per-actor exploration state: commitment to one option head for T steps,
// epsilon-greedy within the head, epsilon drawn log-uniformly per actor.
struct ExploreActorState {
  OptionHead head;
  int commit_left = 0;
  double epsilon = 0.1;
  Rng rng{0};

  static ExploreActorState make(Rng rng_in, double lo, double hi) {
    ExploreActorState s;
    s.rng = rng_in;
    s.epsilon = s.rng.log_uniform(lo, hi);
    return s;
  }
};

// One exploration action. Commitment expires at episode starts and after T
// steps; heads are sampled uniformly. With `fixed_keypoint` >= 0 only the
// direction is resampled (the evaluation-time controllability behavior).
template <typename T>
Action act_explore(QFunctionBank<T>& bank, const Tensor<T>& obs,
                   LstmState<T>& lstm, ExploreActorState& actor,
                   bool episode_start, int fixed_keypoint = -1) {
  const auto& cfg = bank.config();
  if (episode_start || actor.commit_left <= 0) {
    if (fixed_keypoint >= 0) {
      actor.head.keypoint = fixed_keypoint;
      actor.head.direction = actor.rng.index(4);
    } else {
      const int flat = actor.rng.index(cfg.head_count());
      actor.head.keypoint = flat / 4;
      actor.head.direction = flat % 4;
    }
    actor.commit_left = cfg.commit_steps;
  }
  auto q = bank.q_values(obs, lstm);
  actor.commit_left -= 1;
  const int head = actor.head.flat();
  if (actor.rng.bernoulli(actor.epsilon)) return static_cast<Action>(actor.rng.index(cfg.actions));
  return static_cast<Action>(bank.argmax_action(q, head));
}

}  // namespace tpr

#endif
