#ifndef TPR_AGENTS_KEYQN_HPP
#define TPR_AGENTS_KEYQN_HPP

#include <deque>

#include "tpr/agents/encoding.hpp"
#include "tpr/agents/qnet.hpp"
#include "tpr/env/sprite_env.hpp"
#include "tpr/model/transporter.hpp"

namespace tpr {

struct KeyQnConfig {
  ThermometerConfig thermometer;  // B bins per coordinate
  int hidden = 128;
  int unroll = 10;
  int batch = 8;
  int replay_capacity = 50000;
  int warmup_steps = 500;
  int target_sync_every = 500;
  double gamma = 0.99;
  double lr = 1e-3;
  double eps_start = 1.0, eps_final = 0.05;
  double eps_anneal_fraction = 0.6;  // of the interaction budget
};

// 1-step fitted-Q regression targets: r + gamma * max_a Q_target(s'), no
// bootstrap across terminals.
inline std::vector<double> fitted_q_targets(const std::vector<double>& rewards,
                                            const std::vector<double>& boot_max_next,
                                            const std::vector<bool>& done,
                                            double gamma) {
  require(rewards.size() == boot_max_next.size() && rewards.size() == done.size(),
          "fitted_q_targets: size mismatch");
  std::vector<double> out(rewards.size());
  for (size_t t = 0; t < rewards.size(); ++t)
    out[t] = rewards[t] + (done[t] ? 0.0 : gamma * boot_max_next[t]);
  return out;
}

struct CurveSample {
  std::int64_t step = 0;
  double episode_return_mean = 0.0;
  double episode_return_std = 0.0;
  double td_loss = 0.0;
};

struct KeyQnResult {
  std::vector<double> episode_returns;
  std::vector<CurveSample> curve;
  std::int64_t steps_used = 0;
};

// Keypoint Q-network: a frozen Transporter supplies thermometer-encoded
// keypoint coordinates plus Gaussian-weighted feature readouts as the state;
// a recurrent Q head is trained by fitted-Q regression on replayed windows
// against a periodically synced target copy.
template <typename T>
class KeyQnAgent {
 public:
  KeyQnAgent(KeyQnConfig cfg, TransporterModel<T>& frozen_model, Rng init_rng)
      : cfg_(cfg), model_(frozen_model),
        state_dim_(frozen_model.config().k * (2 * cfg.thermometer.bins) +
                   frozen_model.config().k * TransporterConfig::kFeatChannels),
        online_("keyqn", state_dim_, cfg.hidden, kActionCount),
        target_("keyqn_t", state_dim_, cfg.hidden, kActionCount) {
    online_.init(init_rng);
    target_.copy_values_from(online_);
  }

  int state_dim() const { return state_dim_; }

  // Observation to Q-input state through the frozen detector and encoder.
  std::vector<float> encode_state(const Tensor<T>& obs) {
    auto raw = model_.keynet().forward(obs, BnMode::eval);
    auto ext = keypoints_from_maps(raw);
    auto phi = model_.features(obs, BnMode::eval);
    auto heat = render_heatmaps(ext.keypoints, model_.config().sigma,
                                phi.size(1), phi.size(2));
    auto readout = feature_readout(phi, heat);
    Tensor<float> kp_f = to_float(ext.keypoints);
    Tensor<float> read_f = to_float(readout);
    return keypoint_state(kp_f, read_f, cfg_.thermometer);
  }

  struct Transition {
    std::vector<float> state;
    std::uint8_t action = 0;
    float reward = 0.0f;
    bool done = false;
    std::uint32_t episode_id = 0;
  };

  KeyQnResult train(const SpriteEnvConfig& env_cfg, std::int64_t budget_steps, Rng master) {
    require_config(budget_steps > cfg_.warmup_steps,
                   "keyqn: interaction budget smaller than the warmup");
    SpriteEnv env(env_cfg);
    Rng policy_rng = master.fork("policy");
    Rng learn_rng = master.fork("learner");
    Adam<T> opt(adam_cfg());

    KeyQnResult result;
    std::vector<double> window_returns;
    double td_acc = 0.0;
    std::int64_t td_count = 0;

    std::uint32_t episode_id = 0;
    auto obs = env.reset(master.fork("episodes").fork(episode_id).next_u64());
    auto lstm = online_.initial_state(1);
    double episode_return = 0.0;
    std::int64_t updates = 0;

    for (std::int64_t step = 0; step < budget_steps; ++step) {
      const double frac = static_cast<double>(step) /
                          std::max<std::int64_t>(1, static_cast<std::int64_t>(
                                                        cfg_.eps_anneal_fraction * budget_steps));
      const double eps = frac >= 1.0 ? cfg_.eps_final
                                     : cfg_.eps_start + (cfg_.eps_final - cfg_.eps_start) * frac;

      auto state_vec = encode_state(obs);
      Action action;
      {
        Tensor<T> in = state_tensor(state_vec);
        auto q = online_.forward_step(in, lstm);
        if (policy_rng.bernoulli(eps)) {
          action = static_cast<Action>(policy_rng.index(kActionCount));
        } else {
          int best = 0;
          for (int a = 1; a < kActionCount; ++a)
            if (q[a] > q[best]) best = a;
          action = static_cast<Action>(best);
        }
      }
      auto res = env.step(action);
      episode_return += res.reward;

      Transition tr;
      tr.state = std::move(state_vec);
      tr.action = static_cast<std::uint8_t>(action);
      tr.reward = static_cast<float>(res.reward);
      tr.done = res.done;
      tr.episode_id = episode_id;
      push_replay(std::move(tr));

      obs = std::move(res.observation);
      if (res.done) {
        window_returns.push_back(episode_return);
        result.episode_returns.push_back(episode_return);
        episode_return = 0.0;
        episode_id += 1;
        obs = env.reset(master.fork("episodes").fork(episode_id).next_u64());
        lstm = online_.initial_state(1);
      }

      if (step >= cfg_.warmup_steps) {
        td_acc += update(learn_rng, opt);
        td_count += 1;
        updates += 1;
        if (updates % cfg_.target_sync_every == 0) target_.copy_values_from(online_);
      }

      if ((step + 1) % 1000 == 0) {
        CurveSample s;
        s.step = step + 1;
        if (!window_returns.empty()) {
          double m = 0.0;
          for (double r : window_returns) m += r;
          m /= static_cast<double>(window_returns.size());
          double var = 0.0;
          for (double r : window_returns) var += (r - m) * (r - m);
          s.episode_return_mean = m;
          s.episode_return_std = std::sqrt(var / static_cast<double>(window_returns.size()));
        }
        s.td_loss = td_count ? td_acc / static_cast<double>(td_count) : 0.0;
        result.curve.push_back(s);
        window_returns.clear();
        td_acc = 0.0;
        td_count = 0;
      }
    }
    result.steps_used = budget_steps;
    return result;
  }

  // Greedy rollout return.
  double evaluate(const SpriteEnvConfig& env_cfg, int episodes, Rng rng) {
    SpriteEnv env(env_cfg);
    double total = 0.0;
    for (int e = 0; e < episodes; ++e) {
      auto obs = env.reset(rng.fork(static_cast<std::uint64_t>(e)).next_u64());
      auto lstm = online_.initial_state(1);
      while (!env.done()) {
        auto state_vec = encode_state(obs);
        Tensor<T> in = state_tensor(state_vec);
        auto q = online_.forward_step(in, lstm);
        int best = 0;
        for (int a = 1; a < kActionCount; ++a)
          if (q[a] > q[best]) best = a;
        auto res = env.step(static_cast<Action>(best));
        total += res.reward;
        obs = std::move(res.observation);
      }
    }
    return total / episodes;
  }

  VecLstmQNet<T>& net() { return online_; }

 private:
  static Tensor<float> to_float(const Tensor<T>& t) {
    Tensor<float> out = Tensor<float>::uninit(t.shape());
    for (std::int64_t i = 0; i < t.numel(); ++i) out[i] = static_cast<float>(t[i]);
    return out;
  }

  Tensor<T> state_tensor(const std::vector<float>& v) const {
    Tensor<T> t = Tensor<T>::uninit({1, state_dim_});
    for (size_t i = 0; i < v.size(); ++i) t[static_cast<std::int64_t>(i)] = static_cast<T>(v[i]);
    return t;
  }

  AdamConfig adam_cfg() const {
    AdamConfig a;
    a.lr = cfg_.lr;
    return a;
  }

  void push_replay(Transition tr) {
    replay_.push_back(std::move(tr));
    if (static_cast<int>(replay_.size()) > cfg_.replay_capacity) replay_.pop_front();
  }

  // One fitted-Q regression pass over `batch` sampled windows.
  double update(Rng& rng, Adam<T>& opt) {
    const int window_len = cfg_.unroll + 1;
    if (static_cast<int>(replay_.size()) < window_len) return 0.0;
    double loss_acc = 0.0;
    int terms = 0;
    for (int b = 0; b < cfg_.batch; ++b) {
      // contiguous same-episode window
      int start = -1;
      for (int attempt = 0; attempt < 32 && start < 0; ++attempt) {
        const int s = rng.index(static_cast<int>(replay_.size()) - window_len + 1);
        bool ok = true;
        for (int i = 1; i < window_len; ++i) {
          if (replay_[static_cast<size_t>(s + i - 1)].done ||
              replay_[static_cast<size_t>(s + i - 1)].episode_id !=
                  replay_[static_cast<size_t>(s + i)].episode_id) {
            ok = false;
            break;
          }
        }
        if (ok) start = s;
      }
      if (start < 0) continue;

      std::vector<typename VecLstmQNet<T>::StepCache> caches(static_cast<size_t>(cfg_.unroll));
      std::vector<Tensor<T>> q_online(static_cast<size_t>(cfg_.unroll));
      std::vector<double> boot_next(static_cast<size_t>(cfg_.unroll));
      auto online_state = online_.initial_state(1);
      auto target_state = target_.initial_state(1);
      for (int t = 0; t < window_len; ++t) {
        const auto& tr = replay_[static_cast<size_t>(start + t)];
        Tensor<T> in = state_tensor(tr.state);
        if (t < cfg_.unroll)
          q_online[static_cast<size_t>(t)] =
              online_.forward_step(in, online_state, &caches[static_cast<size_t>(t)]);
        auto qt = target_.forward_step(in, target_state);
        if (t >= 1) {
          double best = -1e30;
          for (int a = 0; a < kActionCount; ++a)
            best = std::max(best, static_cast<double>(qt[a]));
          boot_next[static_cast<size_t>(t - 1)] = best;
        }
      }

      std::vector<double> rewards(static_cast<size_t>(cfg_.unroll));
      std::vector<bool> done(static_cast<size_t>(cfg_.unroll));
      for (int t = 0; t < cfg_.unroll; ++t) {
        rewards[static_cast<size_t>(t)] = replay_[static_cast<size_t>(start + t)].reward;
        done[static_cast<size_t>(t)] = replay_[static_cast<size_t>(start + t)].done;
      }
      auto targets = fitted_q_targets(rewards, boot_next, done, cfg_.gamma);

      std::vector<Tensor<T>> dq(static_cast<size_t>(cfg_.unroll));
      for (int t = 0; t < cfg_.unroll; ++t) {
        dq[static_cast<size_t>(t)] = Tensor<T>({1, kActionCount});
        const int action = replay_[static_cast<size_t>(start + t)].action;
        const double err = static_cast<double>(q_online[static_cast<size_t>(t)][action]) -
                           targets[static_cast<size_t>(t)];
        loss_acc += err * err;
        terms += 1;
        dq[static_cast<size_t>(t)][action] = static_cast<T>(2.0 * err / cfg_.unroll);
      }
      zero_grads(online_.params());
      online_.backward_sequence(caches, dq);
      opt.step(online_.params());
    }
    return terms ? loss_acc / terms : 0.0;
  }

  KeyQnConfig cfg_;
  TransporterModel<T>& model_;
  int state_dim_ = 0;
  VecLstmQNet<T> online_, target_;
  std::deque<Transition> replay_;
};

}  // namespace tpr

#endif
