#ifndef TPR_ENV_SPRITE_ENV_HPP
#define TPR_ENV_SPRITE_ENV_HPP

#include <array>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "tpr/core/errors.hpp"
#include "tpr/core/rng.hpp"
#include "tpr/core/tensor.hpp"

namespace tpr {

enum class Action : int { noop = 0, up = 1, down = 2, left = 3, right = 4 };
inline constexpr int kActionCount = 5;

enum class SpriteShape { disc, square };

struct SpriteSpec {
  SpriteShape shape = SpriteShape::disc;
  double radius_px = 4.0;
  std::array<float, 3> color{1.0f, 1.0f, 1.0f};
  double speed = 0.0;     // normalized units per sub-step (ballistic sprites)
  int blink_period = 0;   // 0 = always present; else hidden every other period
};

struct GoalSpec {
  bool enabled = false;
  double x = 0.75, y = 0.75;
  double radius = 0.2;  // normalized units, on the avatar center
};

// Positions live in [-1,1]^2 with the same half-pixel-center convention the
// detector grid uses: x = -1 + (2*px+1)/W. Ballistic sprites reflect off the
// walls at +-1; the avatar (sprite 0 when controllable) moves by avatar_step
// per sub-step and clamps so it stays fully inside the frame.
struct SpriteEnvConfig {
  int height = 64, width = 64;
  std::vector<SpriteSpec> sprites;
  bool controllable = false;
  double avatar_step = 0.05;  // per sub-step
  std::optional<std::array<double, 2>> avatar_start;
  GoalSpec goal;
  int action_repeat = 4;
  int max_steps = 100;  // agent steps

  void validate() const {
    require_config(!sprites.empty(), "env: need at least one sprite");
    require_config(height >= 8 && width >= 8, "env: image too small");
    require_config(action_repeat >= 1, "env: action_repeat must be >= 1");
    require_config(max_steps >= 1, "env: max_steps must be >= 1");
    for (const auto& s : sprites)
      require_config(s.radius_px > 0.0, "env: sprite radius must be positive");
    if (goal.enabled)
      require_config(controllable, "env: a goal needs a controllable avatar");
  }

  double radius_norm(size_t i) const {
    return 2.0 * sprites[i].radius_px / std::min(height, width);
  }
};

struct SpriteState {
  std::array<double, 2> pos{0.0, 0.0};
  std::array<double, 2> vel{0.0, 0.0};
  bool present = true;
};

struct GroundTruthEntry {
  double x = 0.0, y = 0.0;
  bool present = true;
};
using GroundTruth = std::vector<GroundTruthEntry>;

struct StepResult {
  Tensor<float> observation;
  double reward = 0.0;
  bool done = false;
};

class SpriteEnv {
 public:
  explicit SpriteEnv(SpriteEnvConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
  }

  const SpriteEnvConfig& config() const { return cfg_; }

  Tensor<float> reset(std::uint64_t seed) {
    rng_ = Rng(seed).fork("env");
    sprites_.assign(cfg_.sprites.size(), SpriteState{});
    place_sprites();
    step_count_ = 0;
    done_ = false;
    update_presence();
    return render();
  }

  StepResult step(Action action) {
    require(!done_, "env: episode already finished; call reset");
    double reward = 0.0;
    for (int rep = 0; rep < cfg_.action_repeat; ++rep) {
      advance_substep(action);
      if (cfg_.goal.enabled && !done_ && avatar_in_goal()) {
        reward = 1.0;
        done_ = true;
      }
      if (done_) break;
    }
    step_count_ += 1;
    if (step_count_ >= cfg_.max_steps) done_ = true;
    update_presence();
    return {render(), reward, done_};
  }

  GroundTruth ground_truth() const {
    GroundTruth gt;
    gt.reserve(sprites_.size());
    for (const auto& s : sprites_) gt.push_back({s.pos[0], s.pos[1], s.present});
    return gt;
  }

  // Anti-aliased rasterization on a black background, painter's order.
  Tensor<float> render() const {
    const int h = cfg_.height, w = cfg_.width;
    Tensor<float> img({1, h, w, 3});
    for (size_t si = 0; si < sprites_.size(); ++si) {
      const auto& st = sprites_[si];
      if (!st.present) continue;
      const auto& spec = cfg_.sprites[si];
      const double cx = (st.pos[0] + 1.0) * 0.5 * w - 0.5;  // pixel coords
      const double cy = (st.pos[1] + 1.0) * 0.5 * h - 0.5;
      const double r = spec.radius_px;
      const int x0 = std::max(0, static_cast<int>(std::floor(cx - r - 1)));
      const int x1 = std::min(w - 1, static_cast<int>(std::ceil(cx + r + 1)));
      const int y0 = std::max(0, static_cast<int>(std::floor(cy - r - 1)));
      const int y1 = std::min(h - 1, static_cast<int>(std::ceil(cy + r + 1)));
      for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x) {
          const double a = coverage(spec.shape, cx, cy, r, x, y);
          if (a <= 0.0) continue;
          float* px = &img.at(0, y, x, 0);
          for (int c = 0; c < 3; ++c)
            px[c] = static_cast<float>((1.0 - a) * px[c] + a * spec.color[c]);
        }
    }
    return img;
  }

  bool done() const { return done_; }
  int step_count() const { return step_count_; }
  const std::vector<SpriteState>& sprites() const { return sprites_; }

  // Exact center placement, used by tests.
  void force_position(size_t i, double x, double y) {
    sprites_[i].pos = {x, y};
  }
  void force_velocity(size_t i, double vx, double vy) {
    sprites_[i].vel = {vx, vy};
  }

 private:
  void place_sprites() {
    const int kMaxTries = 2000;
    for (size_t i = 0; i < sprites_.size(); ++i) {
      const double r = cfg_.radius_norm(i);
      if (i == 0 && cfg_.controllable && cfg_.avatar_start) {
        sprites_[0].pos = {(*cfg_.avatar_start)[0], (*cfg_.avatar_start)[1]};
        sprites_[0].vel = {0.0, 0.0};
        continue;
      }
      bool placed = false;
      for (int attempt = 0; attempt < kMaxTries && !placed; ++attempt) {
        const double lim = 1.0 - r;
        require_config(lim > 0.0, "env: sprite too large for the frame");
        const double x = rng_.uniform(-lim, lim);
        const double y = rng_.uniform(-lim, lim);
        bool ok = true;
        for (size_t j = 0; j < i; ++j) {
          const double dx = x - sprites_[j].pos[0];
          const double dy = y - sprites_[j].pos[1];
          const double min_d = r + cfg_.radius_norm(j);
          if (dx * dx + dy * dy < min_d * min_d) {
            ok = false;
            break;
          }
        }
        if (ok) {
          sprites_[i].pos = {x, y};
          placed = true;
        }
      }
      require_config(placed, "env: could not place sprites without overlap");
      const bool is_avatar = cfg_.controllable && i == 0;
      if (!is_avatar && cfg_.sprites[i].speed > 0.0) {
        const double angle = rng_.uniform(0.0, 6.283185307179586);
        sprites_[i].vel = {cfg_.sprites[i].speed * std::cos(angle),
                           cfg_.sprites[i].speed * std::sin(angle)};
      } else {
        sprites_[i].vel = {0.0, 0.0};
      }
    }
  }

  void advance_substep(Action action) {
    for (size_t i = 0; i < sprites_.size(); ++i) {
      const bool is_avatar = cfg_.controllable && i == 0;
      auto& s = sprites_[i];
      if (is_avatar) {
        const double d = cfg_.avatar_step;
        switch (action) {
          case Action::up: s.pos[1] -= d; break;
          case Action::down: s.pos[1] += d; break;
          case Action::left: s.pos[0] -= d; break;
          case Action::right: s.pos[0] += d; break;
          case Action::noop: break;
        }
        const double lim = 1.0 - cfg_.radius_norm(i);
        s.pos[0] = std::clamp(s.pos[0], -lim, lim);
        s.pos[1] = std::clamp(s.pos[1], -lim, lim);
      } else {
        for (int d = 0; d < 2; ++d) {
          s.pos[d] += s.vel[d];
          // reflect at the walls: p' = 2b - p, flip velocity
          if (s.pos[d] > 1.0) {
            s.pos[d] = 2.0 - s.pos[d];
            s.vel[d] = -s.vel[d];
          } else if (s.pos[d] < -1.0) {
            s.pos[d] = -2.0 - s.pos[d];
            s.vel[d] = -s.vel[d];
          }
        }
      }
    }
  }

  void update_presence() {
    for (size_t i = 0; i < sprites_.size(); ++i) {
      const int period = cfg_.sprites[i].blink_period;
      sprites_[i].present = period <= 0 || (step_count_ / period) % 2 == 0;
    }
  }

  bool avatar_in_goal() const {
    const double dx = sprites_[0].pos[0] - cfg_.goal.x;
    const double dy = sprites_[0].pos[1] - cfg_.goal.y;
    return dx * dx + dy * dy <= cfg_.goal.radius * cfg_.goal.radius;
  }

  // 4x4 supersampled coverage of one pixel by the sprite.
  static double coverage(SpriteShape shape, double cx, double cy, double r,
                         int px, int py) {
    int hits = 0;
    for (int sy = 0; sy < 4; ++sy)
      for (int sx = 0; sx < 4; ++sx) {
        const double x = px - 0.5 + (sx + 0.5) / 4.0;
        const double y = py - 0.5 + (sy + 0.5) / 4.0;
        if (shape == SpriteShape::disc) {
          const double dx = x - cx, dy = y - cy;
          if (dx * dx + dy * dy <= r * r) ++hits;
        } else {
          if (std::fabs(x - cx) <= r && std::fabs(y - cy) <= r) ++hits;
        }
      }
    return hits / 16.0;
  }

  SpriteEnvConfig cfg_;
  Rng rng_{0};
  std::vector<SpriteState> sprites_;
  int step_count_ = 0;
  bool done_ = false;
};

// Named desk-scale environments used across the toolkit.
//   bounce3  - three ballistic discs, no avatar (keypoint learning)
//   blink3   - bounce3 with one blinking sprite (absent-ground-truth path)
//   avatar   - red avatar + two ballistic distractors, sparse far-corner goal
inline SpriteEnvConfig make_env_config(const std::string& name) {
  SpriteEnvConfig cfg;
  if (name == "bounce3" || name == "blink3") {
    cfg.sprites = {
        {SpriteShape::disc, 5.0, {1.0f, 0.2f, 0.2f}, 0.018, 0},
        {SpriteShape::disc, 4.0, {0.2f, 1.0f, 0.3f}, 0.014, 0},
        {SpriteShape::square, 4.0, {0.35f, 0.5f, 1.0f}, 0.011, 0},
    };
    if (name == "blink3") cfg.sprites[2].blink_period = 13;
    return cfg;
  }
  if (name == "avatar") {
    cfg.sprites = {
        {SpriteShape::disc, 5.0, {1.0f, 0.25f, 0.2f}, 0.0, 0},
        {SpriteShape::disc, 4.0, {0.2f, 1.0f, 0.3f}, 0.014, 0},
        {SpriteShape::square, 4.0, {0.35f, 0.5f, 1.0f}, 0.011, 0},
    };
    cfg.controllable = true;
    cfg.avatar_step = 0.05;
    cfg.avatar_start = {{-0.7, -0.7}};
    cfg.goal = {true, 0.75, 0.75, 0.22};
    return cfg;
  }
  throw ConfigError("unknown environment preset: " + name);
}

}  // namespace tpr

#endif
