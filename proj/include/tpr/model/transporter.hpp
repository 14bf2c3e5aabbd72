#ifndef TPR_MODEL_TRANSPORTER_HPP
#define TPR_MODEL_TRANSPORTER_HPP

#include <string>
#include <vector>

#include "tpr/core/adam.hpp"
#include "tpr/core/checkpoint.hpp"
#include "tpr/core/rng.hpp"
#include "tpr/model/keypoint_ops.hpp"
#include "tpr/model/stacks.hpp"

namespace tpr {

enum class ModelVariant { feature_transport, pixel_transport, no_transport };

inline const char* variant_name(ModelVariant v) {
  switch (v) {
    case ModelVariant::feature_transport: return "feature_transport";
    case ModelVariant::pixel_transport: return "pixel_transport";
    case ModelVariant::no_transport: return "no_transport";
  }
  return "?";
}

inline ModelVariant variant_from_name(const std::string& s) {
  if (s == "feature_transport" || s == "transporter") return ModelVariant::feature_transport;
  if (s == "pixel_transport") return ModelVariant::pixel_transport;
  if (s == "no_transport") return ModelVariant::no_transport;
  throw ConfigError("unknown model variant: " + s);
}

struct TransporterConfig {
  int k = 3;                 // number of keypoints
  double sigma = 0.1;        // heatmap std, normalized units
  int height = 64, width = 64;
  bool stop_gradient_source = true;
  ModelVariant variant = ModelVariant::feature_transport;

  static constexpr int kFeatChannels = 128;

  void validate() const {
    require_config(k >= 1, "config: K must be >= 1");
    require_config(sigma > 0.0, "config: sigma must be > 0");
    require_config(height % 4 == 0 && width % 4 == 0,
                   "config: H and W must be divisible by 4 (two stride-2 layers)");
    require_config(height >= 8 && width >= 8, "config: image too small");
  }

  int feat_h() const { return height / 4; }
  int feat_w() const { return width / 4; }
};

namespace detail {

// Six Conv-BatchNorm-ReLU layers: 7x7x32 then 3x3 with 32, 64, 64, 128, 128
// filters; strides 1,1,2,1,2,1.
inline std::vector<LayerSpec> encoder_specs() {
  return {{7, 3, 32, 1, true, false},   {3, 32, 32, 1, true, false},
          {3, 32, 64, 2, true, false},  {3, 64, 64, 1, true, false},
          {3, 64, 128, 2, true, false}, {3, 128, 128, 1, true, false}};
}

// Encoder plus a final 1x1 regressor to K maps.
inline std::vector<LayerSpec> keynet_specs(int k) {
  auto specs = encoder_specs();
  specs.push_back({1, 128, k, 1, false, false});
  return specs;
}

// Transpose of the encoder; bilinear 2x upsampling undoes each stride-2
// stage. Final 7x7 regression to RGB, no bn/relu.
inline std::vector<LayerSpec> refine_specs(int in_channels) {
  return {{3, in_channels, 128, 1, true, false}, {3, 128, 64, 1, true, true},
          {3, 64, 64, 1, true, false},           {3, 64, 32, 1, true, true},
          {3, 32, 32, 1, true, false},           {7, 32, 3, 1, false, false}};
}

// Pixel-transport variant operates at image resolution throughout; a
// same-depth 32-channel stack keeps its cost near the feature decoder's.
inline std::vector<LayerSpec> pixel_refine_specs() {
  return {{3, 3, 32, 1, true, false},  {3, 32, 32, 1, true, false},
          {3, 32, 32, 1, true, false}, {3, 32, 32, 1, true, false},
          {3, 32, 32, 1, true, false}, {7, 32, 3, 1, false, false}};
}

template <typename T>
Tensor<T> concat_batch(const Tensor<T>& a, const Tensor<T>& b) {
  auto shape = a.shape();
  shape[0] += b.size(0);
  Tensor<T> out = Tensor<T>::uninit(shape);
  std::copy(a.data(), a.data() + a.numel(), out.data());
  std::copy(b.data(), b.data() + b.numel(), out.data() + a.numel());
  return out;
}

template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
  const int n = a.size(0), h = a.size(1), w = a.size(2);
  const int ca = a.size(3), cb = b.size(3);
  Tensor<T> out = Tensor<T>::uninit({n, h, w, ca + cb});
  const std::int64_t cells = static_cast<std::int64_t>(n) * h * w;
  for (std::int64_t i = 0; i < cells; ++i) {
    std::copy(a.data() + i * ca, a.data() + (i + 1) * ca, out.data() + i * (ca + cb));
    std::copy(b.data() + i * cb, b.data() + (i + 1) * cb, out.data() + i * (ca + cb) + ca);
  }
  return out;
}

}  // namespace detail

// The Transporter: feature encoder, KeyNet, Gaussian heatmaps, the feature
// transport composite and a refine decoder, trained with a summed pixel
// squared-error (mean over the batch). Also hosts the two baseline
// variants (pixel transport, stacked-heatmap regression without transport).
//
// Source and target frames run through the shared encoder/KeyNet as two
// separate batches, so stop_gradient_source is a clean cut: with the flag
// set, the source branch backward simply never runs and neither its
// activations nor its batch statistics carry gradient.
template <typename T>
class TransporterModel {
 public:
  TransporterModel(TransporterConfig cfg, Rng init_rng) : cfg_(cfg) {
    cfg_.validate();
    if (cfg_.variant != ModelVariant::pixel_transport)
      encoder_ = ConvStack<T>("encoder", detail::encoder_specs());
    keynet_ = ConvStack<T>("keynet", detail::keynet_specs(cfg_.k));
    switch (cfg_.variant) {
      case ModelVariant::feature_transport:
        refine_ = ConvStack<T>("refine", detail::refine_specs(TransporterConfig::kFeatChannels));
        break;
      case ModelVariant::pixel_transport:
        refine_ = ConvStack<T>("refine", detail::pixel_refine_specs());
        break;
      case ModelVariant::no_transport:
        refine_ = ConvStack<T>("refine",
                               detail::refine_specs(TransporterConfig::kFeatChannels + cfg_.k));
        break;
    }
    encoder_.init(init_rng);
    keynet_.init(init_rng);
    refine_.init(init_rng);
  }

  const TransporterConfig& config() const { return cfg_; }

  struct LossInfo {
    Tensor<T> recon;       // [N, H, W, 3]
    Tensor<T> kp_source;   // [N, K, 2] (no_transport variant leaves it empty)
    Tensor<T> kp_target;   // [N, K, 2]
    Tensor<T> dxs, dxt;    // input grads, filled when want_input_grads
  };

  // Full forward (and optionally backward, accumulating parameter grads).
  double compute_loss(const Tensor<T>& xs, const Tensor<T>& xt, bool want_grad,
                      LossInfo* info = nullptr, bool want_input_grads = false) {
    require_shape(xs.same_shape(xt), "frame pair shapes differ");
    require_shape(xs.ndim() == 4 && xs.size(3) == 3, "frames must be [N,H,W,3]");
    require_shape(xs.size(1) == cfg_.height && xs.size(2) == cfg_.width,
                  "frame size does not match config");
    switch (cfg_.variant) {
      case ModelVariant::feature_transport:
        return loss_feature(xs, xt, want_grad, info, want_input_grads);
      case ModelVariant::pixel_transport:
        return loss_pixel(xs, xt, want_grad, info, want_input_grads);
      case ModelVariant::no_transport:
        return loss_stacked(xs, xt, want_grad, info, want_input_grads);
    }
    return 0.0;
  }

  double train_step(const Tensor<T>& xs, const Tensor<T>& xt, Adam<T>& opt) {
    auto ps = params();
    zero_grads(ps);
    const double loss = compute_loss(xs, xt, true);
    opt.step(ps);
    return loss;
  }

  // Detector path: KeyNet only. [N,H,W,3] -> [N,K,2]
  Tensor<T> keypoints(const Tensor<T>& x, BnMode mode = BnMode::eval) {
    auto raw = keynet_.forward(x, mode);
    return keypoints_from_maps(raw).keypoints;
  }

  // Feature maps for downstream agents. [N,H,W,3] -> [N,H/4,W/4,D]
  Tensor<T> features(const Tensor<T>& x, BnMode mode = BnMode::eval) {
    require(cfg_.variant != ModelVariant::pixel_transport,
            "pixel-transport variant has no feature encoder");
    return encoder_.forward(x, mode);
  }

  Tensor<T> heatmaps_for(const Tensor<T>& kp, int h, int w) const {
    return render_heatmaps(kp, cfg_.sigma, h, w);
  }

  ParamRefs<T> params() {
    ParamRefs<T> out;
    if (cfg_.variant != ModelVariant::pixel_transport)
      for (auto* p : encoder_.params()) out.push_back(p);
    for (auto* p : keynet_.params()) out.push_back(p);
    for (auto* p : refine_.params()) out.push_back(p);
    return out;
  }

  ConvStack<T>& encoder() { return encoder_; }
  ConvStack<T>& keynet() { return keynet_; }
  ConvStack<T>& refine() { return refine_; }

  void save_checkpoint(Checkpoint& ck, const std::string& prefix = "") {
    ck.add_scalar(prefix + "config/K", cfg_.k);
    ck.add_scalar(prefix + "config/sigma", cfg_.sigma);
    ck.add_scalar(prefix + "config/H", cfg_.height);
    ck.add_scalar(prefix + "config/W", cfg_.width);
    ck.add_scalar(prefix + "config/stop_gradient_source", cfg_.stop_gradient_source ? 1 : 0);
    ck.add_scalar(prefix + "config/variant", static_cast<double>(cfg_.variant));
    for (auto* p : params()) ck.add(prefix + "param/" + p->name, p->value);
    for (auto& [name, buf] : stat_buffers())
      ck.add(prefix + "state/" + name, Tensor<T>({static_cast<int>(buf->size())}, *buf));
  }

  static TransporterConfig config_from_checkpoint(const Checkpoint& ck,
                                                  const std::string& prefix = "") {
    TransporterConfig cfg;
    cfg.k = static_cast<int>(ck.get_scalar(prefix + "config/K"));
    cfg.sigma = ck.get_scalar(prefix + "config/sigma");
    cfg.height = static_cast<int>(ck.get_scalar(prefix + "config/H"));
    cfg.width = static_cast<int>(ck.get_scalar(prefix + "config/W"));
    cfg.stop_gradient_source = ck.get_scalar(prefix + "config/stop_gradient_source") != 0;
    cfg.variant = static_cast<ModelVariant>(
        static_cast<int>(ck.get_scalar(prefix + "config/variant")));
    return cfg;
  }

  void load_checkpoint(const Checkpoint& ck, const std::string& prefix = "") {
    for (auto* p : params()) {
      const auto& t = ck.get<T>(prefix + "param/" + p->name);
      require_format(t.shape() == p->value.shape(),
                     "checkpoint shape mismatch: " + p->name);
      p->value = t;
    }
    for (auto& [name, buf] : stat_buffers()) {
      const auto& t = ck.get<T>(prefix + "state/" + name);
      require_format(static_cast<size_t>(t.numel()) == buf->size(),
                     "checkpoint state size mismatch: " + name);
      std::copy(t.data(), t.data() + t.numel(), buf->begin());
    }
  }

  static TransporterModel load(const Checkpoint& ck, const std::string& prefix = "") {
    TransporterModel m(config_from_checkpoint(ck, prefix), Rng(0));
    m.load_checkpoint(ck, prefix);
    return m;
  }

 private:
  std::vector<std::pair<std::string, std::vector<T>*>> stat_buffers() {
    std::vector<std::pair<std::string, std::vector<T>*>> out;
    if (cfg_.variant != ModelVariant::pixel_transport)
      for (auto& e : encoder_.stat_buffers()) out.push_back(e);
    for (auto& e : keynet_.stat_buffers()) out.push_back(e);
    for (auto& e : refine_.stat_buffers()) out.push_back(e);
    return out;
  }

  // sum over pixels and channels, mean over the batch
  static double sq_err_loss(const Tensor<T>& recon, const Tensor<T>& target,
                            Tensor<T>& drecon, bool want_grad) {
    const int n = recon.size(0);
    double loss = 0.0;
    if (want_grad) drecon = Tensor<T>::uninit(recon.shape());
    const T scale = static_cast<T>(2.0 / n);
    for (std::int64_t i = 0; i < recon.numel(); ++i) {
      const double d = static_cast<double>(recon[i]) - static_cast<double>(target[i]);
      loss += d * d;
      if (want_grad) drecon[i] = scale * static_cast<T>(d);
    }
    return loss / n;
  }

  double loss_feature(const Tensor<T>& xs, const Tensor<T>& xt, bool want_grad,
                      LossInfo* info, bool want_input_grads) {
    const int fh = cfg_.feat_h(), fw = cfg_.feat_w();
    const bool stop = cfg_.stop_gradient_source;
    const bool grad_source = want_grad && !stop;

    typename ConvStack<T>::Cache enc_s, enc_t, key_s, key_t, ref_cache;
    auto phi_s = encoder_.forward(xs, BnMode::train, grad_source ? &enc_s : nullptr);
    auto phi_t = encoder_.forward(xt, BnMode::train, want_grad ? &enc_t : nullptr);
    auto raw_s = keynet_.forward(xs, BnMode::train, grad_source ? &key_s : nullptr);
    auto raw_t = keynet_.forward(xt, BnMode::train, want_grad ? &key_t : nullptr);
    auto ext_s = keypoints_from_maps(raw_s);
    auto ext_t = keypoints_from_maps(raw_t);
    auto hs = render_heatmaps(ext_s.keypoints, cfg_.sigma, fh, fw);
    auto ht = render_heatmaps(ext_t.keypoints, cfg_.sigma, fh, fw);

    std::vector<Tensor<T>> stages;
    auto transported = transport(phi_s, phi_t, hs, ht, want_grad ? &stages : nullptr);
    auto recon = refine_.forward(transported, BnMode::train, want_grad ? &ref_cache : nullptr);

    Tensor<T> drecon;
    const double loss = sq_err_loss(recon, xt, drecon, want_grad);
    if (info) {
      info->recon = recon;
      info->kp_source = ext_s.keypoints;
      info->kp_target = ext_t.keypoints;
    }
    if (!want_grad) return loss;

    auto dtrans = refine_.backward(drecon, ref_cache, 0, true);
    auto tg = transport_backward(phi_t, hs, ht, stages, dtrans);

    auto dkp_t = render_heatmaps_backward(ext_t.keypoints, ht, tg.dht, cfg_.sigma);
    auto draw_t = keypoints_from_maps_backward(ext_t, dkp_t, fh, fw);
    auto dxt_enc = encoder_.backward(tg.dphi_t, enc_t, 0, want_input_grads);
    auto dxt_key = keynet_.backward(draw_t, key_t, 0, want_input_grads);

    Tensor<T> dxs(xs.shape());
    if (grad_source) {
      auto dkp_s = render_heatmaps_backward(ext_s.keypoints, hs, tg.dhs, cfg_.sigma);
      auto draw_s = keypoints_from_maps_backward(ext_s, dkp_s, fh, fw);
      auto dxs_enc = encoder_.backward(tg.dphi_s, enc_s, 0, want_input_grads);
      auto dxs_key = keynet_.backward(draw_s, key_s, 0, want_input_grads);
      if (want_input_grads)
        for (std::int64_t i = 0; i < dxs.numel(); ++i) dxs[i] = dxs_enc[i] + dxs_key[i];
    }
    if (want_input_grads && info) {
      for (std::int64_t i = 0; i < dxt_enc.numel(); ++i) dxt_enc[i] += dxt_key[i];
      info->dxs = std::move(dxs);
      info->dxt = std::move(dxt_enc);
    }
    return loss;
  }

  double loss_pixel(const Tensor<T>& xs, const Tensor<T>& xt, bool want_grad,
                    LossInfo* info, bool want_input_grads) {
    const bool stop = cfg_.stop_gradient_source;
    const bool grad_source = want_grad && !stop;

    typename ConvStack<T>::Cache key_s, key_t, ref_cache;
    auto raw_s = keynet_.forward(xs, BnMode::train, grad_source ? &key_s : nullptr);
    auto raw_t = keynet_.forward(xt, BnMode::train, want_grad ? &key_t : nullptr);
    auto ext_s = keypoints_from_maps(raw_s);
    auto ext_t = keypoints_from_maps(raw_t);
    // heatmaps at image resolution; the transported quantity is the pixels
    auto hs = render_heatmaps(ext_s.keypoints, cfg_.sigma, cfg_.height, cfg_.width);
    auto ht = render_heatmaps(ext_t.keypoints, cfg_.sigma, cfg_.height, cfg_.width);

    std::vector<Tensor<T>> stages;
    auto transported = transport(xs, xt, hs, ht, want_grad ? &stages : nullptr);
    auto recon = refine_.forward(transported, BnMode::train, want_grad ? &ref_cache : nullptr);

    Tensor<T> drecon;
    const double loss = sq_err_loss(recon, xt, drecon, want_grad);
    if (info) {
      info->recon = recon;
      info->kp_source = ext_s.keypoints;
      info->kp_target = ext_t.keypoints;
    }
    if (!want_grad) return loss;

    auto dtrans = refine_.backward(drecon, ref_cache, 0, true);
    auto tg = transport_backward(xt, hs, ht, stages, dtrans);

    auto dkp_t = render_heatmaps_backward(ext_t.keypoints, ht, tg.dht, cfg_.sigma);
    auto draw_t = keypoints_from_maps_backward(ext_t, dkp_t, cfg_.feat_h(), cfg_.feat_w());
    auto dxt_key = keynet_.backward(draw_t, key_t, 0, want_input_grads);

    Tensor<T> dxs(xs.shape());
    if (grad_source) {
      auto dkp_s = render_heatmaps_backward(ext_s.keypoints, hs, tg.dhs, cfg_.sigma);
      auto draw_s = keypoints_from_maps_backward(ext_s, dkp_s, cfg_.feat_h(), cfg_.feat_w());
      auto dxs_key = keynet_.backward(draw_s, key_s, 0, want_input_grads);
      // the source pixels also feed the transport directly
      if (want_input_grads)
        for (std::int64_t i = 0; i < dxs.numel(); ++i) dxs[i] = dxs_key[i] + tg.dphi_s[i];
    }
    if (want_input_grads && info) {
      // dxt reported through the transport/detector paths (the target is
      // also the regression label; that term is excluded here)
      for (std::int64_t i = 0; i < dxt_key.numel(); ++i) dxt_key[i] += tg.dphi_t[i];
      info->dxs = std::move(dxs);
      info->dxt = std::move(dxt_key);
    }
    return loss;
  }

  double loss_stacked(const Tensor<T>& xs, const Tensor<T>& xt, bool want_grad,
                      LossInfo* info, bool want_input_grads) {
    const int fh = cfg_.feat_h(), fw = cfg_.feat_w();
    const bool stop = cfg_.stop_gradient_source;
    const bool grad_source = want_grad && !stop;

    typename ConvStack<T>::Cache enc_s, key_t, ref_cache;
    auto phi_s = encoder_.forward(xs, BnMode::train, grad_source ? &enc_s : nullptr);
    auto raw_t = keynet_.forward(xt, BnMode::train, want_grad ? &key_t : nullptr);
    auto ext_t = keypoints_from_maps(raw_t);
    auto ht = render_heatmaps(ext_t.keypoints, cfg_.sigma, fh, fw);

    auto ref_in = detail::concat_channels(phi_s, ht);
    auto recon = refine_.forward(ref_in, BnMode::train, want_grad ? &ref_cache : nullptr);

    Tensor<T> drecon;
    const double loss = sq_err_loss(recon, xt, drecon, want_grad);
    if (info) {
      info->recon = recon;
      info->kp_target = ext_t.keypoints;
    }
    if (!want_grad) return loss;

    auto dref_in = refine_.backward(drecon, ref_cache, 0, true);
    const int d = TransporterConfig::kFeatChannels;
    Tensor<T> dphi_s(phi_s.shape()), dht(ht.shape());
    const std::int64_t cells = dref_in.numel() / (d + cfg_.k);
    for (std::int64_t i = 0; i < cells; ++i) {
      std::copy(dref_in.data() + i * (d + cfg_.k), dref_in.data() + i * (d + cfg_.k) + d,
                dphi_s.data() + i * d);
      std::copy(dref_in.data() + i * (d + cfg_.k) + d,
                dref_in.data() + (i + 1) * (d + cfg_.k), dht.data() + i * cfg_.k);
    }

    auto dkp_t = render_heatmaps_backward(ext_t.keypoints, ht, dht, cfg_.sigma);
    auto draw_t = keypoints_from_maps_backward(ext_t, dkp_t, fh, fw);
    Tensor<T> dxt = keynet_.backward(draw_t, key_t, 0, want_input_grads);
    Tensor<T> dxs(xs.shape());
    if (grad_source && want_input_grads) dxs = encoder_.backward(dphi_s, enc_s, 0, true);
    else if (grad_source) (void)encoder_.backward(dphi_s, enc_s);
    if (want_input_grads && info) {
      info->dxs = std::move(dxs);
      info->dxt = std::move(dxt);
    }
    return loss;
  }

  TransporterConfig cfg_;
  ConvStack<T> encoder_, keynet_, refine_;
};

}  // namespace tpr

#endif
