#include <doctest.h>

#include <cmath>

#include "tpr/core/gradcheck.hpp"
#include "tpr/model/transporter.hpp"

using namespace tpr;

namespace {

template <typename T>
Tensor<T> random_tensor(std::vector<int> shape, Rng& rng, double scale = 1.0) {
  Tensor<T> t(std::move(shape));
  for (std::int64_t i = 0; i < t.numel(); ++i)
    t[i] = static_cast<T>(rng.normal() * scale);
  return t;
}

template <typename T>
Tensor<T> random_frames(int n, int h, int w, Rng& rng) {
  Tensor<T> t({n, h, w, 3});
  for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = static_cast<T>(rng.uniform());
  return t;
}

// Bright disc on a black background; used by the equivariance test.
template <typename T>
Tensor<T> disc_image(int h, int w, double cx, double cy, double radius) {
  Tensor<T> img({1, h, w, 3});
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double d = std::hypot(x - cx, y - cy);
      if (d <= radius) {
        img.at(0, y, x, 0) = T(1);
        img.at(0, y, x, 1) = T(0.5);
        img.at(0, y, x, 2) = T(0.25);
      }
    }
  return img;
}

}  // namespace

TEST_CASE("encoder: 64x64 -> 16x16x128, 32x32 -> 8x8") {
  Rng rng(1);
  ConvStack<float> enc("encoder", detail::encoder_specs());
  enc.init(rng);
  Tensor<float> x64({1, 64, 64, 3});
  auto y = enc.forward(x64, BnMode::eval);
  CHECK(y.size(1) == 16);
  CHECK(y.size(2) == 16);
  CHECK(y.size(3) == 128);
  Tensor<float> x32({1, 32, 32, 3});
  auto y32 = enc.forward(x32, BnMode::eval);
  CHECK(y32.size(1) == 8);
  CHECK(y32.size(2) == 8);
}

TEST_CASE("encoder: zero input with zero biases keeps activations at zero (eval)") {
  Rng rng(2);
  ConvStack<float> key("keynet", detail::keynet_specs(4));
  key.init(rng);  // biases are zero-initialized, bn stats start at (0, 1)
  Tensor<float> x({2, 16, 16, 3});
  auto raw = key.forward(x, BnMode::eval);
  for (std::int64_t i = 0; i < raw.numel(); ++i) CHECK(raw[i] == 0.0f);
}

TEST_CASE("keypoints_from_maps: uniform, dominant and mirrored logits") {
  // uniform -> center of mass at the origin
  Tensor<float> raw({1, 4, 4, 1});
  auto ext = keypoints_from_maps(raw);
  CHECK(ext.keypoints.at(0, 0, 0) == doctest::Approx(0.0).epsilon(1e-6));
  CHECK(ext.keypoints.at(0, 0, 1) == doctest::Approx(0.0).epsilon(1e-6));

  // one dominant logit at cell (0,0) of a 4x4 map -> (-0.75, -0.75)
  Tensor<float> raw2({1, 4, 4, 1});
  raw2.at(0, 0, 0, 0) = 1e6f;
  auto ext2 = keypoints_from_maps(raw2);
  CHECK(ext2.keypoints.at(0, 0, 0) == doctest::Approx(-0.75));
  CHECK(ext2.keypoints.at(0, 0, 1) == doctest::Approx(-0.75));

  // two equal dominant logits at mirrored cells -> midpoint
  Tensor<float> raw3({1, 4, 4, 1});
  raw3.at(0, 0, 1, 0) = 50.0f;
  raw3.at(0, 3, 2, 0) = 50.0f;
  auto ext3 = keypoints_from_maps(raw3);
  CHECK(ext3.keypoints.at(0, 0, 0) == doctest::Approx(0.0).epsilon(1e-5));
  CHECK(ext3.keypoints.at(0, 0, 1) == doctest::Approx(0.0).epsilon(1e-5));
}

TEST_CASE("keypoints stay inside [-1,1]^2 on random maps") {
  Rng rng(3);
  for (int t = 0; t < 10; ++t) {
    auto raw = random_tensor<float>({2, 8, 8, 3}, rng, 5.0);
    auto ext = keypoints_from_maps(raw);
    for (std::int64_t i = 0; i < ext.keypoints.numel(); ++i) {
      CHECK(ext.keypoints[i] >= -1.0f);
      CHECK(ext.keypoints[i] <= 1.0f);
    }
  }
}

TEST_CASE("render_heatmaps: peak value, sigma ring, sigma->0 limit") {
  // keypoint exactly on the center of cell (1, 2) of an 8x8 grid
  Tensor<float> kp({1, 1, 2});
  kp.at(0, 0, 0) = grid_coord<float>(2, 8);
  kp.at(0, 0, 1) = grid_coord<float>(1, 8);
  auto maps = render_heatmaps(kp, 0.1, 8, 8);
  CHECK(maps.at(0, 1, 2, 0) == doctest::Approx(1.0));

  // a cell at euclidean distance sigma has value exp(-1/2)
  const double sigma = std::fabs(grid_coord<double>(3, 8) - grid_coord<double>(2, 8));
  auto maps2 = render_heatmaps(kp, sigma, 8, 8);
  CHECK(maps2.at(0, 1, 3, 0) == doctest::Approx(std::exp(-0.5)).epsilon(1e-6));

  // sigma -> 0: collapses to a one-hot at the keypoint's cell
  Tensor<float> kp3({1, 1, 2});
  kp3.at(0, 0, 0) = grid_coord<float>(5, 8);
  kp3.at(0, 0, 1) = grid_coord<float>(6, 8);
  auto maps3 = render_heatmaps(kp3, 1e-3, 8, 8);
  double sum = 0.0;
  for (std::int64_t i = 0; i < maps3.numel(); ++i) sum += maps3[i];
  CHECK(maps3.at(0, 6, 5, 0) == doctest::Approx(1.0).epsilon(1e-4));
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-3));
}

TEST_CASE("heatmap peak sits at the cell nearest the keypoint") {
  Rng rng(4);
  for (int t = 0; t < 20; ++t) {
    Tensor<float> kp({1, 1, 2});
    kp.at(0, 0, 0) = static_cast<float>(rng.uniform(-0.95, 0.95));
    kp.at(0, 0, 1) = static_cast<float>(rng.uniform(-0.95, 0.95));
    auto maps = render_heatmaps(kp, 0.15, 16, 16);
    int best_v = 0, best_u = 0;
    float best = -1.0f;
    for (int v = 0; v < 16; ++v)
      for (int u = 0; u < 16; ++u)
        if (maps.at(0, v, u, 0) > best) {
          best = maps.at(0, v, u, 0);
          best_v = v;
          best_u = u;
        }
    // nearest grid cell to the keypoint
    int nv = 0, nu = 0;
    double dbest = 1e9;
    for (int i = 0; i < 16; ++i) {
      const double dx = std::fabs(grid_coord<double>(i, 16) - kp.at(0, 0, 0));
      const double dy = std::fabs(grid_coord<double>(i, 16) - kp.at(0, 0, 1));
      if (dx < dbest) dbest = dx, nu = i;
      (void)dy;
    }
    dbest = 1e9;
    for (int i = 0; i < 16; ++i) {
      const double dy = std::fabs(grid_coord<double>(i, 16) - kp.at(0, 0, 1));
      if (dy < dbest) dbest = dy, nv = i;
    }
    CHECK(best_u == nu);
    CHECK(best_v == nv);
  }
}

TEST_CASE("transport: zero heatmaps are the identity on phi_s") {
  Rng rng(5);
  auto phi_s = random_tensor<float>({2, 4, 4, 3}, rng);
  auto phi_t = random_tensor<float>({2, 4, 4, 3}, rng);
  Tensor<float> hs({2, 4, 4, 2}), ht({2, 4, 4, 2});
  auto out = transport(phi_s, phi_t, hs, ht);
  for (std::int64_t i = 0; i < out.numel(); ++i) CHECK(out[i] == phi_s[i]);
}

TEST_CASE("transport: a saturated target heatmap pins the target features") {
  Rng rng(6);
  auto phi_s = random_tensor<float>({1, 3, 3, 4}, rng);
  auto phi_t = random_tensor<float>({1, 3, 3, 4}, rng);
  Tensor<float> hs({1, 3, 3, 1}), ht({1, 3, 3, 1});
  ht.at(0, 1, 1, 0) = 1.0f;
  auto out = transport(phi_s, phi_t, hs, ht);
  for (int c = 0; c < 4; ++c)
    CHECK(out.at(0, 1, 1, c) == doctest::Approx(phi_t.at(0, 1, 1, c)));
}

TEST_CASE("transport K=1 equals the per-cell scalar composite") {
  Rng rng(7);
  for (int t = 0; t < 50; ++t) {
    auto phi_s = random_tensor<double>({1, 2, 2, 1}, rng);
    auto phi_t = random_tensor<double>({1, 2, 2, 1}, rng);
    Tensor<double> hs({1, 2, 2, 1}), ht({1, 2, 2, 1});
    for (std::int64_t i = 0; i < 4; ++i) {
      hs[i] = rng.uniform();
      ht[i] = rng.uniform();
    }
    auto out = transport(phi_s, phi_t, hs, ht);
    for (std::int64_t i = 0; i < 4; ++i) {
      const double expect = (1.0 - hs[i]) * (1.0 - ht[i]) * phi_s[i] + ht[i] * phi_t[i];
      CHECK(out[i] == doctest::Approx(expect).epsilon(1e-12));
    }
  }
}

TEST_CASE("transport output is permutation invariant for separated keypoints") {
  Rng rng(8);
  // keypoints far apart: masks effectively do not overlap
  Tensor<double> kp({1, 3, 2});
  kp.at(0, 0, 0) = -0.7;
  kp.at(0, 0, 1) = -0.7;
  kp.at(0, 1, 0) = 0.7;
  kp.at(0, 1, 1) = -0.5;
  kp.at(0, 2, 0) = 0.0;
  kp.at(0, 2, 1) = 0.7;
  Tensor<double> kp2({1, 3, 2});
  // permutation (2, 0, 1)
  for (int d = 0; d < 2; ++d) {
    kp2.at(0, 0, d) = kp.at(0, 2, d);
    kp2.at(0, 1, d) = kp.at(0, 0, d);
    kp2.at(0, 2, d) = kp.at(0, 1, d);
  }
  auto hs = render_heatmaps(kp, 0.05, 16, 16);
  auto ht_src = render_heatmaps(kp, 0.05, 16, 16);
  auto hs2 = render_heatmaps(kp2, 0.05, 16, 16);
  auto phi_s = random_tensor<double>({1, 16, 16, 8}, rng);
  auto phi_t = random_tensor<double>({1, 16, 16, 8}, rng);

  Tensor<double> kt({1, 3, 2}), kt2({1, 3, 2});
  kt.at(0, 0, 0) = -0.2;
  kt.at(0, 0, 1) = -0.6;
  kt.at(0, 1, 0) = 0.5;
  kt.at(0, 1, 1) = 0.6;
  kt.at(0, 2, 0) = -0.6;
  kt.at(0, 2, 1) = 0.4;
  for (int d = 0; d < 2; ++d) {
    kt2.at(0, 0, d) = kt.at(0, 2, d);
    kt2.at(0, 1, d) = kt.at(0, 0, d);
    kt2.at(0, 2, d) = kt.at(0, 1, d);
  }
  auto ht = render_heatmaps(kt, 0.05, 16, 16);
  auto ht2 = render_heatmaps(kt2, 0.05, 16, 16);

  auto out1 = transport(phi_s, phi_t, hs, ht);
  auto out2 = transport(phi_s, phi_t, hs2, ht2);
  for (std::int64_t i = 0; i < out1.numel(); ++i)
    CHECK(out1[i] == doctest::Approx(out2[i]).epsilon(1e-6));
  (void)ht_src;
}

TEST_CASE("refine: image-shaped output; zero final layer gives a zero image") {
  Rng rng(9);
  ConvStack<float> refine("refine", detail::refine_specs(16));
  refine.init(rng);
  // zero the final regression layer
  refine.conv(5).weight().value.zero();
  refine.conv(5).bias().value.zero();
  Tensor<float> feat({2, 4, 4, 16});
  auto img = refine.forward(feat, BnMode::train);
  CHECK(img.size(1) == 16);
  CHECK(img.size(2) == 16);
  CHECK(img.size(3) == 3);
  for (std::int64_t i = 0; i < img.numel(); ++i) CHECK(img[i] == 0.0f);
}

TEST_CASE("full transporter loss: nonnegative and consistent with recon") {
  Rng rng(10);
  TransporterConfig cfg;
  cfg.k = 2;
  cfg.height = cfg.width = 16;
  TransporterModel<float> model(cfg, rng.fork("init"));
  auto xs = random_frames<float>(2, 16, 16, rng);
  auto xt = random_frames<float>(2, 16, 16, rng);
  TransporterModel<float>::LossInfo info;
  const double loss = model.compute_loss(xs, xt, false, &info);
  CHECK(loss >= 0.0);
  double manual = 0.0;
  for (std::int64_t i = 0; i < info.recon.numel(); ++i) {
    const double d = info.recon[i] - xt[i];
    manual += d * d;
  }
  manual /= xs.size(0);
  CHECK(loss == doctest::Approx(manual).epsilon(1e-6));
  // identical recon and target would make the loss vanish by the same formula
}

TEST_CASE("full transporter loss gradient check, f64, 8x8, K=2") {
  Rng rng(11);
  TransporterConfig cfg;
  cfg.k = 2;
  cfg.height = cfg.width = 8;
  cfg.sigma = 0.5;  // feature grid is 2x2; the default would be a near-delta
  cfg.stop_gradient_source = false;  // verify every gradient path
  TransporterModel<double> model(cfg, rng.fork("init"));
  auto xs = random_frames<double>(2, 8, 8, rng);
  auto xt = random_frames<double>(2, 8, 8, rng);
  auto compute = [&](bool want_grad) {
    zero_grads(model.params());
    return model.compute_loss(xs, xt, want_grad);
  };
  auto res = grad_check(compute, model.params(), {3e-6, 2, 13});
  INFO("worst: ", res.worst_param, " analytic=", res.analytic, " numeric=", res.numeric);
  CHECK(res.max_rel_err < 1e-4);
}

TEST_CASE("pixel-transport loss gradient check, f64") {
  Rng rng(12);
  TransporterConfig cfg;
  cfg.k = 2;
  cfg.height = cfg.width = 8;
  cfg.sigma = 0.5;  // feature grid is 2x2; the default would be a near-delta
  cfg.stop_gradient_source = false;
  cfg.variant = ModelVariant::pixel_transport;
  TransporterModel<double> model(cfg, rng.fork("init"));
  auto xs = random_frames<double>(2, 8, 8, rng);
  auto xt = random_frames<double>(2, 8, 8, rng);
  auto compute = [&](bool want_grad) {
    zero_grads(model.params());
    return model.compute_loss(xs, xt, want_grad);
  };
  auto res = grad_check(compute, model.params(), {3e-6, 2, 17});
  INFO("worst: ", res.worst_param, " analytic=", res.analytic, " numeric=", res.numeric);
  CHECK(res.max_rel_err < 1e-4);
}

TEST_CASE("no-transport baseline loss gradient check, f64") {
  Rng rng(13);
  TransporterConfig cfg;
  cfg.k = 2;
  cfg.height = cfg.width = 8;
  cfg.sigma = 0.5;  // feature grid is 2x2; the default would be a near-delta
  cfg.stop_gradient_source = false;
  cfg.variant = ModelVariant::no_transport;
  TransporterModel<double> model(cfg, rng.fork("init"));
  auto xs = random_frames<double>(2, 8, 8, rng);
  auto xt = random_frames<double>(2, 8, 8, rng);
  auto compute = [&](bool want_grad) {
    zero_grads(model.params());
    return model.compute_loss(xs, xt, want_grad);
  };
  auto res = grad_check(compute, model.params(), {3e-6, 2, 19});
  INFO("worst: ", res.worst_param, " analytic=", res.analytic, " numeric=", res.numeric);
  CHECK(res.max_rel_err < 1e-4);
}

TEST_CASE("stop_gradient_source blocks the source branch") {
  Rng rng(14);
  TransporterConfig cfg;
  cfg.k = 2;
  cfg.height = cfg.width = 16;
  cfg.stop_gradient_source = true;
  TransporterModel<float> stopped(cfg, rng.fork("init"));
  auto xs = random_frames<float>(1, 16, 16, rng);
  auto xt = random_frames<float>(1, 16, 16, rng);
  TransporterModel<float>::LossInfo info;
  zero_grads(stopped.params());
  (void)stopped.compute_loss(xs, xt, true, &info, true);
  double src_grad = 0.0, tgt_grad = 0.0;
  for (std::int64_t i = 0; i < info.dxs.numel(); ++i) src_grad += std::fabs(info.dxs[i]);
  for (std::int64_t i = 0; i < info.dxt.numel(); ++i) tgt_grad += std::fabs(info.dxt[i]);
  CHECK(src_grad == 0.0);
  CHECK(tgt_grad > 0.0);

  cfg.stop_gradient_source = false;
  TransporterModel<float> open(cfg, rng.fork("init"));
  zero_grads(open.params());
  (void)open.compute_loss(xs, xt, true, &info, true);
  src_grad = 0.0;
  for (std::int64_t i = 0; i < info.dxs.numel(); ++i) src_grad += std::fabs(info.dxs[i]);
  CHECK(src_grad > 0.0);
}

TEST_CASE("config validation rejects degenerate settings") {
  Rng rng(15);
  TransporterConfig bad;
  bad.k = 0;
  CHECK_THROWS_AS((TransporterModel<float>(bad, rng)), ConfigError);
  TransporterConfig bad2;
  bad2.height = 30;  // not divisible by 4
  CHECK_THROWS_AS((TransporterModel<float>(bad2, rng)), ConfigError);
  TransporterConfig bad3;
  bad3.sigma = 0.0;
  CHECK_THROWS_AS((TransporterModel<float>(bad3, rng)), ConfigError);
}

TEST_CASE("checkpoint round trip preserves the detector exactly") {
  Rng rng(16);
  TransporterConfig cfg;
  cfg.k = 3;
  cfg.height = cfg.width = 32;
  cfg.sigma = 0.13;
  TransporterModel<float> model(cfg, rng.fork("init"));
  auto x = random_frames<float>(2, 32, 32, rng);
  // move bn stats off their initials
  (void)model.compute_loss(x, x, false);
  auto kp_before = model.keypoints(x);

  Checkpoint ck;
  model.save_checkpoint(ck);
  ck.save("/tmp/tpr_model_test.tpck");
  auto loaded_ck = Checkpoint::load("/tmp/tpr_model_test.tpck");
  auto restored = TransporterModel<float>::load(loaded_ck);
  CHECK(restored.config().k == 3);
  CHECK(restored.config().sigma == doctest::Approx(0.13));
  auto kp_after = restored.keypoints(x);
  for (std::int64_t i = 0; i < kp_before.numel(); ++i)
    CHECK(kp_before[i] == kp_after[i]);
}

TEST_CASE("detector equivariance: 4px translation moves the dominant keypoint by 2/16") {
  Rng rng(17);
  TransporterConfig cfg;
  cfg.k = 3;
  cfg.height = cfg.width = 64;
  TransporterModel<float> model(cfg, rng.fork("init"));
  // sharpen the regressor so the softmax concentrates (a trained detector is
  // peaked; a raw random one is nearly uniform and dilutes the shift)
  auto& reg = model.keynet().conv(6);
  for (std::int64_t i = 0; i < reg.weight().value.numel(); ++i)
    reg.weight().value[i] *= 10.0f;

  auto img_a = disc_image<float>(64, 64, 30.0, 31.0, 6.0);
  auto img_b = disc_image<float>(64, 64, 34.0, 31.0, 6.0);  // +4 px in x

  auto raw_a = model.keynet().forward(img_a, BnMode::eval);
  auto raw_b = model.keynet().forward(img_b, BnMode::eval);
  auto ext_a = keypoints_from_maps(raw_a);
  auto ext_b = keypoints_from_maps(raw_b);

  // dominant keypoint = channel with the most concentrated mass
  int dom = 0;
  float best = -1.0f;
  for (int c = 0; c < 3; ++c) {
    float peak = 0.0f;
    for (int i = 0; i < 16 * 16; ++i) peak = std::max(peak, ext_a.probs.at(0, c, i));
    if (peak > best) {
      best = peak;
      dom = c;
    }
  }
  const float shift_x = ext_b.keypoints.at(0, dom, 0) - ext_a.keypoints.at(0, dom, 0);
  const float shift_y = ext_b.keypoints.at(0, dom, 1) - ext_a.keypoints.at(0, dom, 1);
  CHECK(std::fabs(shift_x - 0.125f) < 0.05f);
  CHECK(std::fabs(shift_y) < 0.05f);
}
