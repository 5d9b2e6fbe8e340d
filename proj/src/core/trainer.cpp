#include "icogs/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "icogs/georeg.hpp"
#include "icogs/rng.hpp"
#include "icogs/warp.hpp"

namespace icogs {

void TrainConfig::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError("train config: " + m); };
  if (total_iters < 0) fail("total_iters must be >= 0");
  if (stage2_start < 0 || stage3_start < stage2_start) fail("stage starts must satisfy 0 <= stage2 <= stage3");
  if (k < 0 || m < 0) fail("k and m must be >= 0 (0 selects the default)");
  if (tau_factor < 0.0) fail("tau_factor must be >= 0");
  if (virtual_radius < 0.0) fail("virtual_radius must be >= 0");
  if (n_virtual < 0) fail("n_virtual must be >= 0");
  if (lambda_mpc < 0 || lambda_smooth < 0 || lambda_app < 0 || lambda_dssim < 0 || lambda_dssim > 1)
    fail("loss weights must be non-negative and lambda_dssim <= 1");
  if (threads < 1) fail("threads must be >= 1");
  if (log_every < 1) fail("log_every must be >= 1");
  if (densify_every < 1) fail("densify_every must be >= 1");
}

double recombine(const LossBreakdown& l, const TrainConfig& c) {
  return l.l_3dgs + c.lambda_consis * l.l_consis + c.lambda_mpc * l.l_mpc + c.lambda_smooth * l.l_smooth +
         c.lambda_app * l.l_app;
}

ActiveLosses curriculum_schedule(int iter, const TrainConfig& config) {
  ActiveLosses a;
  a.mpc = iter >= config.stage2_start;
  a.smooth = a.mpc;
  a.app = iter >= config.stage3_start;
  return a;
}

PhotometricLoss base_photometric_loss(const Image& rendered, const Image& target, double lambda_dssim) {
  if (!rendered.same_shape(target)) throw ContractError("base_photometric_loss: shape mismatch");
  PhotometricLoss out;
  out.d_rendered = Image(rendered.width, rendered.height, rendered.channels);
  const double n = static_cast<double>(rendered.data.size());
  if (n == 0) return out;
  double l1 = 0.0;
  for (size_t i = 0; i < rendered.data.size(); ++i) {
    const double d = rendered.data[i] - target.data[i];
    l1 += std::abs(d);
    out.d_rendered.data[i] = (1.0 - lambda_dssim) * ((d > 0) - (d < 0)) / n;
  }
  out.value = (1.0 - lambda_dssim) * l1 / n;
  if (lambda_dssim > 0.0) {
    const SsimResult s = ssim_with_grad(rendered, target);
    out.value += lambda_dssim * 0.5 * (1.0 - s.value);
    for (size_t i = 0; i < rendered.data.size(); ++i) out.d_rendered.data[i] -= lambda_dssim * 0.5 * s.d_a.data[i];
  }
  return out;
}

TrainingSet TrainingSet::from_dataset(const Dataset& ds, const BoundingSphere& bounds, std::vector<Image> features) {
  if (ds.train.size() < 2) throw ConfigError("training needs at least 2 views");
  TrainingSet t;
  t.K = ds.train.front().K;
  for (const auto& v : ds.train)
    if (!(v.K == t.K)) throw ConfigError("all views must share the same intrinsics");
  t.train = ds.train;
  t.test = ds.test;
  t.bounds = bounds;
  if (features.empty()) {
    for (const auto& v : ds.train) features.push_back(extract_features(v.rgb));
  }
  if (features.size() != ds.train.size()) throw ConfigError("feature count does not match training views");
  for (size_t i = 0; i < features.size(); ++i)
    if (!features[i].same_size(t.K.width, t.K.height))
      throw ConfigError("feature map " + std::to_string(i) + " does not match the image size");
  t.features = std::move(features);
  return t;
}

namespace {

void check_finite(double v, const char* term, int iter) {
  if (!std::isfinite(v))
    throw NumericError("non-finite " + std::string(term) + " at iteration " + std::to_string(iter));
}

int resolve_count(int requested, int n_views) {
  const int k = requested > 0 ? requested : default_k(n_views);
  return std::min(k, n_views - 1);
}

} // namespace

LossAndGradients total_loss_and_gradients(const GaussianCloud& cloud, const TrainingSet& data,
                                          const TrainConfig& config, int iter, std::mt19937_64& rng) {
  const int n = static_cast<int>(data.train.size());
  if (n < 2) throw ContractError("total_loss_and_gradients: need at least 2 training views");
  LossAndGradients out;
  out.active = curriculum_schedule(iter, config);
  out.grads.resize(cloud.size());
  const CameraIntrinsics& K = data.K;
  const int ref = iter % n;
  const View& rv = data.train[ref];

  RenderOutput r_ref = render(cloud, K, rv.pose, config.render);
  const PhotometricLoss base = base_photometric_loss(r_ref.rgb, rv.rgb, config.lambda_dssim);
  out.losses.l_3dgs = base.value;
  check_finite(base.value, "l_3dgs", iter);

  RenderUpstream up;
  up.d_rgb = base.d_rendered;
  const bool geo = (out.active.mpc && config.lambda_mpc > 0) || (out.active.smooth && config.lambda_smooth > 0);
  if (geo) {
    const Mask include = alpha_mask(r_ref.alpha);
    up.d_depth = Image(K.width, K.height, 1);
    if (out.active.mpc) {
      std::vector<WarpedMap> warped;
      warped.reserve(n - 1);
      for (int j = 0; j < n; ++j) {
        if (j == ref) continue;
        warped.push_back(inverse_warp(data.features[j], r_ref.depth, K,
                                      relative_transform(rv.pose, data.train[j].pose)));
      }
      const MpcResult mpc = mpc_feature_loss(data.features[ref], warped, resolve_count(config.k, n), include);
      out.losses.l_mpc = mpc.value;
      check_finite(mpc.value, "l_mpc", iter);
      for (size_t i = 0; i < up.d_depth.data.size(); ++i) up.d_depth.data[i] += config.lambda_mpc * mpc.d_depth.data[i];
    }
    if (out.active.smooth) {
      const SmoothnessResult sm = edge_aware_smoothness(r_ref.depth, rv.rgb, config.alpha_edge, include);
      out.losses.l_smooth = sm.value;
      check_finite(sm.value, "l_smooth", iter);
      for (size_t i = 0; i < up.d_depth.data.size(); ++i)
        up.d_depth.data[i] += config.lambda_smooth * sm.d_depth.data[i];
    }
  }
  out.grads += render_backward(cloud, r_ref, up, config.render);

  if (out.active.app && config.lambda_app > 0 && config.n_virtual > 0) {
    std::vector<RenderOutput> renders(n);
    for (int i = 0; i < n; ++i) renders[i] = i == ref ? r_ref : render(cloud, K, data.train[i].pose, config.render);
    const int m = resolve_count(config.m, n);
    std::vector<Mask> reliable(n);
    for (int i = 0; i < n; ++i) {
      if (!config.cycle_filter) {
        reliable[i] = Mask(K.width, K.height, true);
        continue;
      }
      std::vector<DepthErrorMap> errs;
      errs.reserve(n - 1);
      for (int j = 0; j < n; ++j) {
        if (j == i) continue;
        errs.push_back(depth_error(renders[i].depth, renders[j].depth, K,
                                   relative_transform(data.train[i].pose, data.train[j].pose)));
      }
      reliable[i] = reliability_mask(errs, renders[i].depth, renders[i].alpha, m, config.tau_factor).mask;
    }
    std::vector<SynthesisSource> sources(n);
    std::vector<CameraPose> poses(n);
    for (int i = 0; i < n; ++i) {
      sources[i] = {&data.train[i].rgb, &renders[i].depth, &renders[i].alpha, &reliable[i], data.train[i].pose};
      poses[i] = data.train[i].pose;
    }
    const double radius = config.virtual_radius * data.bounds.radius;
    double l_app = 0.0;
    for (int v = 0; v < config.n_virtual; ++v) {
      const CameraPose pv = sample_virtual_pose(poses, radius, data.bounds, K, rng);
      const VirtualView vv = synthesize_virtual_view(sources, pv, K);
      out.virtual_pixels += vv.mask.count();
      if (!vv.mask.any()) continue;
      const RenderOutput rv_out = render(cloud, K, pv, config.render);
      AppearanceLoss app = virtual_view_loss(vv.image, vv.mask, rv_out.rgb);
      if (app.empty) continue;
      l_app += app.value / config.n_virtual;
      RenderUpstream vup;
      vup.d_rgb = std::move(app.d_rgb);
      const double s = config.lambda_app / config.n_virtual;
      for (auto& g : vup.d_rgb.data) g *= s;
      out.grads += render_backward(cloud, rv_out, vup, config.render);
    }
    out.losses.l_app = l_app;
    check_finite(l_app, "l_app", iter);
  }
  out.losses.total = recombine(out.losses, config);
  check_finite(out.losses.total, "total loss", iter);
  return out;
}

namespace {

void adam_update(std::vector<double>& p, const std::vector<double>& g, std::vector<double>& m, std::vector<double>& v,
                 double lr, double bc1, double bc2) {
  for (size_t i = 0; i < p.size(); ++i) {
    m[i] = kAdamBeta1 * m[i] + (1.0 - kAdamBeta1) * g[i];
    v[i] = kAdamBeta2 * v[i] + (1.0 - kAdamBeta2) * g[i] * g[i];
    const double mh = m[i] / bc1, vh = v[i] / bc2;
    p[i] -= lr * mh / (std::sqrt(vh) + kAdamEps);
  }
}

} // namespace

void adam_step(GaussianCloud& cloud, const CloudGradients& grads, AdamState& state, const StepRates& rates) {
  if (grads.size() != cloud.size()) throw ContractError("adam_step: gradient size mismatch");
  if (state.m.size() != cloud.size()) {
    state.m.resize(cloud.size());
    state.v.resize(cloud.size());
    state.m.set_zero();
    state.v.set_zero();
    state.step = 0;
  }
  ++state.step;
  const double bc1 = 1.0 - std::pow(kAdamBeta1, state.step);
  const double bc2 = 1.0 - std::pow(kAdamBeta2, state.step);
  adam_update(cloud.positions, grads.positions, state.m.positions, state.v.positions, rates.position, bc1, bc2);
  adam_update(cloud.rotations, grads.rotations, state.m.rotations, state.v.rotations, rates.rotation, bc1, bc2);
  adam_update(cloud.log_scales, grads.log_scales, state.m.log_scales, state.v.log_scales, rates.scale, bc1, bc2);
  adam_update(cloud.opacity_logits, grads.opacity_logits, state.m.opacity_logits, state.v.opacity_logits,
              rates.opacity, bc1, bc2);
  adam_update(cloud.sh, grads.sh, state.m.sh, state.v.sh, rates.color, bc1, bc2);
  cloud.enforce_invariants();
}

StepRates step_rates(const TrainConfig& config, double extent, int iter) {
  const auto& lr = config.lr;
  double pos = lr.position;
  if (config.total_iters > 0 && lr.position > 0 && lr.position_final > 0) {
    const double t = std::clamp(static_cast<double>(iter) / config.total_iters, 0.0, 1.0);
    pos = std::exp((1.0 - t) * std::log(lr.position) + t * std::log(lr.position_final));
  }
  return {pos * extent, lr.opacity, lr.scale, lr.rotation, lr.color};
}

double mean_psnr(const GaussianCloud& cloud, std::span<const View> views, const RenderOptions& opt) {
  if (views.empty()) return 0.0;
  double s = 0.0;
  for (const auto& v : views) s += psnr(clamped01(render(cloud, v.K, v.pose, opt).rgb), v.rgb);
  return s / static_cast<double>(views.size());
}

TrainResult train(const TrainingSet& data, GaussianCloud cloud, const TrainConfig& config,
                  const TrainObserver& observer, const RowObserver& on_row) {
  config.validate();
  cloud.validate();
  RenderOptions ropt = config.render;
  ropt.threads = config.threads;
  TrainConfig cfg = config;
  cfg.render = ropt;

  TrainResult result;
  std::mt19937_64 rng = make_stream(config.seed, "virtual_pose");
  AdamState adam;
  GradStats stats;
  stats.reset(cloud.size());
  const double extent = data.bounds.radius;

  for (int it = 0; it < cfg.total_iters; ++it) {
    LossAndGradients lg = total_loss_and_gradients(cloud, data, cfg, it, rng);
    if (cfg.densify) stats.accumulate(lg.grads);
    adam_step(cloud, lg.grads, adam, step_rates(cfg, extent, it));

    if (cfg.densify && it > 0 && it < cfg.densify_until && (it + 1) % cfg.densify_every == 0) {
      cloud = densify_and_prune(cloud, stats, cfg.densify_thresholds);
      stats.reset(cloud.size());
      adam = AdamState{};
    }
    if (observer) observer(it, lg);
    if ((it + 1) % cfg.log_every == 0 || it + 1 == cfg.total_iters) {
      MetricsRow row;
      row.iter = it;
      row.losses = lg.losses;
      row.psnr_train = mean_psnr(cloud, data.train, ropt);
      row.psnr_test = mean_psnr(cloud, data.test, ropt);
      row.n_gaussians = cloud.size();
      result.metrics.push_back(row);
      if (on_row) on_row(row);
    }
  }
  result.cloud = std::move(cloud);
  return result;
}

std::string metrics_csv_header() { return "iter,l_3dgs,l_mpc,l_smooth,l_app,total,psnr_train,psnr_test,n_gaussians"; }

std::string metrics_csv_row(const MetricsRow& r) {
  char buf[512];
  std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.6f,%.6f,%zu", r.iter, r.losses.l_3dgs,
                r.losses.l_mpc, r.losses.l_smooth, r.losses.l_app, r.losses.total, r.psnr_train, r.psnr_test,
                r.n_gaussians);
  return buf;
}

} // namespace icogs
