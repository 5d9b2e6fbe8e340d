#include "icogs/renderer.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <memory>
#include <numeric>

#include "icogs/parallel.hpp"

namespace icogs {

namespace {

constexpr int kTile = 16;

/// Screen-space state of one Gaussian, plus what the backward pass needs.
struct Projected {
  bool visible = false;
  double mx = 0, my = 0;       // projected mean
  double qa = 0, qb = 0, qc = 0; // conic (inverse screen covariance)
  double depth = 0;
  double color[3] = {0, 0, 0};
  double opacity = 0;          // clamped blend opacity
  int x0 = 0, x1 = -1, y0 = 0, y1 = -1;

  // backward cache
  Vec3 t_cam = Vec3::Zero();
  Mat3 sigma_cam = Mat3::Zero();
  Eigen::Matrix<double, 2, 3> J = Eigen::Matrix<double, 2, 3>::Zero();
  Mat3 rot = Mat3::Identity();
  Vec4 qn = Vec4(1, 0, 0, 0);
  double qnorm = 1.0;
  Vec3 scale = Vec3::Ones();
  Vec3 view_vec = Vec3::UnitZ(); // mu - camera center (unnormalized)
  double sig = 0;                // unclamped sigmoid(opacity_logit)
};

enum class Cull { kVisible, kBehind, kDegenerate, kOffscreen };

Cull preprocess(const GaussianCloud& cloud, size_t i, const CameraIntrinsics& K, const CameraPose& pose,
                const Vec3& cam_center, double dilation, Projected& g) {
  const Vec3 mu = cloud.position(i);
  g.t_cam = pose.apply(mu);
  const double tx = g.t_cam.x(), ty = g.t_cam.y(), tz = g.t_cam.z();
  if (!(tz > kZNear)) return Cull::kBehind;

  const Vec4 q = cloud.rotation(i);
  g.qnorm = q.norm();
  g.qn = g.qnorm > 0 ? Vec4(q / g.qnorm) : Vec4(1, 0, 0, 0);
  g.rot = quaternion_to_matrix(g.qn);
  const Vec3 ls = cloud.log_scale(i);
  g.scale = ls.array().exp();
  const Mat3 M = g.rot * g.scale.asDiagonal();
  const Mat3 sigma = M * M.transpose();
  g.sigma_cam = pose.rotation * sigma * pose.rotation.transpose();

  g.J << K.fx / tz, 0.0, -K.fx * tx / (tz * tz), 0.0, K.fy / tz, -K.fy * ty / (tz * tz);
  Mat2 cov2 = g.J * g.sigma_cam * g.J.transpose();
  cov2(0, 0) += dilation;
  cov2(1, 1) += dilation;
  const double a = cov2(0, 0), b = 0.5 * (cov2(0, 1) + cov2(1, 0)), c = cov2(1, 1);
  const double det = a * c - b * b;
  if (!(det >= kMinCovDeterminant)) return Cull::kDegenerate;
  g.qa = c / det;
  g.qb = -b / det;
  g.qc = a / det;

  g.mx = K.fx * tx / tz + K.cx;
  g.my = K.fy * ty / tz + K.cy;
  const double mid = 0.5 * (a + c);
  const double lambda_max = mid + std::sqrt(std::max(0.0, mid * mid - det));
  const double radius = 3.0 * std::sqrt(lambda_max);
  const double fx0 = std::floor(g.mx - radius), fx1 = std::ceil(g.mx + radius);
  const double fy0 = std::floor(g.my - radius), fy1 = std::ceil(g.my + radius);
  if (!(fx1 >= 0 && fy1 >= 0 && fx0 <= K.width - 1 && fy0 <= K.height - 1)) return Cull::kOffscreen;
  g.x0 = static_cast<int>(std::max(0.0, fx0));
  g.x1 = static_cast<int>(std::min<double>(K.width - 1, fx1));
  g.y0 = static_cast<int>(std::max(0.0, fy0));
  g.y1 = static_cast<int>(std::min<double>(K.height - 1, fy1));

  g.depth = tz;
  g.view_vec = mu - cam_center;
  const Vec3 col = eval_sh_color(cloud, i, g.view_vec.normalized());
  for (int ch = 0; ch < 3; ++ch) g.color[ch] = col[ch];
  g.sig = sigmoid(cloud.opacity_logits[i]);
  g.opacity = std::min(kMaxBlendOpacity, g.sig);
  g.visible = true;
  return Cull::kVisible;
}

/// The fields the per-pixel loops touch, packed contiguously per tile.
struct Splat {
  double mx, my, qa, qb, qc, opacity, depth;
  double color[3];
  int x0, x1, y0, y1;
};

struct Frame {
  std::vector<Projected> proj;
  int tiles_x = 0, tiles_y = 0;
  std::vector<std::vector<int>> tile_lists; // front-to-back Gaussian indices
  std::vector<std::vector<Splat>> tile_splats;
  RenderStats stats;
};

Frame prepare(const GaussianCloud& cloud, const CameraIntrinsics& K, const CameraPose& pose,
              const RenderOptions& opt) {
  cloud.validate();
  K.validate();
  Frame f;
  const size_t n = cloud.size();
  f.proj.resize(n);
  const Vec3 center = pose.center();
  std::vector<int> order;
  order.reserve(n);
  for (size_t i = 0; i < n; ++i) {
    switch (preprocess(cloud, i, K, pose, center, opt.kernel_dilation, f.proj[i])) {
      case Cull::kVisible:
        ++f.stats.visible;
        order.push_back(static_cast<int>(i));
        break;
      case Cull::kBehind: ++f.stats.culled; break;
      case Cull::kDegenerate: ++f.stats.degenerate; break;
      case Cull::kOffscreen: ++f.stats.offscreen; break;
    }
    if (!f.proj[i].visible) f.proj[i] = Projected{};
  }
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return f.proj[a].depth < f.proj[b].depth; });
  f.tiles_x = (K.width + kTile - 1) / kTile;
  f.tiles_y = (K.height + kTile - 1) / kTile;
  f.tile_lists.resize(static_cast<size_t>(f.tiles_x) * f.tiles_y);
  for (int idx : order) {
    const Projected& g = f.proj[idx];
    for (int ty = g.y0 / kTile; ty <= g.y1 / kTile; ++ty)
      for (int tx = g.x0 / kTile; tx <= g.x1 / kTile; ++tx)
        f.tile_lists[static_cast<size_t>(ty) * f.tiles_x + tx].push_back(idx);
  }
  f.tile_splats.resize(f.tile_lists.size());
  for (size_t t = 0; t < f.tile_lists.size(); ++t) {
    auto& out = f.tile_splats[t];
    out.reserve(f.tile_lists[t].size());
    for (int idx : f.tile_lists[t]) {
      const Projected& g = f.proj[idx];
      out.push_back({g.mx, g.my, g.qa, g.qb, g.qc, g.opacity, g.depth, {g.color[0], g.color[1], g.color[2]},
                     g.x0, g.x1, g.y0, g.y1});
    }
  }
  return f;
}

/// Evaluates the blend weight of g at pixel (px, py). Returns false when the
/// pixel lies outside the 3-sigma ellipse.
inline bool kernel_weight(const Splat& g, double px, double py, double& gauss, double& dx, double& dy) {
  dx = g.mx - px;
  dy = g.my - py;
  const double power = 0.5 * (g.qa * dx * dx + g.qc * dy * dy) + g.qb * dx * dy;
  if (power > kTruncationPower || power < 0.0) return false;
  gauss = std::exp(-power);
  return true;
}

struct TileRange {
  int x0, x1, y0, y1;
};

/// A splat whose truncated ellipse crosses the current row between columns xa and xb.
struct RowEntry {
  int li;
  int xa, xb;
};

/// Front-to-back list of the splats of a tile that can reach row y. The column
/// interval is solved from the truncation quadric and widened slightly; the
/// per-pixel test in kernel_weight stays authoritative.
void row_entries(const std::vector<Splat>& splats, int y, const TileRange& r, std::vector<RowEntry>& out) {
  out.clear();
  for (int li = 0; li < static_cast<int>(splats.size()); ++li) {
    const Splat& g = splats[li];
    if (y < g.y0 || y > g.y1) continue;
    const double dy = g.my - y;
    // 0.5 qa dx^2 + qb dy dx + 0.5 qc dy^2 - P <= 0
    const double disc = g.qb * g.qb * dy * dy - g.qa * (g.qc * dy * dy - 2.0 * kTruncationPower);
    if (disc < 0.0) continue;
    const double root = std::sqrt(disc);
    const double lo = g.mx - (-g.qb * dy + root) / g.qa - 1e-6;
    const double hi = g.mx - (-g.qb * dy - root) / g.qa + 1e-6;
    const int xa = std::max({r.x0, g.x0, static_cast<int>(std::ceil(std::max(lo, -1.0)))});
    const int xb = std::min({r.x1 - 1, g.x1, static_cast<int>(std::floor(std::min(hi, 1e9)))});
    if (xa > xb) continue;
    out.push_back({li, xa, xb});
  }
}

TileRange tile_range(const Frame& f, size_t t, const CameraIntrinsics& K) {
  const int tx = static_cast<int>(t % f.tiles_x), ty = static_cast<int>(t / f.tiles_x);
  return {tx * kTile, std::min(K.width, (tx + 1) * kTile), ty * kTile, std::min(K.height, (ty + 1) * kTile)};
}

void check_upstream(const Image& img, const CameraIntrinsics& K, int channels, const char* name) {
  if (img.empty()) return;
  if (img.width != K.width || img.height != K.height || img.channels != channels)
    throw ContractError(std::string("render_backward: upstream ") + name + " has the wrong shape");
}

} // namespace

Mat3 covariance_3d(const Vec3& log_scale, const Vec4& q) {
  const Mat3 r = quaternion_to_matrix(q.normalized());
  const Mat3 m = r * log_scale.array().exp().matrix().asDiagonal();
  return m * m.transpose();
}

Vec3 eval_sh_color(const GaussianCloud& cloud, size_t i, const Vec3& dir) {
  const double* s = &cloud.sh[kShPerGaussian * i];
  Vec3 c;
  for (int ch = 0; ch < 3; ++ch) {
    const double* k = s + ch * kShCoeffs;
    c[ch] = kShC0 * k[0] - kShC1 * dir.y() * k[1] + kShC1 * dir.z() * k[2] - kShC1 * dir.x() * k[3] + 0.5;
  }
  return c;
}

struct RenderCache {
  Frame frame;
  CameraIntrinsics K;
  CameraPose pose;
  size_t cloud_size = 0;
  std::vector<std::vector<RowEntry>> rows; // tile * kTile + (y - tile y0)
  std::vector<double> final_T;             // per pixel
  std::vector<int> stop;                   // per pixel: one past the last row entry visited
};

RenderOutput render(const GaussianCloud& cloud, const CameraIntrinsics& K, const CameraPose& pose,
                    const RenderOptions& options) {
  auto cache = std::make_shared<RenderCache>();
  cache->frame = prepare(cloud, K, pose, options);
  cache->K = K;
  cache->pose = pose;
  cache->cloud_size = cloud.size();
  const Frame& f = cache->frame;
  cache->rows.resize(f.tile_splats.size() * kTile);
  cache->final_T.assign(static_cast<size_t>(K.width) * K.height, 1.0);
  cache->stop.assign(static_cast<size_t>(K.width) * K.height, 0);
  RenderOutput out;
  out.rgb = Image(K.width, K.height, 3);
  out.depth = Image(K.width, K.height, 1);
  out.alpha = Image(K.width, K.height, 1);
  out.stats = f.stats;

  parallel_for(f.tile_splats.size(), options.threads, [&](size_t t) {
    const auto& list = f.tile_splats[t];
    const TileRange r = tile_range(f, t, K);
    for (int y = r.y0; y < r.y1; ++y) {
      auto& row = cache->rows[t * kTile + (y - r.y0)];
      row_entries(list, y, r, row);
      for (int x = r.x0; x < r.x1; ++x) {
        double T = 1.0, rgb[3] = {0, 0, 0}, depth = 0.0, alpha = 0.0;
        int stop = 0;
        for (const RowEntry& e : row) {
          ++stop;
          if (x < e.xa || x > e.xb) continue;
          const Splat& g = list[e.li];
          double gauss, dx, dy;
          if (!kernel_weight(g, x, y, gauss, dx, dy)) continue;
          const double w = g.opacity * gauss;
          const double wt = w * T;
          for (int ch = 0; ch < 3; ++ch) rgb[ch] += g.color[ch] * wt;
          depth += g.depth * wt;
          alpha += wt;
          T *= 1.0 - w;
          if (T < kTransmittanceCutoff) break;
        }
        const size_t pix = static_cast<size_t>(y) * K.width + x;
        cache->final_T[pix] = T;
        cache->stop[pix] = stop;
        for (int ch = 0; ch < 3; ++ch) out.rgb.at(x, y, ch) = rgb[ch];
        out.depth.at(x, y) = depth;
        out.alpha.at(x, y) = alpha;
      }
    }
  });
  out.cache = std::move(cache);
  return out;
}

CloudGradients render_backward(const GaussianCloud& cloud, const CameraIntrinsics& K, const CameraPose& pose,
                               const RenderUpstream& up, const RenderOptions& options) {
  check_upstream(up.d_rgb, K, 3, "rgb");
  check_upstream(up.d_depth, K, 1, "depth");
  check_upstream(up.d_alpha, K, 1, "alpha");
  return render_backward(cloud, render(cloud, K, pose, options), up, options);
}

CloudGradients render_backward(const GaussianCloud& cloud, const RenderOutput& forward, const RenderUpstream& up,
                               const RenderOptions& options) {
  if (!forward.cache) throw ContractError("render_backward: forward output carries no cache");
  const RenderCache& rc = *forward.cache;
  if (rc.cloud_size != cloud.size()) throw ContractError("render_backward: cloud does not match the forward pass");
  const CameraIntrinsics& K = rc.K;
  const CameraPose& pose = rc.pose;
  check_upstream(up.d_rgb, K, 3, "rgb");
  check_upstream(up.d_depth, K, 1, "depth");
  check_upstream(up.d_alpha, K, 1, "alpha");
  const Frame& f = rc.frame;
  const size_t n = cloud.size();

  // Per-Gaussian screen-space gradient: mx, my, qa, qb, qc, opacity, r, g, b, depth.
  constexpr int kS = 10;
  std::vector<std::vector<double>> tile_grads(f.tile_lists.size());

  parallel_for(f.tile_lists.size(), options.threads, [&](size_t t) {
    const auto& list = f.tile_lists[t];
    const auto& splats = f.tile_splats[t];
    auto& acc = tile_grads[t];
    acc.assign(list.size() * kS, 0.0);
    if (list.empty()) return;
    const TileRange r = tile_range(f, t, K);
    for (int y = r.y0; y < r.y1; ++y) {
      const auto& row = rc.rows[t * kTile + (y - r.y0)];
      for (int x = r.x0; x < r.x1; ++x) {
        double g_rgb[3] = {0, 0, 0}, g_depth = 0.0, g_alpha = 0.0;
        if (!up.d_rgb.empty())
          for (int ch = 0; ch < 3; ++ch) g_rgb[ch] = up.d_rgb.at(x, y, ch);
        if (!up.d_depth.empty()) g_depth = up.d_depth.at(x, y);
        if (!up.d_alpha.empty()) g_alpha = up.d_alpha.at(x, y);
        if (g_rgb[0] == 0.0 && g_rgb[1] == 0.0 && g_rgb[2] == 0.0 && g_depth == 0.0 && g_alpha == 0.0)
          continue;

        const size_t pix = static_cast<size_t>(y) * K.width + x;
        double T = rc.final_T[pix];
        double s_rgb[3] = {0, 0, 0}, s_depth = 0.0, s_alpha = 0.0;
        for (int ei = rc.stop[pix] - 1; ei >= 0; --ei) {
          const RowEntry& e = row[ei];
          if (x < e.xa || x > e.xb) continue;
          const Splat& g = splats[e.li];
          double gauss, dx, dy;
          if (!kernel_weight(g, x, y, gauss, dx, dy)) continue;
          const double w = g.opacity * gauss;
          const double inv = 1.0 / (1.0 - w);
          T *= inv;
          double* a = &acc[static_cast<size_t>(e.li) * kS];
          const double Ti = T, wt = w * Ti;
          double dL_dw = 0.0;
          for (int ch = 0; ch < 3; ++ch) {
            dL_dw += g_rgb[ch] * (Ti * g.color[ch] - s_rgb[ch] * inv);
            a[6 + ch] += g_rgb[ch] * wt;
            s_rgb[ch] += g.color[ch] * wt;
          }
          dL_dw += g_depth * (Ti * g.depth - s_depth * inv);
          dL_dw += g_alpha * (Ti - s_alpha * inv);
          a[9] += g_depth * wt;
          s_depth += g.depth * wt;
          s_alpha += wt;

          a[5] += dL_dw * gauss;
          const double dL_dP = -dL_dw * g.opacity * gauss;
          a[0] += dL_dP * (g.qa * dx + g.qb * dy);
          a[1] += dL_dP * (g.qb * dx + g.qc * dy);
          a[2] += dL_dP * 0.5 * dx * dx;
          a[3] += dL_dP * dx * dy;
          a[4] += dL_dP * 0.5 * dy * dy;
        }
      }
    }
  });

  // Fixed-order reduction keeps results independent of the thread count.
  std::vector<double> screen(n * kS, 0.0);
  for (size_t t = 0; t < f.tile_lists.size(); ++t) {
    const auto& list = f.tile_lists[t];
    for (size_t li = 0; li < list.size(); ++li)
      for (int k = 0; k < kS; ++k) screen[static_cast<size_t>(list[li]) * kS + k] += tile_grads[t][li * kS + k];
  }

  CloudGradients grads(n);
  const Mat3& W = pose.rotation;
  for (size_t i = 0; i < n; ++i) {
    const Projected& g = f.proj[i];
    if (!g.visible) continue;
    const double* s = &screen[i * kS];
    const double tx = g.t_cam.x(), ty = g.t_cam.y(), tz = g.t_cam.z();
    const double tz2 = tz * tz, tz3 = tz2 * tz;

    // conic -> screen covariance
    Mat2 Q;
    Q << g.qa, g.qb, g.qb, g.qc;
    Mat2 GQ;
    GQ << s[2], 0.5 * s[3], 0.5 * s[3], s[4];
    const Mat2 G_cov2 = -Q * GQ * Q;

    const Mat3 G_sigma_cam = g.J.transpose() * G_cov2 * g.J;
    const Eigen::Matrix<double, 2, 3> G_J = 2.0 * G_cov2 * g.J * g.sigma_cam;

    Vec3 G_t = Vec3::Zero();
    G_t.z() += G_J(0, 0) * (-K.fx / tz2) + G_J(0, 2) * (2.0 * K.fx * tx / tz3) + G_J(1, 1) * (-K.fy / tz2) +
               G_J(1, 2) * (2.0 * K.fy * ty / tz3);
    G_t.x() += G_J(0, 2) * (-K.fx / tz2);
    G_t.y() += G_J(1, 2) * (-K.fy / tz2);
    G_t.x() += s[0] * K.fx / tz;
    G_t.z() += s[0] * (-K.fx * tx / tz2);
    G_t.y() += s[1] * K.fy / tz;
    G_t.z() += s[1] * (-K.fy * ty / tz2);
    G_t.z() += s[9];

    Vec3 G_mu = W.transpose() * G_t;

    // world covariance -> rotation and scale
    const Mat3 G_sigma = W.transpose() * G_sigma_cam * W;
    const Mat3 M = g.rot * g.scale.asDiagonal();
    const Mat3 G_M = 2.0 * G_sigma * M;
    Mat3 G_R;
    for (int c = 0; c < 3; ++c) G_R.col(c) = G_M.col(c) * g.scale[c];
    for (int c = 0; c < 3; ++c) grads.log_scales[3 * i + c] = G_M.col(c).dot(g.rot.col(c)) * g.scale[c];

    const double w = g.qn[0], x = g.qn[1], y = g.qn[2], z = g.qn[3];
    Vec4 G_qn;
    G_qn[0] = 2 * (-z * G_R(0, 1) + y * G_R(0, 2) + z * G_R(1, 0) - x * G_R(1, 2) - y * G_R(2, 0) + x * G_R(2, 1));
    G_qn[1] = 2 * (y * G_R(0, 1) + z * G_R(0, 2) + y * G_R(1, 0) - 2 * x * G_R(1, 1) - w * G_R(1, 2) +
                   z * G_R(2, 0) + w * G_R(2, 1) - 2 * x * G_R(2, 2));
    G_qn[2] = 2 * (-2 * y * G_R(0, 0) + x * G_R(0, 1) + w * G_R(0, 2) + x * G_R(1, 0) + z * G_R(1, 2) -
                   w * G_R(2, 0) + z * G_R(2, 1) - 2 * y * G_R(2, 2));
    G_qn[3] = 2 * (-2 * z * G_R(0, 0) - w * G_R(0, 1) + x * G_R(0, 2) + w * G_R(1, 0) - 2 * z * G_R(1, 1) +
                   y * G_R(1, 2) + x * G_R(2, 0) + y * G_R(2, 1));
    const Vec4 G_q = (G_qn - g.qn * g.qn.dot(G_qn)) / g.qnorm;
    for (int k = 0; k < 4; ++k) grads.rotations[4 * i + k] = G_q[k];

    // view-dependent color
    const double vnorm = g.view_vec.norm();
    const Vec3 dir = g.view_vec / vnorm;
    const double* sh = &cloud.sh[kShPerGaussian * i];
    double* gsh = &grads.sh[kShPerGaussian * i];
    Vec3 G_dir = Vec3::Zero();
    for (int ch = 0; ch < 3; ++ch) {
      const double gc = s[6 + ch];
      const double* k = sh + ch * kShCoeffs;
      double* gk = gsh + ch * kShCoeffs;
      gk[0] = kShC0 * gc;
      gk[1] = -kShC1 * dir.y() * gc;
      gk[2] = kShC1 * dir.z() * gc;
      gk[3] = -kShC1 * dir.x() * gc;
      G_dir += gc * Vec3(-kShC1 * k[3], -kShC1 * k[1], kShC1 * k[2]);
    }
    G_mu += (G_dir - dir * dir.dot(G_dir)) / vnorm;

    for (int k = 0; k < 3; ++k) grads.positions[3 * i + k] = G_mu[k];
    grads.opacity_logits[i] = g.sig < kMaxBlendOpacity ? s[5] * g.sig * (1.0 - g.sig) : 0.0;
  }
  return grads;
}

void GradStats::reset(size_t n) {
  sum.assign(n, 0.0);
  count.assign(n, 0);
}

void GradStats::accumulate(const CloudGradients& g) {
  if (sum.size() != g.size()) reset(g.size());
  for (size_t i = 0; i < g.size(); ++i) {
    const double gx = g.positions[3 * i], gy = g.positions[3 * i + 1], gz = g.positions[3 * i + 2];
    sum[i] += std::sqrt(gx * gx + gy * gy + gz * gz);
    ++count[i];
  }
}

GaussianCloud densify_and_prune(const GaussianCloud& cloud, const GradStats& stats,
                                const DensifyThresholds& th) {
  cloud.validate();
  GaussianCloud out;
  for (size_t i = 0; i < cloud.size(); ++i) {
    if (sigmoid(cloud.opacity_logits[i]) < th.min_opacity) continue;
    const Vec3 ls = cloud.log_scale(i);
    const Vec3 s = ls.array().exp();
    int major = 0;
    s.maxCoeff(&major);
    if (s[major] > th.scale) {
      const Mat3 r = quaternion_to_matrix(cloud.rotation(i).normalized());
      const Vec3 offset = 0.5 * s[major] * r.col(major);
      const Vec3 child_ls = ls.array() - std::log(1.6);
      for (double sign : {-1.0, 1.0}) {
        out.append_from(cloud, i);
        const size_t j = out.size() - 1;
        out.set_position(j, cloud.position(i) + sign * offset);
        for (int k = 0; k < 3; ++k) out.log_scales[3 * j + k] = child_ls[k];
      }
      continue;
    }
    out.append_from(cloud, i);
    if (i < stats.sum.size() && stats.mean(i) > th.grad) out.append_from(cloud, i);
  }
  return out;
}

} // namespace icogs
