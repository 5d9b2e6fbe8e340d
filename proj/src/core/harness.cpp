#include "icogs/harness.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "icogs/rng.hpp"

namespace icogs {

namespace {

// Keeps texture discontinuities away from the rational coordinates pixel rays
// tend to hit exactly.
constexpr double kTexOffset = 0.1234567;

double hash01(uint64_t seed, int64_t x, int64_t y) {
  uint64_t h = splitmix64(seed ^ splitmix64(static_cast<uint64_t>(x) * 0x9E3779B1ull + 0x632BE5ABull));
  h = splitmix64(h ^ static_cast<uint64_t>(y) * 0x85EBCA77ull);
  return static_cast<double>(h >> 11) * (1.0 / 9007199254740992.0);
}

double value_noise(uint64_t seed, double x, double y) {
  const double fx = std::floor(x), fy = std::floor(y);
  const auto ix = static_cast<int64_t>(fx), iy = static_cast<int64_t>(fy);
  auto smooth = [](double t) { return t * t * (3.0 - 2.0 * t); };
  const double sx = smooth(x - fx), sy = smooth(y - fy);
  const double a = hash01(seed, ix, iy), b = hash01(seed, ix + 1, iy);
  const double c = hash01(seed, ix, iy + 1), d = hash01(seed, ix + 1, iy + 1);
  return (a + sx * (b - a)) + sy * ((c + sx * (d - c)) - (a + sx * (b - a)));
}

} // namespace

Vec3 Texture::eval(double u, double v) const {
  const double x = u * scale + kTexOffset, y = v * scale + kTexOffset;
  Vec3 c;
  switch (kind) {
    case TextureKind::kChecker: {
      const auto parity = (static_cast<int64_t>(std::floor(x)) + static_cast<int64_t>(std::floor(y))) & 1;
      c = base + (parity ? 0.5 : -0.5) * contrast * tint;
      break;
    }
    case TextureKind::kValueNoise: {
      for (int ch = 0; ch < 3; ++ch) {
        const uint64_t s = seed + 7919ull * static_cast<uint64_t>(ch);
        const double n = 0.65 * value_noise(s, x, y) + 0.35 * value_noise(s ^ 0xABCDull, 2.0 * x, 2.0 * y);
        c[ch] = base[ch] + contrast * (n - 0.5) * tint[ch];
      }
      break;
    }
    case TextureKind::kRamp: {
      const double t = x - std::floor(x);
      c = base + contrast * (t - 0.5) * tint;
      break;
    }
  }
  return c.cwiseMax(0.0).cwiseMin(1.0);
}

Primitive Primitive::plane(const Vec3& center, const Vec3& axis_u, const Vec3& axis_v, double half_u,
                           double half_v, const Texture& t) {
  Primitive p;
  p.kind = PrimitiveKind::kPlane;
  p.center = center;
  p.axis_u = axis_u.normalized();
  p.axis_v = axis_v.normalized();
  p.half_u = half_u;
  p.half_v = half_v;
  p.texture = t;
  return p;
}

Primitive Primitive::sphere(const Vec3& center, double radius, const Texture& t) {
  Primitive p;
  p.kind = PrimitiveKind::kSphere;
  p.center = center;
  p.radius = radius;
  p.texture = t;
  return p;
}

Primitive Primitive::box(const Vec3& center, const Vec3& half_size, const Texture& t) {
  Primitive p;
  p.kind = PrimitiveKind::kBox;
  p.center = center;
  p.half_size = half_size;
  p.texture = t;
  return p;
}

namespace {

std::optional<Hit> intersect_one(const Primitive& p, const Vec3& o, const Vec3& d, double t_min) {
  Hit h;
  switch (p.kind) {
    case PrimitiveKind::kPlane: {
      const Vec3 n = p.axis_u.cross(p.axis_v);
      const double denom = n.dot(d);
      if (std::abs(denom) < 1e-15) return std::nullopt;
      const double t = n.dot(p.center - o) / denom;
      if (!(t > t_min)) return std::nullopt;
      const Vec3 x = o + t * d;
      const Vec3 local = x - p.center;
      const double a = local.dot(p.axis_u), b = local.dot(p.axis_v);
      if (std::abs(a) > p.half_u || std::abs(b) > p.half_v) return std::nullopt;
      h.t = t;
      h.point = x;
      h.normal = n;
      h.u = a;
      h.v = b;
      return h;
    }
    case PrimitiveKind::kSphere: {
      const Vec3 oc = o - p.center;
      const double A = d.squaredNorm(), B = oc.dot(d), C = oc.squaredNorm() - p.radius * p.radius;
      const double disc = B * B - A * C;
      if (disc < 0.0) return std::nullopt;
      const double sq = std::sqrt(disc);
      double t = (-B - sq) / A;
      if (!(t > t_min)) t = (-B + sq) / A;
      if (!(t > t_min)) return std::nullopt;
      h.t = t;
      h.point = o + t * d;
      h.normal = (h.point - p.center) / p.radius;
      h.u = std::atan2(h.normal.z(), h.normal.x()) * p.radius;
      h.v = std::acos(std::clamp(h.normal.y(), -1.0, 1.0)) * p.radius;
      return h;
    }
    case PrimitiveKind::kBox: {
      const Vec3 lo = p.center - p.half_size, hi = p.center + p.half_size;
      double t0 = -std::numeric_limits<double>::infinity(), t1 = std::numeric_limits<double>::infinity();
      int axis0 = -1, axis1 = -1;
      for (int k = 0; k < 3; ++k) {
        if (std::abs(d[k]) < 1e-300) {
          if (o[k] < lo[k] || o[k] > hi[k]) return std::nullopt;
          continue;
        }
        double ta = (lo[k] - o[k]) / d[k], tb = (hi[k] - o[k]) / d[k];
        if (ta > tb) std::swap(ta, tb);
        if (ta > t0) {
          t0 = ta;
          axis0 = k;
        }
        if (tb < t1) {
          t1 = tb;
          axis1 = k;
        }
      }
      if (t0 > t1) return std::nullopt;
      double t = t0;
      int axis = axis0;
      if (!(t > t_min)) {
        t = t1;
        axis = axis1;
      }
      if (!(t > t_min) || axis < 0) return std::nullopt;
      h.t = t;
      h.point = o + t * d;
      h.normal = Vec3::Zero();
      h.normal[axis] = h.point[axis] > p.center[axis] ? 1.0 : -1.0;
      const int ua = (axis + 1) % 3, va = (axis + 2) % 3;
      h.u = h.point[ua] - p.center[ua];
      h.v = h.point[va] - p.center[va];
      return h;
    }
  }
  return std::nullopt;
}

struct Exposure {
  double gain = 1.0;
  double offset = 0.0;
};

Exposure view_exposure(const SceneSpec& scene, int view_index) {
  if (!scene.lighting.enabled) return {};
  const uint64_t s = stream_seed(scene.seed, "exposure") + static_cast<uint64_t>(view_index);
  const double a = 2.0 * hash01(s, 1, 0) - 1.0, b = 2.0 * hash01(s, 2, 0) - 1.0;
  return {1.0 + scene.lighting.gain_spread * a, scene.lighting.offset_spread * b};
}

Vec3 shade(const SceneSpec& scene, const Hit& h, const Vec3& dir, const Exposure& ex) {
  Vec3 albedo = scene.primitives[h.id].texture.eval(h.u, h.v);
  if (!scene.lighting.enabled) return albedo;
  Vec3 n = h.normal;
  if (n.dot(dir) > 0.0) n = -n;
  const double lambert = std::max(0.0, -n.dot(scene.lighting.direction));
  const double s = scene.lighting.ambient + (1.0 - scene.lighting.ambient) * lambert;
  return (albedo * s * ex.gain + Vec3::Constant(ex.offset)).cwiseMax(0.0).cwiseMin(1.0);
}

} // namespace

std::optional<Hit> intersect_scene(const SceneSpec& scene, const Vec3& origin, const Vec3& dir, double t_min) {
  std::optional<Hit> best;
  for (size_t i = 0; i < scene.primitives.size(); ++i) {
    auto h = intersect_one(scene.primitives[i], origin, dir, t_min);
    if (h && (!best || h->t < best->t)) {
      h->id = static_cast<int>(i);
      best = h;
    }
  }
  return best;
}

GroundTruthView raytrace_view(const SceneSpec& scene, const CameraIntrinsics& K, const CameraPose& pose,
                              int view_index) {
  K.validate();
  GroundTruthView v;
  v.rgb = Image(K.width, K.height, 3);
  v.depth = Image(K.width, K.height, 1);
  v.ids.assign(static_cast<size_t>(K.width) * K.height, -1);
  const Vec3 origin = pose.center();
  const Mat3 rt = pose.rotation.transpose();
  const Exposure ex = view_exposure(scene, view_index);
  for (int y = 0; y < K.height; ++y) {
    for (int x = 0; x < K.width; ++x) {
      const Vec3 dir = rt * Vec3((x - K.cx) / K.fx, (y - K.cy) / K.fy, 1.0);
      const auto h = intersect_scene(scene, origin, dir);
      const size_t i = static_cast<size_t>(y) * K.width + x;
      if (!h) {
        for (int c = 0; c < 3; ++c) v.rgb.data[3 * i + c] = scene.background[c];
        continue;
      }
      const Vec3 col = shade(scene, *h, dir, ex);
      for (int c = 0; c < 3; ++c) v.rgb.data[3 * i + c] = col[c];
      v.depth.data[i] = h->t;
      v.ids[i] = h->id;
    }
  }
  return v;
}

Mask covisibility_mask(const SceneSpec& scene, const CameraIntrinsics& K, const CameraPose& pose_ref,
                       const CameraPose& pose_src) {
  K.validate();
  Mask m(K.width, K.height);
  const Vec3 o_ref = pose_ref.center(), o_src = pose_src.center();
  const Mat3 rt = pose_ref.rotation.transpose();
  for (int y = 0; y < K.height; ++y) {
    for (int x = 0; x < K.width; ++x) {
      const auto h = intersect_scene(scene, o_ref, rt * Vec3((x - K.cx) / K.fx, (y - K.cy) / K.fy, 1.0));
      if (!h) continue;
      const Projection pr = project(K, pose_src.apply(h->point));
      if (!pr.valid || pr.pixel.u < 0 || pr.pixel.v < 0 || pr.pixel.u > K.width - 1 || pr.pixel.v > K.height - 1)
        continue;
      const auto hs = intersect_scene(scene, o_src, h->point - o_src);
      if (hs && (hs->point - h->point).norm() <= 1e-6) m.set(x, y, true);
    }
  }
  return m;
}

// ---- presets ---------------------------------------------------------------

namespace {

constexpr double kBaselineUnit = 0.125;

Texture tex(TextureKind kind, const Vec3& base, const Vec3& tint, double contrast, double scale, uint64_t seed) {
  Texture t;
  t.kind = kind;
  t.base = base;
  t.tint = tint;
  t.contrast = contrast;
  t.scale = scale;
  t.seed = seed;
  return t;
}

Primitive facing_plane(const Vec3& center, double half_u, double half_v, const Texture& t) {
  return Primitive::plane(center, Vec3::UnitX(), Vec3::UnitY(), half_u, half_v, t);
}

bool is_forward_preset(const std::string& preset) {
  return preset == "plane3" || preset == "occluder" || preset == "weak-texture";
}

} // namespace

std::vector<std::string> scene_presets() { return {"plane3", "occluder", "weak-texture", "orbit8"}; }

SceneSpec make_scene(const std::string& preset, uint64_t seed) {
  SceneSpec s;
  s.seed = seed;
  const uint64_t ts = stream_seed(seed, "scene");
  if (preset == "plane3") {
    s.primitives.push_back(facing_plane({0, 0, 4}, 2.6, 2.6,
                                        tex(TextureKind::kValueNoise, {0.45, 0.5, 0.55}, {1.0, 0.8, 0.9}, 0.8, 3.0, ts)));
    s.primitives.push_back(facing_plane({-0.6, -0.3, 8.0 / 3.0}, 0.5, 0.4,
                                        tex(TextureKind::kChecker, {0.75, 0.45, 0.25}, {0.6, 0.8, 0.6}, 0.5, 6.0, ts + 1)));
    s.primitives.push_back(facing_plane({0.45, 0.35, 2.0}, 0.3, 0.25,
                                        tex(TextureKind::kValueNoise, {0.3, 0.7, 0.35}, {0.8, 0.6, 1.0}, 0.7, 8.0, ts + 2)));
    s.bounds = {Vec3(0, 0, 3), 3.85};
  } else if (preset == "occluder") {
    s.primitives.push_back(facing_plane({0, 0, 4}, 2.6, 2.6,
                                        tex(TextureKind::kValueNoise, {0.5, 0.45, 0.4}, {0.9, 1.0, 0.8}, 0.8, 3.0, ts)));
    s.primitives.push_back(facing_plane({0.0, 0.0, 2.0}, 0.45, 0.45,
                                        tex(TextureKind::kChecker, {0.35, 0.55, 0.8}, {0.7, 0.5, 0.6}, 0.5, 5.0, ts + 1)));
    s.bounds = {Vec3(0, 0, 3), 3.85};
  } else if (preset == "weak-texture") {
    s.primitives.push_back(facing_plane({0, 0, 4}, 2.6, 2.6,
                                        tex(TextureKind::kChecker, {0.55, 0.6, 0.7}, {1, 1, 1}, 0.05, 2.5, ts)));
    s.primitives.push_back(facing_plane({-0.6, -0.3, 8.0 / 3.0}, 0.5, 0.4,
                                        tex(TextureKind::kChecker, {0.8, 0.55, 0.3}, {1, 1, 1}, 0.05, 4.0, ts + 1)));
    s.primitives.push_back(facing_plane({0.45, 0.35, 2.0}, 0.3, 0.25,
                                        tex(TextureKind::kChecker, {0.35, 0.7, 0.4}, {1, 1, 1}, 0.05, 6.0, ts + 2)));
    s.bounds = {Vec3(0, 0, 3), 3.85};
  } else if (preset == "orbit8") {
    s.primitives.push_back(Primitive::plane({0, 0.6, 3}, Vec3::UnitX(), Vec3::UnitZ(), 2.0, 2.0,
                                            tex(TextureKind::kChecker, {0.5, 0.5, 0.45}, {1, 0.9, 0.8}, 0.4, 2.0, ts)));
    s.primitives.push_back(Primitive::sphere({-0.5, 0.1, 3.2}, 0.5,
                                             tex(TextureKind::kValueNoise, {0.7, 0.35, 0.3}, {0.6, 1.0, 0.8}, 0.7, 4.0, ts + 1)));
    s.primitives.push_back(Primitive::box({0.6, 0.25, 2.8}, {0.35, 0.35, 0.35},
                                          tex(TextureKind::kChecker, {0.3, 0.45, 0.75}, {0.8, 0.7, 1.0}, 0.5, 6.0, ts + 2)));
    s.bounds = {Vec3(0, 0.3, 3), 3.0};
  } else {
    throw ConfigError("unknown scene preset '" + preset + "'");
  }
  return s;
}

CameraIntrinsics preset_intrinsics(int size) {
  if (size < 2) throw ConfigError("image size must be at least 2");
  CameraIntrinsics K;
  K.fx = K.fy = size;
  K.cx = K.cy = 0.5 * size;
  K.width = K.height = size;
  return K;
}

Rig make_rig(const std::string& preset, int n_train) {
  if (n_train < 2) throw ConfigError("need at least 2 training views");
  Rig rig;
  if (is_forward_preset(preset)) {
    static const int train_offsets[][2] = {{-2, 0}, {2, 0}, {0, -2}, {0, 2}, {-2, -2}, {2, 2}, {-2, 2}, {2, -2}, {-4, 0}};
    static const int test_offsets[][2] = {{0, 0}, {1, 1}, {-1, -1}, {1, -1}, {-1, 1}, {0, 1}, {1, 0}, {0, -1}, {-1, 0}};
    if (n_train > 9) throw ConfigError("forward-facing presets support at most 9 training views");
    for (int i = 0; i < n_train; ++i) {
      rig.train.push_back(CameraPose::from_center(
          Mat3::Identity(), Vec3(train_offsets[i][0] * kBaselineUnit, train_offsets[i][1] * kBaselineUnit, 0.0)));
      rig.test.push_back(CameraPose::from_center(
          Mat3::Identity(), Vec3(test_offsets[i][0] * kBaselineUnit, test_offsets[i][1] * kBaselineUnit, 0.0)));
    }
  } else if (preset == "orbit8") {
    const Vec3 target(0, 0.2, 3.0);
    auto ring = [&](double angle) {
      const Vec3 eye(target.x() + 3.0 * std::sin(angle), -1.2, target.z() - 3.0 * std::cos(angle));
      return CameraPose::look_at(eye, target, Vec3(0, -1, 0));
    };
    for (int i = 0; i < n_train; ++i) {
      const double a = 2.0 * std::numbers::pi * i / n_train;
      rig.train.push_back(ring(a));
      rig.test.push_back(ring(a + std::numbers::pi / n_train));
    }
  } else {
    throw ConfigError("unknown scene preset '" + preset + "'");
  }
  return rig;
}

Dataset generate_dataset(const std::string& preset, int n_views, uint64_t seed, const DatasetOptions& opt) {
  if (n_views < 2) throw ConfigError("need at least 2 views for multi-view consistency, got " + std::to_string(n_views));
  SceneSpec scene = make_scene(preset, seed);
  scene.lighting.enabled = opt.lighting;
  const Rig rig = make_rig(preset, n_views);
  const CameraIntrinsics K = preset_intrinsics(opt.image_size);
  Dataset ds;
  auto make_view = [&](int id, const CameraPose& pose) {
    const GroundTruthView gt = raytrace_view(scene, K, pose, id);
    return View{id, K, pose, gt.rgb, gt.depth};
  };
  for (int i = 0; i < n_views; ++i) ds.train.push_back(make_view(i, rig.train[i]));
  for (int i = 0; i < n_views; ++i) ds.test.push_back(make_view(n_views + i, rig.test[i]));
  ds.scene = scene;
  return ds;
}

// ---- initialization ----------------------------------------------------------

namespace {

struct PixelRef {
  size_t view;
  int x, y;
};

std::vector<PixelRef> sample_pixels(const std::vector<View>& views, size_t n, bool need_depth, std::mt19937_64& rng) {
  std::vector<std::vector<PixelRef>> pools(views.size());
  for (size_t v = 0; v < views.size(); ++v) {
    const View& view = views[v];
    for (int y = 0; y < view.K.height; ++y)
      for (int x = 0; x < view.K.width; ++x)
        if (!need_depth || (!view.depth.empty() && view.depth.at(x, y) > 0.0)) pools[v].push_back({v, x, y});
  }
  std::vector<size_t> usable;
  for (size_t v = 0; v < pools.size(); ++v)
    if (!pools[v].empty()) usable.push_back(v);
  if (usable.empty()) throw ContractError("init_cloud: no view has valid depth");
  std::uniform_int_distribution<size_t> pick_view(0, usable.size() - 1);
  std::vector<PixelRef> out;
  out.reserve(n);
  for (size_t i = 0; i < n; ++i) {
    const auto& pool = pools[usable[pick_view(rng)]];
    std::uniform_int_distribution<size_t> pick(0, pool.size() - 1);
    out.push_back(pool[pick(rng)]);
  }
  return out;
}

GaussianCloud finish_cloud(const std::vector<Vec3>& points, const std::vector<Vec3>& colors) {
  double nn_sum = 0.0;
  for (size_t i = 0; i < points.size(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (size_t j = 0; j < points.size(); ++j)
      if (j != i) best = std::min(best, (points[i] - points[j]).squaredNorm());
    if (std::isfinite(best)) nn_sum += std::sqrt(best);
  }
  double scale = points.size() > 1 ? nn_sum / static_cast<double>(points.size()) : 0.01;
  scale = std::clamp(scale, 10 * kMinScale, kMaxScale / 10);
  GaussianCloud cloud;
  const double ls = std::log(scale);
  for (size_t i = 0; i < points.size(); ++i)
    cloud.push_back(points[i], Vec4(1, 0, 0, 0), Vec3::Constant(ls), logit(0.1), colors[i]);
  return cloud;
}

Vec3 pixel_color(const View& v, int x, int y) { return {v.rgb.at(x, y, 0), v.rgb.at(x, y, 1), v.rgb.at(x, y, 2)}; }

} // namespace

GaussianCloud init_cloud(const std::vector<View>& views, size_t n_points, double noise_sigma, uint64_t seed) {
  std::mt19937_64 rng(seed);
  const auto picks = sample_pixels(views, n_points, true, rng);
  std::normal_distribution<double> noise(0.0, 1.0);
  std::vector<Vec3> points, colors;
  for (const auto& p : picks) {
    const View& v = views[p.view];
    const Vec3 cam = backproject(v.K, {double(p.x), double(p.y)}, v.depth.at(p.x, p.y));
    Vec3 world = v.pose.inverse().apply(cam);
    if (noise_sigma > 0.0) world += noise_sigma * Vec3(noise(rng), noise(rng), noise(rng));
    points.push_back(world);
    colors.push_back(pixel_color(v, p.x, p.y));
  }
  return finish_cloud(points, colors);
}

GaussianCloud init_cloud_random_depth(const std::vector<View>& views, size_t n_points, double depth_min,
                                      double depth_max, uint64_t seed) {
  if (!(depth_min > 0.0) || !(depth_max >= depth_min)) throw ContractError("init_cloud_random_depth: bad depth range");
  std::mt19937_64 rng(seed);
  const auto picks = sample_pixels(views, n_points, false, rng);
  std::uniform_real_distribution<double> depth(depth_min, depth_max);
  std::vector<Vec3> points, colors;
  for (const auto& p : picks) {
    const View& v = views[p.view];
    const Vec3 cam = backproject(v.K, {double(p.x), double(p.y)}, depth(rng));
    points.push_back(v.pose.inverse().apply(cam));
    colors.push_back(pixel_color(v, p.x, p.y));
  }
  return finish_cloud(points, colors);
}

} // namespace icogs
