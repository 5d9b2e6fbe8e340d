#include <doctest.h>

#include <cmath>
#include <random>

#include "gradcheck.hpp"
#include "icogs/harness.hpp"
#include "icogs/warp.hpp"
#include "oracle.hpp"

using namespace icogs;

namespace {

const CameraIntrinsics kK{40, 40, 16, 16, 32, 32};

Texture flat(double g) {
  Texture t;
  t.kind = TextureKind::kChecker;
  t.base = Vec3(g, g, g);
  t.contrast = 0.0;
  return t;
}

SceneSpec plane_scene(double z, double half = 50.0) {
  SceneSpec s;
  s.primitives.push_back(Primitive::plane(Vec3(0, 0, z), Vec3::UnitX(), Vec3::UnitY(), half, half, flat(0.6)));
  s.bounds.center = Vec3(0, 0, z);
  s.bounds.radius = half * std::sqrt(2.0);
  return s;
}

/// Direct 11x11 Gaussian-window SSIM with per-pixel window renormalization.
double reference_ssim(const Image& a, const Image& b) {
  const double c1 = 1e-4, c2 = 9e-4;
  double w[11];
  for (int i = 0; i < 11; ++i) w[i] = std::exp(-(i - 5) * (i - 5) / (2 * 1.5 * 1.5));
  double total = 0.0;
  for (int c = 0; c < a.channels; ++c)
    for (int y = 0; y < a.height; ++y)
      for (int x = 0; x < a.width; ++x) {
        double ws = 0, ma = 0, mb = 0, aa = 0, bb = 0, ab = 0;
        for (int dy = -5; dy <= 5; ++dy)
          for (int dx = -5; dx <= 5; ++dx) {
            const int xx = x + dx, yy = y + dy;
            if (xx < 0 || yy < 0 || xx >= a.width || yy >= a.height) continue;
            const double k = w[dx + 5] * w[dy + 5];
            const double va = a.at(xx, yy, c), vb = b.at(xx, yy, c);
            ws += k;
            ma += k * va;
            mb += k * vb;
            aa += k * va * va;
            bb += k * vb * vb;
            ab += k * va * vb;
          }
        ma /= ws;
        mb /= ws;
        const double va = aa / ws - ma * ma, vb = bb / ws - mb * mb, cov = ab / ws - ma * mb;
        total += (2 * ma * mb + c1) * (2 * cov + c2) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
      }
  return total / static_cast<double>(a.data.size());
}

} // namespace

TEST_CASE("ray trace examples") {
  const GroundTruthView plane = raytrace_view(plane_scene(2.0), kK, CameraPose::identity());
  CHECK(plane.depth.at(16, 16) == 2.0);
  for (int y = 0; y < 32; ++y)
    for (int x = 0; x < 32; ++x) {
      CHECK(std::abs(plane.depth.at(x, y) - 2.0) <= 1e-12);
      CHECK(plane.ids[y * 32 + x] == 0);
      CHECK(plane.rgb.at(x, y, 1) == doctest::Approx(0.6));
    }

  SceneSpec sphere;
  sphere.primitives.push_back(Primitive::sphere(Vec3(0, 0, 5), 1.25, flat(0.3)));
  sphere.background = Vec3(0.1, 0.2, 0.3);
  const GroundTruthView s = raytrace_view(sphere, kK, CameraPose::identity());
  CHECK(s.depth.at(16, 16) == doctest::Approx(5.0 - 1.25).epsilon(1e-14));
  CHECK(s.ids[16 * 32 + 16] == 0);
  CHECK(s.depth.at(0, 0) == 0.0);
  CHECK(s.ids[0] == -1);
  CHECK(s.rgb.at(0, 0, 0) == 0.1);
  CHECK(s.rgb.at(0, 0, 1) == 0.2);
  CHECK(s.rgb.at(0, 0, 2) == 0.3);
  for (size_t i = 0; i < s.ids.size(); ++i) CHECK((s.depth.data[i] > 0.0) == (s.ids[i] >= 0));

  // Moving the camera back by 2 along z adds 2 to the sphere's central depth.
  const GroundTruthView far = raytrace_view(sphere, kK, CameraPose::from_center(Mat3::Identity(), Vec3(0, 0, -2)));
  CHECK(far.depth.at(16, 16) == doctest::Approx(7.0 - 1.25).epsilon(1e-14));
}

TEST_CASE("ray traced preset views are exact and deterministic") {
  for (const auto& preset : scene_presets()) {
    const SceneSpec scene = make_scene(preset, 3);
    for (const auto& prim : scene.primitives) {
      std::vector<Vec3> extremes;
      if (prim.kind == PrimitiveKind::kSphere) {
        const Vec3 dir = prim.center - scene.bounds.center;
        extremes.push_back(prim.center + prim.radius * (dir.norm() > 0 ? dir.normalized() : Vec3::UnitX()));
      } else {
        for (double a : {-1.0, 1.0})
          for (double b : {-1.0, 1.0})
            for (double c : {-1.0, 1.0}) {
              if (prim.kind == PrimitiveKind::kBox)
                extremes.push_back(prim.center + prim.half_size.cwiseProduct(Vec3(a, b, c)));
              else
                extremes.push_back(prim.center + a * prim.half_u * prim.axis_u + b * prim.half_v * prim.axis_v);
            }
      }
      for (const Vec3& e : extremes) CHECK((e - scene.bounds.center).norm() <= scene.bounds.radius);
    }
    const Dataset a = generate_dataset(preset, 3, 3), b = generate_dataset(preset, 3, 3);
    for (size_t i = 0; i < a.train.size(); ++i) {
      CHECK(a.train[i].rgb.data == b.train[i].rgb.data);
      CHECK(a.train[i].depth.data == b.train[i].depth.data);
    }
  }
  CHECK_THROWS_AS(generate_dataset("nope", 3, 0), ConfigError);
  CHECK_THROWS_AS(generate_dataset("plane3", 1, 0), ConfigError);
}

TEST_CASE("covisibility examples") {
  const SceneSpec back = plane_scene(4.0, 3.0);
  const GroundTruthView gt = raytrace_view(back, kK, CameraPose::identity());
  Mask same = covisibility_mask(back, kK, CameraPose::identity(), CameraPose::identity());
  for (size_t i = 0; i < gt.ids.size(); ++i) CHECK(static_cast<bool>(same.data[i]) == (gt.ids[i] >= 0));

  // A camera turned around sees nothing of the reference surface.
  const Mat3 turn = Eigen::AngleAxisd(M_PI, Vec3::UnitY()).toRotationMatrix();
  CHECK_FALSE(covisibility_mask(back, kK, CameraPose::identity(), CameraPose::from_center(turn, Vec3::Zero())).any());

  // Small occluder in front of a back plane, source camera shifted sideways.
  SceneSpec two = back;
  two.primitives.push_back(Primitive::plane(Vec3(0.3, 0, 2), Vec3::UnitX(), Vec3::UnitY(), 0.2, 0.2, flat(0.9)));
  const CameraPose src = CameraPose::from_center(Mat3::Identity(), Vec3(0.5, 0, 0));
  const Mask m = covisibility_mask(two, kK, CameraPose::identity(), src);
  const GroundTruthView ref = raytrace_view(two, kK, CameraPose::identity());
  size_t occluded = 0;
  for (int y = 0; y < 32; ++y)
    for (int x = 0; x < 32; ++x) {
      const size_t i = y * 32 + x;
      if (ref.ids[i] != 0) continue;
      // Back-plane point seen from the reference; the segment to the source
      // center crosses z = 2 halfway, where the occluder spans |x - 0.3|, |y| <= 0.2.
      const Vec3 p = backproject(kK, {double(x), double(y)}, ref.depth.at(x, y));
      const Vec3 mid = 0.5 * (p + src.center());
      const bool blocked = std::abs(mid.x() - 0.3) <= 0.2 && std::abs(mid.y()) <= 0.2;
      const Projection pr = project(kK, src.apply(p));
      const bool inside = pr.valid && pr.pixel.u >= 0 && pr.pixel.v >= 0 && pr.pixel.u <= 31 && pr.pixel.v <= 31;
      if (std::abs(std::abs(mid.x() - 0.3) - 0.2) < 1e-6 || std::abs(std::abs(mid.y()) - 0.2) < 1e-6) continue;
      CHECK(static_cast<bool>(m.data[i]) == (inside && !blocked));
      occluded += inside && blocked;
    }
  CHECK(occluded > 10);
}

TEST_CASE("warping ground-truth color reproduces the reference on co-visible pixels") {
  // Forward rigs have integer disparities, so the color warp is exact.
  for (const char* preset : {"plane3", "occluder", "weak-texture"}) {
    const SceneSpec scene = make_scene(preset, 1);
    const Dataset ds = generate_dataset(preset, 3, 1);
    size_t checked = 0;
    double worst = 0.0;
    for (const auto& ref : ds.train)
      for (const auto& src : ds.train) {
        if (ref.id == src.id) continue;
        const Mask cov = icogs::testing::erode(covisibility_mask(scene, ref.K, ref.pose, src.pose));
        const WarpedMap w = inverse_warp(src.rgb, ref.depth, ref.K, relative_transform(ref.pose, src.pose));
        for (int y = 0; y < ref.K.height; ++y)
          for (int x = 0; x < ref.K.width; ++x) {
            if (!cov.at(x, y)) continue;
            REQUIRE(w.mask.at(x, y));
            ++checked;
            for (int c = 0; c < 3; ++c) worst = std::max(worst, std::abs(w.values.at(x, y, c) - ref.rgb.at(x, y, c)));
          }
      }
    INFO(preset);
    CHECK(checked > 500);
    CHECK(worst <= 1e-6);
  }
}

TEST_CASE("warped pixels land on the projection of the ray-traced hit") {
  // The orbit rig rotates between views; check correspondences against the scene directly.
  const SceneSpec scene = make_scene("orbit8", 2);
  const Dataset ds = generate_dataset("orbit8", 4, 2);
  size_t checked = 0;
  for (const auto& ref : ds.train)
    for (const auto& src : ds.train) {
      if (ref.id == src.id) continue;
      const WarpField f = forward_warp_pixels(ref.depth, ref.K, relative_transform(ref.pose, src.pose));
      const Mat3 rt = ref.pose.rotation.transpose();
      for (int y = 0; y < ref.K.height; ++y)
        for (int x = 0; x < ref.K.width; ++x) {
          const auto hit = intersect_scene(scene, ref.pose.center(),
                                           rt * Vec3((x - ref.K.cx) / ref.K.fx, (y - ref.K.cy) / ref.K.fy, 1.0));
          if (!hit) continue;
          const Projection pr = project(src.K, src.pose.apply(hit->point));
          const size_t i = static_cast<size_t>(y) * ref.K.width + x;
          REQUIRE(f.valid.data[i] == pr.valid);
          if (!pr.valid) continue;
          ++checked;
          CHECK(std::hypot(f.pixel[i].u - pr.pixel.u, f.pixel[i].v - pr.pixel.v) <= 1e-6);
          CHECK(std::abs(f.depth[i] - pr.depth) <= 1e-9 * pr.depth);
        }
    }
  CHECK(checked > 10000);
}

TEST_CASE("init cloud examples") {
  const SceneSpec scene = plane_scene(2.0, 40.0);
  std::vector<View> views;
  for (int i = 0; i < 3; ++i) {
    View v;
    v.id = i;
    v.K = kK;
    v.pose = CameraPose::from_center(Mat3::Identity(), Vec3(10.0 * (i - 1), 0, 0));
    const GroundTruthView gt = raytrace_view(scene, kK, v.pose);
    v.rgb = gt.rgb;
    v.depth = gt.depth;
    views.push_back(v);
  }
  const GaussianCloud c = init_cloud(views, 500, 0.0, 42);
  REQUIRE(c.size() == 500);
  int per_view[3] = {0, 0, 0};
  for (size_t i = 0; i < c.size(); ++i) {
    const Vec3 p = c.position(i);
    CHECK(std::abs(p.z() - 2.0) <= 1e-6);
    // Each camera sees |x - center| <= 16 / 40 * 2, so x identifies the view.
    ++per_view[static_cast<int>(std::lround(p.x() / 10.0)) + 1];
    CHECK(c.opacity_logits[i] == doctest::Approx(logit(0.1)).epsilon(1e-12));
    for (int ch = 0; ch < 3; ++ch) {
      CHECK(c.sh[12 * i + 4 * ch] == doctest::Approx(rgb_to_sh0(0.6)).epsilon(1e-9));
      for (int k = 1; k < 4; ++k) CHECK(c.sh[12 * i + 4 * ch + k] == 0.0);
    }
    CHECK(c.log_scales[3 * i] == c.log_scales[3 * i + 1]);
    CHECK(c.log_scales[3 * i] == c.log_scales[3 * i + 2]);
  }
  for (int n : per_view) CHECK(n >= 100);

  // Isotropic scale is the mean nearest-neighbour distance.
  double mean_nn = 0.0;
  for (size_t i = 0; i < c.size(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (size_t j = 0; j < c.size(); ++j)
      if (j != i) best = std::min(best, (c.position(i) - c.position(j)).norm());
    mean_nn += best;
  }
  mean_nn /= c.size();
  CHECK(std::exp(c.log_scales[0]) == doctest::Approx(mean_nn).epsilon(1e-9));

  const GaussianCloud again = init_cloud(views, 500, 0.0, 42);
  CHECK(again.positions == c.positions);
  CHECK(again.sh == c.sh);
  CHECK(init_cloud(views, 500, 0.0, 43).positions != c.positions);
  const GaussianCloud noisy = init_cloud(views, 500, 0.05, 42);
  double spread = 0.0;
  for (size_t i = 0; i < noisy.size(); ++i) spread += std::pow(noisy.position(i).z() - 2.0, 2);
  CHECK(std::sqrt(spread / 500) == doctest::Approx(0.05).epsilon(0.15));

  std::vector<View> blank = views;
  for (auto& v : blank) v.depth = Image(32, 32, 1, 0.0);
  CHECK_THROWS(init_cloud(blank, 10, 0.0, 1));

  const GaussianCloud rd = init_cloud_random_depth(views, 200, 1.0, 3.0, 5);
  for (size_t i = 0; i < rd.size(); ++i) {
    CHECK(rd.position(i).z() >= 1.0 - 1e-12);
    CHECK(rd.position(i).z() <= 3.0 + 1e-12);
  }
}

TEST_CASE("psnr and ssim examples") {
  const Image zero(16, 16, 3, 0.0), half(16, 16, 3, 0.5);
  CHECK(psnr(zero, zero) == 99.0);
  CHECK(psnr(zero, half) == doctest::Approx(10.0 * std::log10(4.0)).epsilon(1e-12));
  CHECK(psnr(zero, half) == doctest::Approx(6.0206).epsilon(1e-5));
  CHECK(ssim(half, half) == doctest::Approx(1.0).epsilon(1e-15));

  const double m1 = 0.3, m2 = 0.45, c1 = 1e-4;
  const double closed = (2 * m1 * m2 + c1) / (m1 * m1 + m2 * m2 + c1);
  CHECK(ssim(Image(20, 20, 3, m1), Image(20, 20, 3, m2)) == doctest::Approx(closed).epsilon(1e-12));
  CHECK_THROWS_AS(psnr(zero, Image(15, 16, 3)), ContractError);
}

TEST_CASE("metrics are symmetric and ssim matches a direct window sum") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0, 1);
  for (int t = 0; t < 3; ++t) {
    Image a(23, 19, 3), b(23, 19, 3);
    for (auto& v : a.data) v = u(rng);
    for (size_t i = 0; i < b.data.size(); ++i) b.data[i] = std::clamp(a.data[i] + 0.2 * (u(rng) - 0.5), 0.0, 1.0);
    CHECK(psnr(a, b) == psnr(b, a));
    CHECK(ssim(a, b) == doctest::Approx(ssim(b, a)).epsilon(1e-13));
    CHECK(ssim(a, b) == doctest::Approx(reference_ssim(a, b)).epsilon(1e-10));
  }
}

TEST_CASE("ssim gradients match finite differences") {
  const auto r = icogs::testing::check_ssim_gradients(200, 1);
  INFO(r.first_failure);
  CHECK(r.ok());
  CHECK(r.nontrivial > 100);
}

TEST_CASE("mean absolute depth error ignores pixels without ground truth") {
  Image d(2, 1, 1), gt(2, 1, 1);
  d.data = {2.5, 9.0};
  gt.data = {2.0, 0.0};
  CHECK(mean_abs_depth_error(d, gt) == 0.5);
}
