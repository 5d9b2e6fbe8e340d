#include <doctest.h>

#include <cmath>
#include <random>

#include "gradcheck.hpp"
#include "icogs/harness.hpp"
#include "icogs/warp.hpp"
#include "oracle.hpp"

using namespace icogs;

namespace {

const CameraIntrinsics kK{100, 100, 32, 32, 64, 64};
const CameraPose kShift{Mat3::Identity(), Vec3(0.1, 0, 0)};

} // namespace

TEST_CASE("forward warp examples") {
  Image d(64, 64, 1, 2.0);
  WarpField f = forward_warp_pixels(d, kK, CameraPose::identity());
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 64; ++x) {
      const size_t i = y * 64 + x;
      CHECK(f.valid.at(x, y));
      CHECK(f.pixel[i].u == doctest::Approx(x).epsilon(1e-15));
      CHECK(f.depth[i] == 2.0);
    }
  f = forward_warp_pixels(d, kK, kShift);
  CHECK(f.pixel[32 * 64 + 10].u == doctest::Approx(15.0).epsilon(1e-14));
  CHECK(f.pixel[32 * 64 + 10].v == doctest::Approx(32.0).epsilon(1e-14));
  CHECK(f.depth[32 * 64 + 10] == doctest::Approx(2.0));
  d.at(3, 4) = 0.0;
  f = forward_warp_pixels(d, kK, kShift);
  CHECK_FALSE(f.valid.at(3, 4));
  CHECK_THROWS_AS(forward_warp_pixels(Image(10, 10, 1, 1.0), kK, kShift), ContractError);
}

TEST_CASE("inverse warp examples") {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0, 1);
  Image src(64, 64, 3);
  for (auto& v : src.data) v = u(rng);
  Image d(64, 64, 1, 2.0);
  d.at(5, 5) = 0.0;
  WarpedMap w = inverse_warp(src, d, kK, CameraPose::identity());
  CHECK_FALSE(w.mask.at(5, 5));
  for (int c = 0; c < 3; ++c) CHECK(w.values.at(5, 5, c) == 0.0);
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 64; ++x)
      if (!(x == 5 && y == 5))
        for (int c = 0; c < 3; ++c) CHECK(w.values.at(x, y, c) == src.at(x, y, c));

  Image ramp(64, 64, 1);
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 64; ++x) ramp.at(x, y) = x / 64.0;
  w = inverse_warp(ramp, Image(64, 64, 1, 2.0), kK, kShift);
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 64; ++x) {
      if (x + 5 <= 63) {
        CHECK(w.mask.at(x, y));
        CHECK(w.values.at(x, y) == doctest::Approx((x + 5) / 64.0).epsilon(1e-12));
      } else {
        CHECK_FALSE(w.mask.at(x, y));
        CHECK(w.values.at(x, y) == 0.0);
      }
    }
}

TEST_CASE("backward reprojection examples") {
  Image d(64, 64, 1, 2.0);
  Reprojection r = backward_reproject(d, d, kK, CameraPose::identity());
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 64; ++x) {
      CHECK(r.valid.at(x, y));
      CHECK(r.depth.at(x, y) == 2.0);
      CHECK(r.pixel[y * 64 + x].u == doctest::Approx(x).epsilon(1e-15));
    }

  // Source depth inflated to 3 around p' = (25, 32) of reference pixel (20, 32).
  Image ds = d;
  for (int y = 28; y < 37; ++y)
    for (int x = 21; x < 30; ++x) ds.at(x, y) = 3.0;
  r = backward_reproject(d, ds, kK, kShift);
  CHECK(r.valid.at(20, 32));
  CHECK(r.depth.at(20, 32) == doctest::Approx(3.0).epsilon(1e-12));
  // X_src = (-0.21, 0, 3) -> X_ref = (-0.31, 0, 3) -> u = 100 * -0.31 / 3 + 32.
  CHECK(r.pixel[32 * 64 + 20].u == doctest::Approx(100.0 * -0.31 / 3.0 + 32.0).epsilon(1e-12));
  CHECK(r.pixel[32 * 64 + 20].v == doctest::Approx(32.0).epsilon(1e-12));
  CHECK(r.depth.at(5, 5) == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("masked l1 examples and mask soundness") {
  Image a(2, 2, 1), b(2, 2, 1);
  Mask m(2, 2);
  m.set(0, 0, true);
  m.set(1, 0, true);
  a.at(0, 0) = 0.7;
  b.at(0, 0) = 0.5;
  MaskedL1 r = masked_l1(a, b, m);
  CHECK(r.value == doctest::Approx(0.1).epsilon(1e-12));
  CHECK_FALSE(r.empty);
  CHECK(masked_l1(a, a, m).value == 0.0);
  r = masked_l1(a, b, Mask(2, 2));
  CHECK(r.value == 0.0);
  CHECK(r.empty);
  Image a2 = a;
  a2.at(0, 1) = 123.0;
  a2.at(1, 1) = -5.0;
  CHECK(masked_l1(a2, b, m).value == masked_l1(a, b, m).value);
  const Image g = masked_l1_grad(a2, b, m);
  CHECK(g.at(0, 1) == 0.0);
  CHECK(g.at(1, 1) == 0.0);
  CHECK_THROWS_AS(masked_l1(a, Image(3, 2, 1), m), ContractError);
}

TEST_CASE("ground-truth cycle exactness on harness scenes") {
  for (const char* preset : {"plane3", "occluder"}) {
    const SceneSpec scene = make_scene(preset, 0);
    const Dataset ds = generate_dataset(preset, 3, 0);
    size_t checked = 0;
    for (const auto& ref : ds.train)
      for (const auto& src : ds.train) {
        if (ref.id == src.id) continue;
        const CameraPose T = relative_transform(ref.pose, src.pose);
        const Mask cov = icogs::testing::erode(covisibility_mask(scene, ref.K, ref.pose, src.pose));
        const Reprojection r = backward_reproject(ref.depth, src.depth, ref.K, T);
        const WarpedMap w = inverse_warp(src.rgb, ref.depth, ref.K, T);
        for (int y = 0; y < ref.K.height; ++y)
          for (int x = 0; x < ref.K.width; ++x) {
            if (!cov.at(x, y)) continue;
            ++checked;
            const Pixel& p = r.pixel[y * ref.K.width + x];
            REQUIRE(r.valid.at(x, y));
            CHECK(std::hypot(p.u - x, p.v - y) <= 1e-4);
            CHECK(std::abs(r.depth.at(x, y) - ref.depth.at(x, y)) <= 1e-4 * ref.depth.at(x, y));
            REQUIRE(w.mask.at(x, y));
            for (int c = 0; c < 3; ++c) CHECK(std::abs(w.values.at(x, y, c) - ref.rgb.at(x, y, c)) <= 1e-6);
          }
      }
    CHECK(checked > 1000);
  }
}

TEST_CASE("warp depth gradients match finite differences") {
  const auto r = icogs::testing::check_warp_depth_gradients(200, 3);
  INFO(r.first_failure);
  CHECK(r.probes == 200);
  CHECK(r.passed == r.probes);
  CHECK(r.nontrivial > 150);
}
