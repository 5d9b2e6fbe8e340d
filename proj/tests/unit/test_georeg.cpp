#include <doctest.h>

#include <cmath>
#include <random>

#include "gradcheck.hpp"
#include "icogs/georeg.hpp"
#include "icogs/harness.hpp"
#include "oracle.hpp"

using namespace icogs;

namespace {

Image random_rgb(int w, int h, std::mt19937_64& rng, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  Image img(w, h, 3);
  for (auto& v : img.data) v = u(rng);
  return img;
}

WarpedMap warped_copy(const Image& values, bool valid = true) {
  WarpedMap w;
  w.values = values;
  w.mask = Mask(values.width, values.height, valid);
  w.dvalues_ddepth = Image(values.width, values.height, values.channels);
  return w;
}

} // namespace

TEST_CASE("features of a constant image are the bias unit vector") {
  for (double c : {0.5, 0.3, 0.0, 1.0}) {
    const Image f = extract_features(Image(6, 5, 3, c));
    for (int y = 0; y < 5; ++y)
      for (int x = 0; x < 6; ++x) {
        for (int ch = 0; ch < 7; ++ch) CHECK(std::abs(f.at(x, y, ch)) <= 1e-12);
        CHECK(f.at(x, y, 7) == doctest::Approx(1.0).epsilon(1e-12));
        for (int ch = 0; ch < kFeatureChannels; ++ch) CHECK(f.at(x, y, ch) == f.at(0, 0, ch));
      }
  }
}

TEST_CASE("features are unit norm and deterministic") {
  std::mt19937_64 rng(4);
  const Image img = random_rgb(17, 13, rng, 0.0, 1.0);
  const Image f = extract_features(img);
  CHECK(f.channels == kFeatureChannels);
  for (int y = 0; y < 13; ++y)
    for (int x = 0; x < 17; ++x) {
      double n2 = 0.0;
      for (double v : f.pixel(x, y)) n2 += v * v;
      CHECK(std::abs(std::sqrt(n2) - 1.0) <= 1e-6);
    }
  CHECK(extract_features(img).data == f.data);
  CHECK_THROWS_AS(extract_features(Image(4, 4, 1)), ContractError);
}

TEST_CASE("features are invariant to a global brightness offset") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 5; ++trial) {
    const Image img = random_rgb(24, 20, rng, 0.0, 0.8);
    Image shifted = img;
    for (auto& v : shifted.data) v += 0.2;
    const Image a = extract_features(img), b = extract_features(shifted);
    double worst = 0.0;
    for (size_t i = 0; i < a.data.size(); ++i) worst = std::max(worst, std::abs(a.data[i] - b.data[i]));
    CHECK(worst <= 1e-12);
  }
}

TEST_CASE("sobel x channel on a vertical step edge") {
  // Columns 0-1 dark, 2-4 bright: the raw 3x3 Sobel response is 4 on columns 1
  // and 2 and 0 elsewhere, so channel 1 over the bias channel is 4 / 0.1 there.
  Image step(5, 5, 3, 0.0), flipped(5, 5, 3, 0.0);
  for (int y = 0; y < 5; ++y)
    for (int x = 0; x < 5; ++x)
      for (int c = 0; c < 3; ++c) {
        step.at(x, y, c) = x >= 2 ? 1.0 : 0.0;
        flipped.at(x, y, c) = x >= 2 ? 0.0 : 1.0;
      }
  const Image f = extract_features(step), g = extract_features(flipped);
  for (int y = 0; y < 5; ++y) {
    for (int x : {1, 2}) {
      CHECK(f.at(x, y, 1) / f.at(x, y, 7) == doctest::Approx(40.0).epsilon(1e-12));
      CHECK(g.at(x, y, 1) / g.at(x, y, 7) == doctest::Approx(-40.0).epsilon(1e-12));
    }
    for (int x : {0, 3, 4}) {
      CHECK(f.at(x, y, 1) == 0.0);
      CHECK(g.at(x, y, 1) == 0.0);
    }
    CHECK(f.at(2, y, 1) > 0.0);
    CHECK(f.at(1, y, 1) > 0.0);
    for (int x = 0; x < 5; ++x) CHECK(f.at(x, y, 1) <= std::max(f.at(1, y, 1), f.at(2, y, 1)));
  }
}

TEST_CASE("cosine distance examples") {
  const std::vector<double> a{1, 0, 0}, b{0, 1, 0}, na{-1, 0, 0}, z{0, 0, 0};
  CHECK(cosine_distance(a, a) == 0.0);
  CHECK(cosine_distance(a, na) == 1.0);
  CHECK(cosine_distance(a, b) == 0.5);
  CHECK(cosine_distance(a, z) == 1.0);
  CHECK(cosine_distance(z, z) == 1.0);
  CHECK_THROWS_AS(cosine_distance(a, std::vector<double>{1, 0}), ContractError);
}

TEST_CASE("default k") {
  CHECK(default_k(2) == 1);
  CHECK(default_k(3) == 1);
  CHECK(default_k(4) == 2);
  CHECK(default_k(5) == 2);
  CHECK(default_k(8) == 4);
  CHECK_THROWS_AS(default_k(1), ContractError);
}

TEST_CASE("top-k selection examples") {
  std::vector<Image> errors{Image(1, 1, 1, 0.4), Image(1, 1, 1, 0.1), Image(1, 1, 1, 0.3)};
  std::vector<Mask> masks(3, Mask(1, 1, true));
  TopKSelection s = topk_select(errors, masks, 2);
  CHECK(s.count[0] == 2);
  CHECK(s.index(0, 0) == 1);
  CHECK(s.index(0, 1) == 2);
  CHECK(s.error(0, 0) == 0.1);
  CHECK(s.error(0, 1) == 0.3);
  CHECK(icogs::testing::brute_force_topk({0.4, 0.1, 0.3}, {true, true, true}, 2) == std::vector<int>{1, 2});

  s = topk_select(errors, masks, 3);
  CHECK(s.count[0] == 3);

  masks[1] = Mask(1, 1, false);
  s = topk_select(errors, masks, 2);
  CHECK(s.index(0, 0) == 2);
  CHECK(s.index(0, 1) == 0);

  masks.assign(3, Mask(1, 1, false));
  masks[0] = Mask(1, 1, true);
  s = topk_select(errors, masks, 2);
  CHECK(s.count[0] == 1);
  CHECK(s.index(0, 1) == -1);

  CHECK_THROWS_AS(topk_select(errors, masks, 0), ContractError);
  CHECK_THROWS_AS(topk_select(errors, masks, 4), ContractError);
  CHECK_THROWS_AS(topk_select(std::vector<Image>{}, std::vector<Mask>{}, 1), ContractError);
}

TEST_CASE("top-k selection equals exhaustive subset minimization") {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<int> level(0, 6); // coarse levels force ties
  std::bernoulli_distribution valid(0.75);
  size_t compared = 0;
  for (int n = 2; n <= 6; ++n) {
    const int sources = n - 1;
    std::vector<Image> errors(sources, Image(9, 7, 1));
    std::vector<Mask> masks(sources, Mask(9, 7));
    for (int j = 0; j < sources; ++j) {
      for (auto& e : errors[j].data) e = level(rng) / 6.0;
      for (auto& m : masks[j].data) m = valid(rng);
    }
    for (int k = 1; k <= sources; ++k) {
      const TopKSelection s = topk_select(errors, masks, k);
      for (size_t p = 0; p < errors[0].pixel_count(); ++p) {
        std::vector<double> e(sources);
        std::vector<bool> v(sources);
        for (int j = 0; j < sources; ++j) {
          e[j] = errors[j].data[p];
          v[j] = masks[j].data[p] != 0;
        }
        const std::vector<int> oracle = icogs::testing::brute_force_topk(e, v, k);
        std::vector<int> got(s.indices.begin() + p * k, s.indices.begin() + p * k + s.count[p]);
        for (int i = 0; i < s.count[p]; ++i) {
          CHECK(v[got[i]]);
          CHECK(s.error(p, i) == e[got[i]]);
          if (i > 0) CHECK(s.error(p, i - 1) <= s.error(p, i));
        }
        std::sort(got.begin(), got.end());
        CHECK(got == oracle);
        ++compared;
      }
    }
  }
  CHECK(compared == 63 * 15);
}

TEST_CASE("mpc feature loss examples") {
  std::mt19937_64 rng(6);
  const Image f0 = extract_features(random_rgb(8, 8, rng, 0.0, 1.0));
  Image opposite = f0;
  for (auto& v : opposite.data) v = -v;
  std::vector<WarpedMap> same{warped_copy(f0), warped_copy(f0), warped_copy(f0)};
  CHECK(mpc_feature_loss(f0, same, 2, {}).value == 0.0);

  // One fully occluded source (distance 1) and two consistent ones.
  std::vector<WarpedMap> occl{warped_copy(f0), warped_copy(opposite), warped_copy(f0)};
  const MpcResult k2 = mpc_feature_loss(f0, occl, 2, {});
  const MpcResult k3 = mpc_feature_loss(f0, occl, 3, {});
  CHECK(std::abs(k2.value) <= 1e-12);
  CHECK(k3.value == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  CHECK(k2.pixels == 64);
  for (size_t p = 0; p < 64; ++p) {
    CHECK(k2.selection.index(p, 0) != 1);
    CHECK(k2.selection.index(p, 1) != 1);
  }

  // Pixels with no valid source contribute nothing.
  std::vector<WarpedMap> none{warped_copy(opposite, false)};
  const MpcResult empty = mpc_feature_loss(f0, none, 1, {});
  CHECK(empty.value == 0.0);
  CHECK(empty.pixels == 0);

  Mask include(8, 8);
  include.set(3, 3, true);
  CHECK(mpc_feature_loss(f0, occl, 3, include).pixels == 1);
}

TEST_CASE("mpc loss with fewer selected views never exceeds the loss with more") {
  std::mt19937_64 rng(7);
  std::bernoulli_distribution valid(0.8);
  for (int trial = 0; trial < 4; ++trial) {
    const Image f0 = extract_features(random_rgb(12, 12, rng, 0.0, 1.0));
    std::vector<WarpedMap> w;
    for (int j = 0; j < 5; ++j) {
      w.push_back(warped_copy(extract_features(random_rgb(12, 12, rng, 0.0, 1.0))));
      for (auto& m : w.back().mask.data) m = valid(rng);
    }
    double prev = -1.0;
    for (int k = 1; k <= 5; ++k) {
      const double v = mpc_feature_loss(f0, w, k, {}).value;
      CHECK(v >= prev);
      prev = v;
    }
  }
}

TEST_CASE("mpc loss is small at ground-truth depth on a harness scene") {
  const SceneSpec scene = make_scene("plane3", 0);
  const Dataset ds = generate_dataset("plane3", 3, 0);
  for (const auto& ref : ds.train) {
    const Image f0 = extract_features(ref.rgb);
    std::vector<WarpedMap> warped;
    for (const auto& src : ds.train) {
      if (src.id == ref.id) continue;
      const CameraPose T = relative_transform(ref.pose, src.pose);
      WarpedMap w = inverse_warp(extract_features(src.rgb), ref.depth, ref.K, T);
      const Mask cov = icogs::testing::erode(covisibility_mask(scene, ref.K, ref.pose, src.pose), 2);
      w.mask = icogs::testing::mask_and(w.mask, cov);
      warped.push_back(std::move(w));
    }
    const MpcResult r = mpc_feature_loss(f0, warped, 2, {});
    CHECK(r.pixels > 500);
    CHECK(r.value <= 0.02);
  }
}

TEST_CASE("smoothness examples") {
  Image ramp(16, 12, 1), img_flat(16, 12, 3, 0.4), img_ramp(16, 12, 3);
  for (int y = 0; y < 12; ++y)
    for (int x = 0; x < 16; ++x) {
      ramp.at(x, y) = x;
      for (int c = 0; c < 3; ++c) img_ramp.at(x, y, c) = x;
    }
  CHECK(edge_aware_smoothness(Image(16, 12, 1, 2.5), img_ramp).value == 0.0);
  CHECK(edge_aware_smoothness(ramp, img_flat).value == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(edge_aware_smoothness(ramp, img_ramp).value == doctest::Approx(std::exp(-1.0)).epsilon(1e-14));
  CHECK(edge_aware_smoothness(ramp, img_ramp, 0.0).value == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(edge_aware_smoothness(ramp, img_flat).pixels == 15 * 11);
  CHECK_THROWS_AS(edge_aware_smoothness(ramp, Image(15, 12, 3)), ContractError);
}

TEST_CASE("smoothness is zero exactly when the depth gradient vanishes") {
  std::mt19937_64 rng(8);
  const Image img = random_rgb(10, 9, rng, 0.0, 1.0);
  const Image flat(10, 9, 1, 1.7);
  CHECK(edge_aware_smoothness(flat, img).value == 0.0);
  std::uniform_int_distribution<int> ux(0, 9), uy(0, 8);
  for (int trial = 0; trial < 50; ++trial) {
    Image d = flat;
    d.at(ux(rng), uy(rng)) += 1e-3;
    CHECK(edge_aware_smoothness(d, img).value > 0.0);
  }
}

TEST_CASE("alpha mask threshold") {
  Image a(3, 1, 1);
  a.data = {0.49, 0.5, 0.9};
  const Mask m = alpha_mask(a);
  CHECK_FALSE(m.at(0, 0));
  CHECK(m.at(1, 0));
  CHECK(m.at(2, 0));
}

TEST_CASE("mpc and smoothness depth gradients match finite differences") {
  for (uint64_t seed : {1, 2}) {
    const auto m = icogs::testing::check_mpc_gradients(150, seed);
    INFO(m.first_failure);
    CHECK(m.ok());
    CHECK(m.nontrivial > 50);
    const auto s = icogs::testing::check_smoothness_gradients(150, seed);
    INFO(s.first_failure);
    CHECK(s.ok());
    CHECK(s.nontrivial > 50);
  }
}
