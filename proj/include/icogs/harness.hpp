#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "icogs/appearance.hpp"
#include "icogs/gaussian_cloud.hpp"
#include "icogs/geometry.hpp"
#include "icogs/image.hpp"

namespace icogs {

enum class TextureKind { kChecker, kValueNoise, kRamp };

/// Procedural albedo on a primitive's (u, v) parameterization.
struct Texture {
  TextureKind kind = TextureKind::kChecker;
  Vec3 base = Vec3(0.5, 0.5, 0.5);
  Vec3 tint = Vec3(1.0, 1.0, 1.0); // second color direction for ramps / checker sign
  double contrast = 0.5;
  double scale = 4.0;
  uint64_t seed = 0;

  Vec3 eval(double u, double v) const;
};

enum class PrimitiveKind { kPlane, kSphere, kBox };

struct Primitive {
  PrimitiveKind kind = PrimitiveKind::kPlane;
  Vec3 center = Vec3::Zero();
  // plane: rectangle spanned by unit axes with half extents
  Vec3 axis_u = Vec3::UnitX();
  Vec3 axis_v = Vec3::UnitY();
  double half_u = 1.0;
  double half_v = 1.0;
  // sphere
  double radius = 1.0;
  // axis-aligned box
  Vec3 half_size = Vec3::Ones();
  Texture texture;

  static Primitive plane(const Vec3& center, const Vec3& axis_u, const Vec3& axis_v, double half_u, double half_v,
                         const Texture& t);
  static Primitive sphere(const Vec3& center, double radius, const Texture& t);
  static Primitive box(const Vec3& center, const Vec3& half_size, const Texture& t);
};

/// Directional Lambertian light plus a per-view exposure (gain, offset). Off by
/// default so that ground truth is exactly photo-consistent.
struct Lighting {
  bool enabled = false;
  Vec3 direction = Vec3(0.3, -0.5, 1.0).normalized(); // direction light travels
  double ambient = 0.4;
  double gain_spread = 0.25;
  double offset_spread = 0.08;
};

struct SceneSpec {
  std::vector<Primitive> primitives;
  Vec3 background = Vec3::Zero();
  BoundingSphere bounds;
  Lighting lighting;
  uint64_t seed = 0;
};

struct Hit {
  double t = 0.0; // ray parameter; equals camera z when dir has unit camera z
  int id = -1;
  Vec3 point = Vec3::Zero();
  Vec3 normal = Vec3::Zero();
  double u = 0.0, v = 0.0;
};

/// Nearest hit with t > t_min along origin + t * dir.
std::optional<Hit> intersect_scene(const SceneSpec& scene, const Vec3& origin, const Vec3& dir, double t_min = 1e-9);

struct GroundTruthView {
  Image rgb;
  Image depth;           // camera z of the first hit, 0 on misses
  std::vector<int> ids;  // primitive id, -1 on misses
};

/// Ray traces pixel centers. `view_index` selects the exposure when lighting is on.
GroundTruthView raytrace_view(const SceneSpec& scene, const CameraIntrinsics& K, const CameraPose& pose,
                              int view_index = 0);

/// True where the reference hit point is in-bounds and unoccluded in the source view.
Mask covisibility_mask(const SceneSpec& scene, const CameraIntrinsics& K, const CameraPose& pose_ref,
                       const CameraPose& pose_src);

// ---- datasets -------------------------------------------------------------

struct View {
  int id = 0;
  CameraIntrinsics K;
  CameraPose pose;
  Image rgb;
  Image depth; // empty when unknown
};

struct Dataset {
  std::vector<View> train;
  std::vector<View> test;
  std::optional<SceneSpec> scene; // present for generated datasets
};

/// Names accepted by make_scene / generate_dataset.
std::vector<std::string> scene_presets();
SceneSpec make_scene(const std::string& preset, uint64_t seed);
/// Shared intrinsics for an image of `size` x `size` pixels.
CameraIntrinsics preset_intrinsics(int size);

struct Rig {
  std::vector<CameraPose> train;
  std::vector<CameraPose> test;
};
/// Camera layout for a preset: `n_train` training poses and as many test poses.
Rig make_rig(const std::string& preset, int n_train);

struct DatasetOptions {
  int image_size = 64;
  bool lighting = false;
};

/// Throws ConfigError for unknown presets or n_views < 2.
Dataset generate_dataset(const std::string& preset, int n_views, uint64_t seed, const DatasetOptions& opt = {});

// ---- initialization ---------------------------------------------------------

/// Lifts `n_points` pixels with valid depth (uniform over views and pixels) to
/// world space, adds isotropic position noise, and uses the mean
/// nearest-neighbour distance as the initial scale.
GaussianCloud init_cloud(const std::vector<View>& views, size_t n_points, double noise_sigma, uint64_t seed);

/// Same as init_cloud, but every point is placed at a depth drawn uniformly
/// from [depth_min, depth_max] along its pixel ray (depth maps not needed).
GaussianCloud init_cloud_random_depth(const std::vector<View>& views, size_t n_points, double depth_min,
                                      double depth_max, uint64_t seed);

// ---- metrics ----------------------------------------------------------------

/// 10 log10(1 / MSE) over all values, capped at 99 dB when MSE < 1e-10.
double psnr(const Image& a, const Image& b);

struct SsimResult {
  double value = 0.0;
  Image d_a; // d value / d a (filled only when requested)
};

/// Mean SSIM over pixels and channels; 11x11 Gaussian window (sigma 1.5),
/// K1 = 0.01, K2 = 0.03, dynamic range 1. The window is renormalized where it
/// overlaps the border.
double ssim(const Image& a, const Image& b);
SsimResult ssim_with_grad(const Image& a, const Image& b);

/// Mean |a - b| over pixels where `gt` > 0.
double mean_abs_depth_error(const Image& depth, const Image& gt);

} // namespace icogs
