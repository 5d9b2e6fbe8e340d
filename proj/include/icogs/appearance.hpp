#pragma once

#include <random>
#include <span>
#include <vector>

#include "icogs/geometry.hpp"
#include "icogs/image.hpp"
#include "icogs/warp.hpp"

namespace icogs {

struct BoundingSphere {
  Vec3 center = Vec3::Zero();
  double radius = 1.0;
};

/// e(p) = |D_ref(p) - D~(p)|; invalid wherever either warp leg failed.
struct DepthErrorMap {
  Image error;
  Mask valid;
};

DepthErrorMap depth_error(const Image& depth_ref, const Image& depth_src, const CameraIntrinsics& K,
                          const CameraPose& ref_to_src);

struct ReliabilityMask {
  Mask mask;
  std::vector<int> counts; // consistent source views per pixel
  int min_views = 0;       // m
  double tau_d = 0.0;
};

/// A pixel is reliable when at least `min_views` sources have a valid error
/// below tau_d = tau_factor * max(D_ref). The maximum is taken over pixels with
/// alpha >= 0.5 (all pixels when `alpha_ref` is empty).
ReliabilityMask reliability_mask(std::span<const DepthErrorMap> errors, const Image& depth_ref,
                                 const Image& alpha_ref, int min_views, double tau_factor = 0.01);

/// Picks a training pose uniformly, moves its center by a uniform sample from
/// the radius-r ball and keeps its rotation. Samples whose camera cannot see
/// the scene sphere's center are redrawn (32 attempts, then r is halved).
CameraPose sample_virtual_pose(std::span<const CameraPose> train_poses, double radius,
                               const BoundingSphere& scene, const CameraIntrinsics& K, std::mt19937_64& rng);

/// One training view as seen by the virtual-view synthesizer.
struct SynthesisSource {
  const Image* image = nullptr;    // H x W x 3 training image
  const Image* depth = nullptr;    // rendered depth
  const Image* alpha = nullptr;    // rendered alpha (may be null: treated as 1)
  const Mask* reliable = nullptr;  // reliability mask
  CameraPose pose;
};

struct VirtualView {
  CameraPose pose;
  Image image;           // I_v, zero outside mask
  Mask mask;             // M_v
  Image zbuffer;         // winning z per pixel, 0 outside mask
  std::vector<int> source_view; // winning view per pixel, -1 outside mask
};

/// Forward-splats every reliable, opaque source pixel into `pose` with
/// nearest-pixel rounding and a z-buffer. Smaller z wins; candidates within
/// 1e-6 of the current winner keep the lower view index.
VirtualView synthesize_virtual_view(std::span<const SynthesisSource> sources, const CameraPose& pose,
                                    const CameraIntrinsics& K);

struct AppearanceLoss {
  double value = 0.0;
  bool empty = true;
  Image d_rgb; // dL/d(rendered)
};

/// Mean over M_v of the channel-mean |I_v - I_v^R|; gradient flows to the render only.
AppearanceLoss virtual_view_loss(const Image& target, const Mask& mask, const Image& rendered);

} // namespace icogs
