#pragma once

#include <vector>

#include "icogs/geometry.hpp"
#include "icogs/image.hpp"

namespace icogs {

/// Per-pixel forward correspondences of a reference depth map in a source camera.
struct WarpField {
  int width = 0;
  int height = 0;
  std::vector<Pixel> pixel;   // p'
  std::vector<double> depth;  // z' in the source frame
  /// d p' / d D_ref, two entries per pixel (du, dv).
  std::vector<double> dpixel_ddepth;
  Mask valid;
};

/// Reference-frame reconstruction of a source map.
struct WarpedMap {
  Image values;           // zero where mask is false
  Mask mask;
  /// d values / d D_ref, same shape as `values`; zero where mask is false.
  Image dvalues_ddepth;
};

struct Reprojection {
  std::vector<Pixel> pixel;   // p''
  Image depth;                // D~ (reference-frame z of the round-tripped point)
  Mask valid;
};

struct MaskedL1 {
  double value = 0.0;
  bool empty = false;
};

/// p' = K T (d K^-1 p) for one pixel, evaluated as p plus a displacement so
/// that the identity transform returns p exactly. Invalid when z' <= z_near.
Projection warp_pixel(const CameraIntrinsics& K, const CameraPose& T, const Pixel& p, double d);

/// p' = K T (D_ref(p) K^-1 p) for every pixel p of the reference view.
WarpField forward_warp_pixels(const Image& depth_ref, const CameraIntrinsics& K, const CameraPose& ref_to_src);

/// Samples `source` at the forward correspondences of `depth_ref`.
WarpedMap inverse_warp(const Image& source, const Image& depth_ref, const CameraIntrinsics& K,
                       const CameraPose& ref_to_src);

/// Forward-backward round trip of every reference pixel through the source depth.
Reprojection backward_reproject(const Image& depth_ref, const Image& depth_src, const CameraIntrinsics& K,
                                const CameraPose& ref_to_src);

/// Mean over valid pixels of the channel-mean |a - b|.
MaskedL1 masked_l1(const Image& a, const Image& b, const Mask& mask);

/// Gradient of masked_l1 with respect to `a` (sign convention: d|a-b|/da, 0 at a == b).
Image masked_l1_grad(const Image& a, const Image& b, const Mask& mask);

} // namespace icogs
