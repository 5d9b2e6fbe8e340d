#include "icogs/appearance.hpp"

#include <algorithm>
#include <cmath>

namespace icogs {

DepthErrorMap depth_error(const Image& depth_ref, const Image& depth_src, const CameraIntrinsics& K,
                          const CameraPose& ref_to_src) {
  const Reprojection r = backward_reproject(depth_ref, depth_src, K, ref_to_src);
  DepthErrorMap e;
  e.error = Image(K.width, K.height, 1);
  e.valid = r.valid;
  for (size_t i = 0; i < depth_ref.pixel_count(); ++i)
    if (r.valid.data[i]) e.error.data[i] = std::abs(depth_ref.data[i] - r.depth.data[i]);
  return e;
}

ReliabilityMask reliability_mask(std::span<const DepthErrorMap> errors, const Image& depth_ref,
                                 const Image& alpha_ref, int min_views, double tau_factor) {
  if (errors.empty()) throw ContractError("reliability_mask: need at least two views");
  if (min_views < 1) throw ContractError("reliability_mask: m must be positive");
  ReliabilityMask r;
  r.min_views = min_views;
  double max_depth = 0.0;
  for (size_t i = 0; i < depth_ref.pixel_count(); ++i)
    if (alpha_ref.empty() || alpha_ref.data[i] >= 0.5) max_depth = std::max(max_depth, depth_ref.data[i]);
  r.tau_d = tau_factor * max_depth;
  r.mask = Mask(depth_ref.width, depth_ref.height);
  r.counts.assign(depth_ref.pixel_count(), 0);
  for (const auto& e : errors) {
    if (!e.error.same_size(depth_ref.width, depth_ref.height))
      throw ContractError("reliability_mask: error map size mismatch");
    for (size_t i = 0; i < depth_ref.pixel_count(); ++i)
      if (e.valid.data[i] && e.error.data[i] < r.tau_d) ++r.counts[i];
  }
  for (size_t i = 0; i < depth_ref.pixel_count(); ++i) r.mask.data[i] = r.counts[i] >= min_views;
  return r;
}

CameraPose sample_virtual_pose(std::span<const CameraPose> train, double radius, const BoundingSphere& scene,
                               const CameraIntrinsics& K, std::mt19937_64& rng) {
  if (train.empty()) throw ContractError("sample_virtual_pose: need at least one training pose");
  if (radius < 0.0) throw ContractError("sample_virtual_pose: radius must be non-negative");
  std::uniform_int_distribution<size_t> pick(0, train.size() - 1);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  double r = radius;
  for (int round = 0; round < 24; ++round) {
    for (int attempt = 0; attempt < 32; ++attempt) {
      const CameraPose& anchor = train[pick(rng)];
      Vec3 offset;
      do {
        offset = Vec3(unit(rng), unit(rng), unit(rng));
      } while (offset.squaredNorm() > 1.0);
      const CameraPose pose = CameraPose::from_center(anchor.rotation, anchor.center() + r * offset);
      const Projection pr = project(K, pose.apply(scene.center));
      if (pr.valid && pr.pixel.u >= 0 && pr.pixel.v >= 0 && pr.pixel.u <= K.width - 1 &&
          pr.pixel.v <= K.height - 1)
        return pose;
    }
    r *= 0.5;
  }
  return train[pick(rng)];
}

VirtualView synthesize_virtual_view(std::span<const SynthesisSource> sources, const CameraPose& pose,
                                    const CameraIntrinsics& K) {
  K.validate();
  VirtualView v;
  v.pose = pose;
  v.image = Image(K.width, K.height, 3);
  v.mask = Mask(K.width, K.height);
  v.zbuffer = Image(K.width, K.height, 1);
  v.source_view.assign(static_cast<size_t>(K.width) * K.height, -1);
  for (size_t s = 0; s < sources.size(); ++s) {
    const SynthesisSource& src = sources[s];
    if (!src.image || !src.depth || !src.reliable) throw ContractError("synthesize_virtual_view: incomplete source");
    const CameraPose to_virtual = relative_transform(src.pose, pose);
    for (int y = 0; y < K.height; ++y) {
      for (int x = 0; x < K.width; ++x) {
        const size_t i = static_cast<size_t>(y) * K.width + x;
        if (!src.reliable->data[i]) continue;
        if (src.alpha && src.alpha->data[i] < 0.5) continue;
        const double d = src.depth->data[i];
        if (!(d > 0.0)) continue;
        const Projection pr = warp_pixel(K, to_virtual, {double(x), double(y)}, d);
        if (!pr.valid) continue;
        const double u = std::floor(pr.pixel.u + 0.5), w = std::floor(pr.pixel.v + 0.5);
        if (u < 0 || w < 0 || u > K.width - 1 || w > K.height - 1) continue;
        const size_t o = static_cast<size_t>(w) * K.width + static_cast<size_t>(u);
        const double z = pr.depth;
        if (v.mask.data[o] && !(z < v.zbuffer.data[o] - 1e-6)) continue;
        v.mask.data[o] = 1;
        v.zbuffer.data[o] = z;
        v.source_view[o] = static_cast<int>(s);
        for (int c = 0; c < 3; ++c) v.image.data[3 * o + c] = src.image->data[3 * i + c];
      }
    }
  }
  return v;
}

AppearanceLoss virtual_view_loss(const Image& target, const Mask& mask, const Image& rendered) {
  AppearanceLoss l;
  const MaskedL1 m = masked_l1(rendered, target, mask);
  l.value = m.value;
  l.empty = m.empty;
  l.d_rgb = masked_l1_grad(rendered, target, mask);
  return l;
}

} // namespace icogs
