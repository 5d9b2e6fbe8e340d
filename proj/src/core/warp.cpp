#include "icogs/warp.hpp"

#include <cmath>

namespace icogs {

namespace {

void require_depth_map(const Image& d, const CameraIntrinsics& K, const char* what) {
  if (d.channels != 1 || d.width != K.width || d.height != K.height)
    throw ContractError(std::string(what) + ": depth map does not match the camera image plane");
}

double sign(double x) { return (x > 0.0) - (x < 0.0); }

} // namespace

Projection warp_pixel(const CameraIntrinsics& K, const CameraPose& T, const Pixel& p, double d) {
  const Mat3& R = T.rotation;
  const Vec3& t = T.translation;
  const double du = p.u - K.cx, dv = p.v - K.cy;
  const double px = du * d, py = dv * d; // camera x, y scaled by the focal lengths
  const double nu = R(0, 0) * px + R(0, 1) * (K.fx / K.fy) * py + K.fx * (R(0, 2) * d + t.x());
  const double nv = R(1, 0) * (K.fy / K.fx) * px + R(1, 1) * py + K.fy * (R(1, 2) * d + t.y());
  const double z = R(2, 0) * px / K.fx + R(2, 1) * py / K.fy + R(2, 2) * d + t.z();
  Projection out;
  out.depth = z;
  if (!(z > kZNear)) return out;
  out.pixel = {p.u + (nu - du * z) / z, p.v + (nv - dv * z) / z};
  out.valid = std::isfinite(out.pixel.u) && std::isfinite(out.pixel.v);
  return out;
}

WarpField forward_warp_pixels(const Image& depth_ref, const CameraIntrinsics& K, const CameraPose& T) {
  K.validate();
  require_depth_map(depth_ref, K, "forward_warp_pixels");
  WarpField f;
  f.width = K.width;
  f.height = K.height;
  const size_t n = depth_ref.pixel_count();
  f.pixel.assign(n, Pixel{});
  f.depth.assign(n, 0.0);
  f.dpixel_ddepth.assign(2 * n, 0.0);
  f.valid = Mask(K.width, K.height);
  for (int y = 0; y < K.height; ++y) {
    for (int x = 0; x < K.width; ++x) {
      const size_t i = static_cast<size_t>(y) * K.width + x;
      const double d = depth_ref.data[i];
      if (!(d > 0.0)) continue;
      const Vec3 ray((x - K.cx) / K.fx, (y - K.cy) / K.fy, 1.0);
      const Vec3 xs = T.apply(d * ray);
      const Projection pr = warp_pixel(K, T, {double(x), double(y)}, d);
      f.pixel[i] = pr.pixel;
      f.depth[i] = pr.depth;
      if (!pr.valid) continue;
      f.valid.data[i] = 1;
      const Vec3 dxs = T.rotation * ray;
      const double z = xs.z();
      f.dpixel_ddepth[2 * i] = K.fx * (dxs.x() * z - xs.x() * dxs.z()) / (z * z);
      f.dpixel_ddepth[2 * i + 1] = K.fy * (dxs.y() * z - xs.y() * dxs.z()) / (z * z);
    }
  }
  return f;
}

WarpedMap inverse_warp(const Image& source, const Image& depth_ref, const CameraIntrinsics& K,
                       const CameraPose& T) {
  if (source.width != K.width || source.height != K.height)
    throw ContractError("inverse_warp: source does not match the camera image plane");
  const WarpField f = forward_warp_pixels(depth_ref, K, T);
  const int C = source.channels;
  WarpedMap out;
  out.values = Image(K.width, K.height, C);
  out.dvalues_ddepth = Image(K.width, K.height, C);
  out.mask = Mask(K.width, K.height);
  std::vector<double> value(C), jac(2 * static_cast<size_t>(C));
  for (size_t i = 0; i < depth_ref.pixel_count(); ++i) {
    if (!f.valid.data[i]) continue;
    if (!bilinear_sample_into(source, f.pixel[i], value, jac)) continue;
    out.mask.data[i] = 1;
    const double du = f.dpixel_ddepth[2 * i], dv = f.dpixel_ddepth[2 * i + 1];
    for (int c = 0; c < C; ++c) {
      out.values.data[i * C + c] = value[c];
      out.dvalues_ddepth.data[i * C + c] = jac[2 * c] * du + jac[2 * c + 1] * dv;
    }
  }
  return out;
}

Reprojection backward_reproject(const Image& depth_ref, const Image& depth_src, const CameraIntrinsics& K,
                                const CameraPose& T) {
  require_depth_map(depth_src, K, "backward_reproject");
  const WarpField f = forward_warp_pixels(depth_ref, K, T);
  const CameraPose T_inv = T.inverse();
  Reprojection r;
  r.pixel.assign(depth_ref.pixel_count(), Pixel{});
  r.depth = Image(K.width, K.height, 1);
  r.valid = Mask(K.width, K.height);
  double sampled = 0.0;
  for (size_t i = 0; i < depth_ref.pixel_count(); ++i) {
    if (!f.valid.data[i]) continue;
    if (!bilinear_sample_into(depth_src, f.pixel[i], {&sampled, 1}, {})) continue;
    if (!(sampled > 0.0)) continue;
    const Projection pr = warp_pixel(K, T_inv, f.pixel[i], sampled);
    if (!pr.valid) continue;
    r.pixel[i] = pr.pixel;
    r.depth.data[i] = pr.depth;
    r.valid.data[i] = 1;
  }
  return r;
}

MaskedL1 masked_l1(const Image& a, const Image& b, const Mask& mask) {
  if (!a.same_shape(b) || mask.width != a.width || mask.height != a.height)
    throw ContractError("masked_l1: shape mismatch");
  double sum = 0.0;
  size_t count = 0;
  for (size_t i = 0; i < a.pixel_count(); ++i) {
    if (!mask.data[i]) continue;
    double e = 0.0;
    for (int c = 0; c < a.channels; ++c) e += std::abs(a.data[i * a.channels + c] - b.data[i * a.channels + c]);
    sum += e / a.channels;
    ++count;
  }
  if (count == 0) return {0.0, true};
  return {sum / static_cast<double>(count), false};
}

Image masked_l1_grad(const Image& a, const Image& b, const Mask& mask) {
  if (!a.same_shape(b) || mask.width != a.width || mask.height != a.height)
    throw ContractError("masked_l1_grad: shape mismatch");
  Image g(a.width, a.height, a.channels);
  const size_t count = mask.count();
  if (count == 0) return g;
  const double scale = 1.0 / (static_cast<double>(count) * a.channels);
  for (size_t i = 0; i < a.pixel_count(); ++i) {
    if (!mask.data[i]) continue;
    for (int c = 0; c < a.channels; ++c) {
      const size_t k = i * a.channels + c;
      g.data[k] = scale * sign(a.data[k] - b.data[k]);
    }
  }
  return g;
}

} // namespace icogs
