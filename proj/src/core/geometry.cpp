#include "icogs/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace icogs {

void CameraIntrinsics::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0)) throw ContractError("intrinsics: focal lengths must be positive");
  if (width < 2 || height < 2) throw ContractError("intrinsics: image must be at least 2x2");
  if (!(cx >= 0.0 && cx < width && cy >= 0.0 && cy < height))
    throw ContractError("intrinsics: principal point outside the image");
}

CameraPose CameraPose::look_at(const Vec3& eye, const Vec3& target, const Vec3& up) {
  const Vec3 z = (target - eye).normalized();
  Vec3 x = z.cross(-up);
  if (x.norm() < 1e-12) throw DomainError("look_at: up vector parallel to viewing direction");
  x.normalize();
  const Vec3 y = z.cross(x);
  Mat3 r;
  r.row(0) = x.transpose();
  r.row(1) = y.transpose();
  r.row(2) = z.transpose();
  return from_center(r, eye);
}

CameraPose CameraPose::from_center(const Mat3& rotation, const Vec3& center) {
  CameraPose p;
  p.rotation = rotation;
  p.translation = -rotation * center;
  return p;
}

CameraPose CameraPose::inverse() const {
  CameraPose p;
  p.rotation = rotation.transpose();
  p.translation = -(rotation.transpose() * translation);
  return p;
}

CameraPose CameraPose::compose(const CameraPose& other) const {
  CameraPose p;
  p.rotation = rotation * other.rotation;
  p.translation = rotation * other.translation + translation;
  return p;
}

void CameraPose::validate() const {
  const Mat3 e = rotation.transpose() * rotation - Mat3::Identity();
  if (e.cwiseAbs().maxCoeff() > 1e-9) throw ContractError("pose: rotation is not orthonormal");
  if (rotation.determinant() < 0.0) throw ContractError("pose: rotation has negative determinant");
  if (!translation.allFinite()) throw ContractError("pose: non-finite translation");
}

Vec3 backproject(const CameraIntrinsics& K, const Pixel& p, double d) {
  if (!(d > 0.0)) throw DomainError("backproject: depth must be positive, got " + std::to_string(d));
  if (!std::isfinite(p.u) || !std::isfinite(p.v)) throw DomainError("backproject: non-finite pixel");
  return {(p.u - K.cx) / K.fx * d, (p.v - K.cy) / K.fy * d, d};
}

Projection project(const CameraIntrinsics& K, const Vec3& x, double z_near) {
  Projection out;
  out.depth = x.z();
  if (!(x.z() > z_near)) return out;
  out.pixel = {K.fx * x.x() / x.z() + K.cx, K.fy * x.y() / x.z() + K.cy};
  out.valid = std::isfinite(out.pixel.u) && std::isfinite(out.pixel.v);
  return out;
}

CameraPose relative_transform(const CameraPose& pose_ref, const CameraPose& pose_src) {
  return pose_src.compose(pose_ref.inverse());
}

bool bilinear_sample_into(const Image& map, const Pixel& p, std::span<double> value,
                          std::span<double> jacobian) {
  const int C = map.channels;
  const bool inside = map.width >= 2 && map.height >= 2 && p.u >= 0.0 && p.v >= 0.0 &&
                      p.u <= map.width - 1 && p.v <= map.height - 1;
  if (!inside) {
    std::fill(value.begin(), value.end(), 0.0);
    std::fill(jacobian.begin(), jacobian.end(), 0.0);
    return false;
  }
  const int x0 = std::min(static_cast<int>(std::floor(p.u)), map.width - 2);
  const int y0 = std::min(static_cast<int>(std::floor(p.v)), map.height - 2);
  const double ax = p.u - x0;
  const double ay = p.v - y0;
  const double* v00 = &map.data[map.index(x0, y0)];
  const double* v10 = v00 + C;
  const double* v01 = &map.data[map.index(x0, y0 + 1)];
  const double* v11 = v01 + C;
  for (int c = 0; c < C; ++c) {
    // Convex-weight form: exact at integer coordinates, including the last row/column.
    const double top = (1.0 - ax) * v00[c] + ax * v10[c];
    const double bottom = (1.0 - ax) * v01[c] + ax * v11[c];
    value[c] = (1.0 - ay) * top + ay * bottom;
    if (!jacobian.empty()) {
      jacobian[2 * c] = (1.0 - ay) * (v10[c] - v00[c]) + ay * (v11[c] - v01[c]);
      jacobian[2 * c + 1] = bottom - top;
    }
  }
  return true;
}

BilinearSample bilinear_sample(const Image& map, const Pixel& p) {
  if (map.empty()) throw ContractError("bilinear_sample: empty map");
  BilinearSample s;
  s.value.assign(map.channels, 0.0);
  s.jacobian.assign(2 * static_cast<size_t>(map.channels), 0.0);
  s.in_bounds = bilinear_sample_into(map, p, s.value, s.jacobian);
  return s;
}

Mat3 quaternion_to_matrix(const Vec4& q) {
  const double w = q[0], x = q[1], y = q[2], z = q[3];
  Mat3 r;
  r << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
      2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
      2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
  return r;
}

} // namespace icogs
