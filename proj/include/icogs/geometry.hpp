#pragma once

#include <Eigen/Dense>
#include <span>

#include "icogs/common.hpp"
#include "icogs/image.hpp"

namespace icogs {

/// Pinhole intrinsics. Pixel (0,0) has its center at continuous coordinate (0,0).
struct CameraIntrinsics {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 2;
  int height = 2;

  /// Throws ContractError when any invariant fails.
  void validate() const;
  bool operator==(const CameraIntrinsics&) const = default;
};

/// World-to-camera rigid transform: X_cam = rotation * X_world + translation.
struct CameraPose {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  static CameraPose identity() { return {}; }
  /// Pose of a camera at `eye` looking at `target`; camera y axis points along
  /// -up projected onto the image plane (image v grows downward).
  static CameraPose look_at(const Vec3& eye, const Vec3& target, const Vec3& up);
  /// Pose with the given rotation whose camera center sits at `center`.
  static CameraPose from_center(const Mat3& rotation, const Vec3& center);

  Vec3 apply(const Vec3& x) const { return rotation * x + translation; }
  CameraPose inverse() const;
  /// (this ∘ other)(x) = this(other(x)).
  CameraPose compose(const CameraPose& other) const;
  Vec3 center() const { return -rotation.transpose() * translation; }

  void validate() const;
};

struct Pixel {
  double u = 0.0;
  double v = 0.0;
};

struct Projection {
  Pixel pixel;
  double depth = 0.0;
  bool valid = false;
};

/// Camera-frame point at depth d along the ray through p. Throws DomainError for d <= 0.
Vec3 backproject(const CameraIntrinsics& K, const Pixel& p, double d);

/// Perspective projection; invalid when X.z <= z_near.
Projection project(const CameraIntrinsics& K, const Vec3& x, double z_near = kZNear);

/// T such that T(X in ref camera frame) = X in src camera frame.
CameraPose relative_transform(const CameraPose& pose_ref, const CameraPose& pose_src);

/// Result of bilinear sampling at a continuous pixel. `jacobian` is C x 2,
/// column 0 = d/du, column 1 = d/dv, stored row-major (c*2 + {0,1}).
struct BilinearSample {
  std::vector<double> value;
  std::vector<double> jacobian;
  bool in_bounds = false;
};

/// Samples the four neighbours of p. Out-of-grid neighbours make the sample
/// invalid; there is no edge clamping. Samples exactly on the last row/column
/// are valid and use the cell to their upper-left.
BilinearSample bilinear_sample(const Image& map, const Pixel& p);

/// Allocation-free variant used in hot loops. `value` has C entries and
/// `jacobian` (optional, may be empty) has 2C. Returns in_bounds; outputs are
/// zeroed when false.
bool bilinear_sample_into(const Image& map, const Pixel& p, std::span<double> value,
                          std::span<double> jacobian);

/// Unit quaternion (w, x, y, z) to rotation matrix.
Mat3 quaternion_to_matrix(const Vec4& q);

} // namespace icogs
