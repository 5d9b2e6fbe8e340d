#pragma once

#include <cstddef>
#include <memory>
#include <vector>

#include "icogs/gaussian_cloud.hpp"
#include "icogs/geometry.hpp"
#include "icogs/image.hpp"

namespace icogs {

inline constexpr double kTransmittanceCutoff = 1e-4;
inline constexpr double kMaxBlendOpacity = 0.999;
inline constexpr double kTruncationPower = 4.5; // 0.5 * 3^2
inline constexpr double kMinCovDeterminant = 1e-12;

struct RenderOptions {
  /// Added to the diagonal of every screen-space covariance (pixels^2).
  double kernel_dilation = 0.3;
  int threads = 1;
};

struct RenderStats {
  size_t culled = 0;     // behind z_near
  size_t degenerate = 0; // screen covariance determinant below kMinCovDeterminant
  size_t offscreen = 0;
  size_t visible = 0;
};

/// Forward-pass state that lets render_backward skip re-rasterizing.
struct RenderCache;

struct RenderOutput {
  Image rgb;   // H x W x 3, unclamped
  Image depth; // H x W, alpha-blended camera z
  Image alpha; // H x W
  RenderStats stats;
  std::shared_ptr<const RenderCache> cache;
};

/// dL/d(output) for each render output. An empty image means "all zeros".
struct RenderUpstream {
  Image d_rgb;
  Image d_depth;
  Image d_alpha;
};

/// R(q) diag(exp(log_scale))^2 R(q)^T; q is normalized internally.
Mat3 covariance_3d(const Vec3& log_scale, const Vec4& q);

/// Degree-0/1 SH color of Gaussian i seen along unit direction `dir`.
Vec3 eval_sh_color(const GaussianCloud& cloud, size_t i, const Vec3& dir);

RenderOutput render(const GaussianCloud& cloud, const CameraIntrinsics& K, const CameraPose& pose,
                    const RenderOptions& options = {});

/// Gradients of a scalar loss with respect to every cloud parameter, given the
/// loss's gradient with respect to the render outputs. Throws ContractError if
/// an upstream image does not match the camera size.
CloudGradients render_backward(const GaussianCloud& cloud, const CameraIntrinsics& K,
                               const CameraPose& pose, const RenderUpstream& upstream,
                               const RenderOptions& options = {});

/// Same, reusing the state of a previous render() of this exact cloud.
CloudGradients render_backward(const GaussianCloud& cloud, const RenderOutput& forward,
                               const RenderUpstream& upstream, const RenderOptions& options = {});

/// Running mean of per-Gaussian positional gradient norms.
struct GradStats {
  std::vector<double> sum;
  std::vector<int> count;

  void reset(size_t n);
  void accumulate(const CloudGradients& g);
  double mean(size_t i) const { return count[i] > 0 ? sum[i] / count[i] : 0.0; }
};

struct DensifyThresholds {
  double grad = 2e-4;      // clone when mean positional gradient exceeds this
  double scale = 0.5;      // split when the largest scale exceeds this
  double min_opacity = 0.005;
};

GaussianCloud densify_and_prune(const GaussianCloud& cloud, const GradStats& stats,
                                const DensifyThresholds& thresholds);

} // namespace icogs
