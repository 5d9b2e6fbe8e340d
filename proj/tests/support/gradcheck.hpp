#pragma once

#include <cstdint>
#include <random>
#include <string>

#include "icogs/gaussian_cloud.hpp"
#include "icogs/geometry.hpp"
#include "icogs/image.hpp"

namespace icogs::testing {

/// Outcome of a batch of finite-difference probes.
struct FdReport {
  int probes = 0;
  int passed = 0;
  int nontrivial = 0; // probes whose numeric derivative exceeds 1e-4 in magnitude
  double worst_abs = 0.0;
  double worst_rel = 0.0;
  std::string first_failure;

  bool ok() const { return probes > 0 && passed == probes; }
  void merge(const FdReport& o);
};

/// |a - n| <= 1e-6 or |a - n| <= 1e-3 * max(|a|, |n|).
bool fd_close(double analytic, double numeric);

/// 32 x 32 camera at the origin looking down +z.
CameraIntrinsics small_intrinsics(int size = 32);

/// `n` Gaussians in front of the camera at depths in [1.5, 3], opacities
/// below the blend clamp, random rotations and SH.
GaussianCloud random_cloud(size_t n, std::mt19937_64& rng);

/// Smooth random field sum_k a_k sin(b_k u + c_k v + d_k) with `channels` channels.
Image smooth_image(int w, int h, int channels, std::mt19937_64& rng, double offset, double amplitude);

// Each check draws `probes` random probes from a seeded stream.

/// Loss = <W_rgb, rgb> + <W_d, depth> + <W_a, alpha>; probes are split evenly
/// across positions, rotations, scales, opacities and SH coefficients.
FdReport check_renderer_gradients(int probes, uint64_t seed);
/// Loss = masked_l1(inverse_warp(source, D_ref), I_ref); probes on D_ref.
FdReport check_warp_depth_gradients(int probes, uint64_t seed);
/// Top-k feature-cosine loss; probes on D_ref.
FdReport check_mpc_gradients(int probes, uint64_t seed);
/// Edge-aware smoothness; probes on D_ref.
FdReport check_smoothness_gradients(int probes, uint64_t seed);
/// Virtual-view loss against a fixed target; probes on cloud parameters.
FdReport check_virtual_view_gradients(int probes, uint64_t seed);
/// SSIM with respect to its first argument.
FdReport check_ssim_gradients(int probes, uint64_t seed);

} // namespace icogs::testing
