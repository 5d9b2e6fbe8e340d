#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "icogs/appearance.hpp"
#include "icogs/gaussian_cloud.hpp"
#include "icogs/harness.hpp"
#include "icogs/renderer.hpp"

namespace icogs {

struct LearningRates {
  double position = 1.6e-4;       // multiplied by the scene extent
  double position_final = 1.6e-6; // exponential decay target, also extent-scaled
  double opacity = 5e-2;
  double scale = 5e-3;
  double rotation = 1e-3;
  double color = 2.5e-3;
};

struct TrainConfig {
  double lambda_mpc = 0.1;
  double lambda_smooth = 0.01;
  double lambda_app = 1.0;
  double lambda_consis = 0.0; // binocular term placeholder, always inactive
  double lambda_dssim = 0.2;

  int total_iters = 2000;
  int stage2_start = 800;
  int stage3_start = 1200;

  int k = 0; // 0 selects ceil((n-1)/2)
  int m = 0; // 0 selects ceil((n-1)/2)
  double tau_factor = 0.01;
  double alpha_edge = 1.0;
  double virtual_radius = 0.15; // fraction of the scene bounding-sphere radius
  int n_virtual = 1;
  /// false replaces every reliability mask with all-true (no cycle filtering).
  bool cycle_filter = true;

  LearningRates lr;
  uint64_t seed = 0;
  bool deterministic = true;
  int threads = 1;
  int log_every = 100;

  bool densify = false;
  int densify_every = 100;
  int densify_until = 1500;
  DensifyThresholds densify_thresholds;

  RenderOptions render;

  /// Throws ConfigError when an invariant fails.
  void validate() const;
};

struct LossBreakdown {
  double l_3dgs = 0.0;
  double l_consis = 0.0;
  double l_mpc = 0.0;
  double l_smooth = 0.0;
  double l_app = 0.0;
  double total = 0.0;
};

/// total = l_3dgs + lambda_consis*l_consis + lambda_mpc*l_mpc + lambda_smooth*l_smooth + lambda_app*l_app.
double recombine(const LossBreakdown& l, const TrainConfig& c);

struct ActiveLosses {
  bool base = true;
  bool mpc = false;
  bool smooth = false;
  bool app = false;

  bool operator==(const ActiveLosses&) const = default;
};

ActiveLosses curriculum_schedule(int iter, const TrainConfig& config);

/// (1 - lambda_dssim) * L1 + lambda_dssim * (1 - SSIM) / 2, with its gradient
/// with respect to `rendered`.
struct PhotometricLoss {
  double value = 0.0;
  Image d_rendered;
};
PhotometricLoss base_photometric_loss(const Image& rendered, const Image& target, double lambda_dssim);

/// Everything the loss needs besides the cloud: posed training images with
/// frozen features, and the scene extent.
struct TrainingSet {
  CameraIntrinsics K;
  std::vector<View> train;
  std::vector<View> test;
  std::vector<Image> features; // one per training view
  BoundingSphere bounds;

  /// Extracts features for each training view unless `features` is given.
  static TrainingSet from_dataset(const Dataset& ds, const BoundingSphere& bounds,
                                  std::vector<Image> features = {});
};

struct LossAndGradients {
  LossBreakdown losses;
  CloudGradients grads;
  ActiveLosses active;
  size_t virtual_pixels = 0;
};

/// Evaluates every active loss for iteration `iter` (reference view
/// iter mod n) and the summed parameter gradients. `rng` drives virtual pose
/// sampling only. Throws NumericError on a non-finite loss.
LossAndGradients total_loss_and_gradients(const GaussianCloud& cloud, const TrainingSet& data,
                                          const TrainConfig& config, int iter, std::mt19937_64& rng);

struct AdamState {
  int step = 0;
  CloudGradients m;
  CloudGradients v;
};

struct StepRates {
  double position, opacity, scale, rotation, color;
};

inline constexpr double kAdamBeta1 = 0.9;
inline constexpr double kAdamBeta2 = 0.999;
inline constexpr double kAdamEps = 1e-15;

/// One Adam update of every parameter class, followed by quaternion
/// renormalization and scale clamping.
void adam_step(GaussianCloud& cloud, const CloudGradients& grads, AdamState& state, const StepRates& rates);

/// Per-class learning rates at `iter`, with exponential position decay.
StepRates step_rates(const TrainConfig& config, double extent, int iter);

struct MetricsRow {
  int iter = 0;
  LossBreakdown losses;
  double psnr_train = 0.0;
  double psnr_test = 0.0;
  size_t n_gaussians = 0;
};

struct TrainResult {
  GaussianCloud cloud;
  std::vector<MetricsRow> metrics;
};

/// Optional per-iteration observer (iteration, losses after the step).
using TrainObserver = std::function<void(int, const LossAndGradients&)>;
/// Called with every logged metrics row as soon as it is computed.
using RowObserver = std::function<void(const MetricsRow&)>;

TrainResult train(const TrainingSet& data, GaussianCloud cloud, const TrainConfig& config,
                  const TrainObserver& observer = {}, const RowObserver& on_row = {});

/// Mean PSNR of clamped renders against the views' images.
double mean_psnr(const GaussianCloud& cloud, std::span<const View> views, const RenderOptions& opt = {});

/// The metrics.csv header line (no trailing newline).
std::string metrics_csv_header();
std::string metrics_csv_row(const MetricsRow& row);

} // namespace icogs
