#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "icogs/config.hpp"
#include "icogs/gaussian_cloud.hpp"
#include "icogs/harness.hpp"
#include "icogs/io.hpp"
#include "icogs/renderer.hpp"

namespace icogs {

using LogSink = std::function<void(const std::string&)>;

struct GenOptions {
  std::string preset;
  int views = 3;
  uint64_t seed = 0;
  int image_size = 64;
  bool lighting = false;
  std::string out_dir;
};

/// Generates a preset dataset and writes it to `out_dir`.
void cmd_gen(const GenOptions& opt);

struct ViewMetrics {
  int id = 0;
  double psnr = 0.0;
  double ssim = 0.0;
  bool has_depth = false;
  double depth_error = 0.0;
};

struct EvalReport {
  std::vector<ViewMetrics> per_view;
  double mean_psnr = 0.0;
  double mean_ssim = 0.0;
  bool has_depth = false;
  double mean_depth_error = 0.0; // over views with ground-truth depth
};

/// Renders every test view and scores it. Throws ConfigError when the views do
/// not share the checkpoint's expected image size.
EvalReport evaluate(const GaussianCloud& cloud, const std::vector<View>& views, const RenderOptions& opt = {});

/// {"per_view": [...], "mean": {...}}
std::string eval_report_json(const EvalReport& report);
std::string eval_report_text(const EvalReport& report);

/// Evaluates a checkpoint against a dataset's test split.
EvalReport cmd_eval(const std::string& checkpoint, const std::string& dataset_dir, int threads = 1);

/// Builds the initial cloud for a run from the dataset's training views.
GaussianCloud initial_cloud(const RunConfig& config, const DatasetOnDisk& data, const BoundingSphere& bounds);

/// Trains from `config` and writes model.icogs, metrics.csv, config.json,
/// renders/, depth/ and summary.json into config.output. Returns summary.json.
std::string cmd_train(const RunConfig& config, const LogSink& log = {});

struct WarpDebugOptions {
  std::string dataset;
  int ref_id = 0;
  int src_id = 1;
  std::string depth_source = "gt"; // "gt" or "checkpoint"
  std::string checkpoint;
  std::string out_dir;
  double tau_factor = 0.01;
  int threads = 1;
};

struct WarpDebugReport {
  size_t pixels = 0;
  size_t valid = 0;       // pixels with a valid forward warp
  size_t cycle_valid = 0; // pixels with a valid round trip
  size_t reliable = 0;
  double tau_d = 0.0;
  double max_normalized_error = 0.0; // over cycle-valid pixels
  double warped_l1 = 0.0;            // mean |I_src->ref - I_ref| over valid pixels
};

/// Writes warped_{src}_to_{ref}.png, validity_*.png, cycle_error_*.png (e/tau_d
/// clamped to [0, 1]) with the unclamped map as cycle_error_*.icod, and
/// reliability_*.png.
WarpDebugReport cmd_warp_debug(const WarpDebugOptions& opt);
std::string warp_debug_json(const WarpDebugReport& report);

/// Renders every view of a dataset into out_dir/{train,test}_{id}.png plus depth.
void cmd_render(const std::string& checkpoint, const std::string& dataset_dir, const std::string& out_dir,
                int threads = 1);

} // namespace icogs
