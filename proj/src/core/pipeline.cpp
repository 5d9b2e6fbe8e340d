#include "icogs/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <json.hpp>
#include <limits>

#include "icogs/appearance.hpp"
#include "icogs/rng.hpp"
#include "icogs/trainer.hpp"
#include "icogs/warp.hpp"

namespace icogs {

namespace {

using nlohmann::json;

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

void make_dirs(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("cannot create directory '" + dir.string() + "'");
}

fs::path sidecar_path(const fs::path& checkpoint) {
  fs::path p = checkpoint;
  p += ".json";
  return p;
}

void write_sidecar(const fs::path& checkpoint, const CameraIntrinsics& K) {
  const json j = {{"width", K.width}, {"height", K.height}};
  write_text(sidecar_path(checkpoint), j.dump(2) + "\n");
}

/// Image size recorded next to a checkpoint, if any.
std::optional<std::pair<int, int>> sidecar_size(const fs::path& checkpoint) {
  const fs::path p = sidecar_path(checkpoint);
  if (!fs::exists(p)) return std::nullopt;
  std::ifstream in(p);
  try {
    const json j = json::parse(in);
    return std::make_pair(j.at("width").get<int>(), j.at("height").get<int>());
  } catch (const json::exception& e) {
    throw ConfigError("malformed '" + p.string() + "': " + e.what());
  }
}

void check_compatible(const fs::path& checkpoint, const std::vector<View>& views) {
  const auto size = sidecar_size(checkpoint);
  if (!size) return;
  for (const auto& v : views)
    if (v.K.width != size->first || v.K.height != size->second)
      throw ConfigError("checkpoint '" + checkpoint.string() + "' was trained at " + std::to_string(size->first) +
                        "x" + std::to_string(size->second) + " but view " + std::to_string(v.id) + " is " +
                        std::to_string(v.K.width) + "x" + std::to_string(v.K.height));
}

GaussianCloud load_cloud(const std::string& path) {
  if (!fs::exists(path)) throw ConfigError("checkpoint '" + path + "' does not exist");
  return read_checkpoint(path);
}

const View* find_view(const Dataset& ds, int id) {
  for (const auto& v : ds.train)
    if (v.id == id) return &v;
  for (const auto& v : ds.test)
    if (v.id == id) return &v;
  return nullptr;
}

json view_json(const ViewMetrics& m) {
  json j = {{"id", m.id}, {"psnr", m.psnr}, {"ssim", m.ssim}};
  j["depth_error"] = m.has_depth ? json(m.depth_error) : json(nullptr);
  return j;
}

json report_json(const EvalReport& r) {
  json per = json::array();
  for (const auto& m : r.per_view) per.push_back(view_json(m));
  json mean = {{"psnr", r.mean_psnr}, {"ssim", r.mean_ssim}};
  mean["depth_error"] = r.has_depth ? json(r.mean_depth_error) : json(nullptr);
  return {{"per_view", per}, {"mean", mean}};
}

std::vector<Image> load_features(const std::string& dir, const std::vector<View>& views) {
  std::vector<Image> out;
  if (dir.empty()) return out;
  if (!fs::is_directory(dir)) throw ConfigError("features directory '" + dir + "' does not exist");
  for (const auto& v : views) {
    const fs::path p = fs::path(dir) / ("view_" + std::to_string(v.id) + ".icof");
    if (!fs::exists(p)) throw ConfigError("feature map '" + p.string() + "' does not exist");
    out.push_back(read_features(p));
  }
  return out;
}

} // namespace

void cmd_gen(const GenOptions& opt) {
  if (opt.out_dir.empty()) throw ConfigError("gen needs an output directory");
  if (opt.image_size < 8) throw ConfigError("image size must be at least 8");
  const Dataset ds = generate_dataset(opt.preset, opt.views, opt.seed, {opt.image_size, opt.lighting});
  save_dataset(opt.out_dir, ds, opt.preset);
}

EvalReport evaluate(const GaussianCloud& cloud, const std::vector<View>& views, const RenderOptions& opt) {
  EvalReport r;
  size_t n_depth = 0;
  for (const auto& v : views) {
    const RenderOutput out = render(cloud, v.K, v.pose, opt);
    const Image rgb = clamped01(out.rgb);
    ViewMetrics m;
    m.id = v.id;
    m.psnr = psnr(rgb, v.rgb);
    m.ssim = ssim(rgb, v.rgb);
    if (!v.depth.empty()) {
      m.has_depth = true;
      m.depth_error = mean_abs_depth_error(out.depth, v.depth);
      r.mean_depth_error += m.depth_error;
      ++n_depth;
    }
    r.mean_psnr += m.psnr;
    r.mean_ssim += m.ssim;
    r.per_view.push_back(m);
  }
  if (!views.empty()) {
    r.mean_psnr /= static_cast<double>(views.size());
    r.mean_ssim /= static_cast<double>(views.size());
  }
  if (n_depth > 0) {
    r.has_depth = true;
    r.mean_depth_error /= static_cast<double>(n_depth);
  }
  return r;
}

std::string eval_report_json(const EvalReport& report) { return report_json(report).dump(2); }

std::string eval_report_text(const EvalReport& r) {
  std::string s;
  char buf[160];
  for (const auto& m : r.per_view) {
    if (m.has_depth)
      std::snprintf(buf, sizeof buf, "view %3d  psnr %8.4f  ssim %.5f  depth_err %.6f\n", m.id, m.psnr, m.ssim,
                    m.depth_error);
    else
      std::snprintf(buf, sizeof buf, "view %3d  psnr %8.4f  ssim %.5f\n", m.id, m.psnr, m.ssim);
    s += buf;
  }
  if (r.has_depth)
    std::snprintf(buf, sizeof buf, "mean      psnr %8.4f  ssim %.5f  depth_err %.6f\n", r.mean_psnr, r.mean_ssim,
                  r.mean_depth_error);
  else
    std::snprintf(buf, sizeof buf, "mean      psnr %8.4f  ssim %.5f\n", r.mean_psnr, r.mean_ssim);
  return s + buf;
}

EvalReport cmd_eval(const std::string& checkpoint, const std::string& dataset_dir, int threads) {
  const DatasetOnDisk d = load_dataset(dataset_dir);
  check_compatible(checkpoint, d.dataset.test);
  const GaussianCloud cloud = load_cloud(checkpoint);
  RenderOptions opt;
  opt.threads = threads;
  return evaluate(cloud, d.dataset.test, opt);
}

GaussianCloud initial_cloud(const RunConfig& config, const DatasetOnDisk& data, const BoundingSphere& bounds) {
  const auto& views = data.dataset.train;
  const uint64_t seed = stream_seed(config.train.seed, "init");
  const size_t n = static_cast<size_t>(config.init.points);
  if (config.init.mode == InitMode::kPerturbed) {
    for (const auto& v : views)
      if (v.depth.empty())
        throw ConfigError("init.mode 'perturbed' needs depth maps for every training view (view " +
                          std::to_string(v.id) + " has none); use init.mode 'random_depth'");
    return init_cloud(views, n, config.init.noise, seed);
  }
  double lo = config.init.depth_min, hi = config.init.depth_max;
  if (lo <= 0.0 || hi <= 0.0) {
    double dmin = std::numeric_limits<double>::infinity(), dmax = 0.0;
    for (const auto& v : views)
      for (double z : v.depth.data)
        if (z > 0.0) {
          dmin = std::min(dmin, z);
          dmax = std::max(dmax, z);
        }
    if (dmax <= 0.0) {
      dmin = std::numeric_limits<double>::infinity();
      for (const auto& v : views) {
        const double zc = v.pose.apply(bounds.center).z();
        dmin = std::min(dmin, zc - bounds.radius);
        dmax = std::max(dmax, zc + bounds.radius);
      }
      dmin = std::max(dmin, 0.1 * bounds.radius);
    }
    if (lo <= 0.0) lo = dmin;
    if (hi <= 0.0) hi = dmax;
  }
  if (!(hi >= lo)) throw ConfigError("init.depth_max must be >= init.depth_min");
  return init_cloud_random_depth(views, n, lo, hi, seed);
}

std::string cmd_train(const RunConfig& config, const LogSink& log) {
  if (config.dataset.empty()) throw ConfigError("config key 'dataset' is empty; pass a dataset directory");
  if (!fs::is_directory(config.dataset))
    throw ConfigError("dataset directory '" + config.dataset + "' does not exist");
  const DatasetOnDisk d = load_dataset(config.dataset);
  if (d.dataset.train.size() < 2) throw ConfigError("dataset '" + config.dataset + "' has fewer than 2 training views");
  const CameraIntrinsics& K = d.dataset.train.front().K;
  if (config.image_size > 0 && (K.width != config.image_size || K.height != config.image_size))
    throw ConfigError("dataset images are " + std::to_string(K.width) + "x" + std::to_string(K.height) +
                      " but image_size is " + std::to_string(config.image_size));
  const BoundingSphere bounds = dataset_bounds(d);
  const TrainingSet data =
      TrainingSet::from_dataset(d.dataset, bounds, load_features(config.features, d.dataset.train));
  const GaussianCloud init = initial_cloud(config, d, bounds);

  const fs::path out = config.output;
  make_dirs(out);
  make_dirs(out / "renders");
  make_dirs(out / "depth");
  write_text(out / "config.json", dump_run_config(config) + "\n");

  RenderOptions ropt = config.train.render;
  ropt.threads = config.train.threads;
  const EvalReport before = evaluate(init, d.dataset.test, ropt);

  if (log) log("training " + std::to_string(init.size()) + " gaussians for " +
               std::to_string(config.train.total_iters) + " iterations");
  const TrainResult result = train(data, init, config.train, {}, [&](const MetricsRow& r) {
    if (!log) return;
    char buf[256];
    std::snprintf(buf, sizeof buf, "iter %6d  total %.6f  3dgs %.6f  mpc %.6f  smooth %.6f  app %.6f  psnr %.3f/%.3f",
                  r.iter, r.losses.total, r.losses.l_3dgs, r.losses.l_mpc, r.losses.l_smooth, r.losses.l_app,
                  r.psnr_train, r.psnr_test);
    log(buf);
  });

  std::string csv = metrics_csv_header() + "\n";
  for (const auto& r : result.metrics) csv += metrics_csv_row(r) + "\n";
  write_text(out / "metrics.csv", csv);

  const fs::path model = out / "model.icogs";
  write_checkpoint(model, result.cloud);
  write_sidecar(model, K);
  const GaussianCloud saved = read_checkpoint(model);

  for (const auto& v : d.dataset.test) {
    const RenderOutput r = render(saved, v.K, v.pose, ropt);
    write_png(out / "renders" / ("test_" + std::to_string(v.id) + ".png"), clamped01(r.rgb));
    write_depth(out / "depth" / ("test_" + std::to_string(v.id) + ".icod"), r.depth);
  }
  const EvalReport report = evaluate(saved, d.dataset.test, ropt);
  json summary = report_json(report);
  summary["psnr_test"] = report.mean_psnr;
  summary["psnr_initial"] = before.mean_psnr;
  summary["iterations"] = config.train.total_iters;
  summary["n_gaussians"] = saved.size();
  const std::string text = summary.dump(2);
  write_text(out / "summary.json", text + "\n");
  if (log) log("wrote " + out.string());
  return text;
}

WarpDebugReport cmd_warp_debug(const WarpDebugOptions& opt) {
  if (opt.depth_source != "gt" && opt.depth_source != "checkpoint")
    throw ConfigError("depth source must be 'gt' or 'checkpoint', got '" + opt.depth_source + "'");
  if (opt.out_dir.empty()) throw ConfigError("warp-debug needs an output directory");
  const DatasetOnDisk d = load_dataset(opt.dataset);
  const View* ref = find_view(d.dataset, opt.ref_id);
  const View* src = find_view(d.dataset, opt.src_id);
  if (!ref) throw ConfigError("unknown view id " + std::to_string(opt.ref_id));
  if (!src) throw ConfigError("unknown view id " + std::to_string(opt.src_id));
  if (!(ref->K == src->K)) throw ConfigError("views must share intrinsics");

  Image depth_ref, depth_src, alpha_ref;
  if (opt.depth_source == "gt") {
    if (ref->depth.empty() || src->depth.empty()) throw ConfigError("dataset has no ground-truth depth for these views");
    depth_ref = ref->depth;
    depth_src = src->depth;
  } else {
    if (opt.checkpoint.empty()) throw ConfigError("depth source 'checkpoint' needs a checkpoint path");
    check_compatible(opt.checkpoint, {*ref, *src});
    const GaussianCloud cloud = load_cloud(opt.checkpoint);
    RenderOptions ropt;
    ropt.threads = opt.threads;
    const RenderOutput rr = render(cloud, ref->K, ref->pose, ropt);
    depth_ref = rr.depth;
    alpha_ref = rr.alpha;
    depth_src = render(cloud, src->K, src->pose, ropt).depth;
  }

  const CameraPose rel = relative_transform(ref->pose, src->pose);
  const WarpedMap warped = inverse_warp(src->rgb, depth_ref, ref->K, rel);
  const DepthErrorMap err = depth_error(depth_ref, depth_src, ref->K, rel);
  const ReliabilityMask rel_mask =
      reliability_mask(std::span<const DepthErrorMap>(&err, 1), depth_ref, alpha_ref, 1, opt.tau_factor);

  WarpDebugReport rep;
  rep.pixels = depth_ref.pixel_count();
  rep.valid = warped.mask.count();
  rep.cycle_valid = err.valid.count();
  rep.reliable = rel_mask.mask.count();
  rep.tau_d = rel_mask.tau_d;
  Image heat(depth_ref.width, depth_ref.height, 1), norm(depth_ref.width, depth_ref.height, 1);
  for (int y = 0; y < depth_ref.height; ++y)
    for (int x = 0; x < depth_ref.width; ++x) {
      if (!err.valid.at(x, y)) continue;
      const double e = rep.tau_d > 0.0 ? err.error.at(x, y) / rep.tau_d : (err.error.at(x, y) > 0.0 ? 1e30 : 0.0);
      norm.at(x, y) = e;
      heat.at(x, y) = std::min(e, 1.0);
      rep.max_normalized_error = std::max(rep.max_normalized_error, e);
    }
  const MaskedL1 l1 = masked_l1(warped.values, ref->rgb, warped.mask);
  rep.warped_l1 = l1.empty ? 0.0 : l1.value;

  const fs::path out = opt.out_dir;
  make_dirs(out);
  const std::string tag = std::to_string(opt.src_id) + "_to_" + std::to_string(opt.ref_id);
  write_png(out / ("warped_" + tag + ".png"), clamped01(warped.values));
  write_png(out / ("validity_" + tag + ".png"), warped.mask);
  write_png(out / ("cycle_error_" + tag + ".png"), heat);
  write_depth(out / ("cycle_error_" + tag + ".icod"), norm);
  write_png(out / ("reliability_" + tag + ".png"), rel_mask.mask);
  return rep;
}

std::string warp_debug_json(const WarpDebugReport& r) {
  return json{{"pixels", r.pixels},
              {"valid", r.valid},
              {"cycle_valid", r.cycle_valid},
              {"reliable", r.reliable},
              {"tau_d", r.tau_d},
              {"max_normalized_error", r.max_normalized_error},
              {"warped_l1", r.warped_l1}}
      .dump(2);
}

void cmd_render(const std::string& checkpoint, const std::string& dataset_dir, const std::string& out_dir,
                int threads) {
  const DatasetOnDisk d = load_dataset(dataset_dir);
  check_compatible(checkpoint, d.dataset.train);
  check_compatible(checkpoint, d.dataset.test);
  const GaussianCloud cloud = load_cloud(checkpoint);
  const fs::path out = out_dir;
  make_dirs(out);
  RenderOptions opt;
  opt.threads = threads;
  auto emit = [&](const View& v, const char* split) {
    const RenderOutput r = render(cloud, v.K, v.pose, opt);
    const std::string stem = std::string(split) + "_" + std::to_string(v.id);
    write_png(out / (stem + ".png"), clamped01(r.rgb));
    write_depth(out / (stem + ".icod"), r.depth);
  };
  for (const auto& v : d.dataset.train) emit(v, "train");
  for (const auto& v : d.dataset.test) emit(v, "test");
}

} // namespace icogs
