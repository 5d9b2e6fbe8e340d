#include "icogs/icogs.h"

#include <cstdlib>
#include <cstring>
#include <memory>
#include <new>
#include <string>
#include <vector>

#include "icogs/pipeline.hpp"

struct icogs_context {
  std::string last_error;
  int threads = 0;
  icogs_log_fn log = nullptr;
  void* log_user = nullptr;
};

struct icogs_cloud {
  icogs::GaussianCloud cloud;
};

namespace {

char* dup_string(const std::string& s) {
  char* p = static_cast<char*>(std::malloc(s.size() + 1));
  if (p) std::memcpy(p, s.c_str(), s.size() + 1);
  return p;
}

template <typename Fn>
icogs_status guarded(icogs_context* ctx, Fn&& fn) {
  if (!ctx) return ICOGS_ERR_INVALID_ARGUMENT;
  ctx->last_error.clear();
  icogs_status st = ICOGS_ERR_INTERNAL;
  try {
    fn();
    return ICOGS_OK;
  } catch (const icogs::ConfigError& e) {
    ctx->last_error = e.what();
    st = ICOGS_ERR_CONFIG;
  } catch (const icogs::ContractError& e) {
    ctx->last_error = e.what();
    st = ICOGS_ERR_INVALID_ARGUMENT;
  } catch (const icogs::IoError& e) {
    ctx->last_error = e.what();
    st = ICOGS_ERR_IO;
  } catch (const icogs::NumericError& e) {
    ctx->last_error = e.what();
    st = ICOGS_ERR_NUMERIC;
  } catch (const icogs::DomainError& e) {
    ctx->last_error = e.what();
    st = ICOGS_ERR_DOMAIN;
  } catch (const std::exception& e) {
    ctx->last_error = e.what();
  } catch (...) {
    ctx->last_error = "unknown error";
  }
  return st;
}

void require(bool cond, const char* what) {
  if (!cond) throw icogs::ContractError(what);
}

std::vector<std::string> override_list(const char* const* overrides, size_t n) {
  require(n == 0 || overrides, "overrides is null");
  std::vector<std::string> out;
  for (size_t i = 0; i < n; ++i) {
    require(overrides[i], "override entry is null");
    out.emplace_back(overrides[i]);
  }
  return out;
}

icogs::RunConfig resolve(const icogs_context* ctx, const char* config_path, const char* const* overrides,
                         size_t n) {
  icogs::RunConfig c = icogs::load_run_config(config_path ? config_path : "", override_list(overrides, n));
  if (ctx->threads > 0) c.train.threads = ctx->threads;
  return c;
}

int effective_threads(const icogs_context* ctx) { return ctx->threads > 0 ? ctx->threads : 1; }

} // namespace

extern "C" {

const char* icogs_version(void) { return "0.1.0"; }

int icogs_exit_code(icogs_status status) {
  switch (status) {
    case ICOGS_OK: return 0;
    case ICOGS_ERR_CONFIG:
    case ICOGS_ERR_INVALID_ARGUMENT: return 2;
    default: return 1;
  }
}

icogs_status icogs_context_create(icogs_context** out) {
  if (!out) return ICOGS_ERR_INVALID_ARGUMENT;
  *out = new (std::nothrow) icogs_context();
  return *out ? ICOGS_OK : ICOGS_ERR_INTERNAL;
}

void icogs_context_destroy(icogs_context* ctx) { delete ctx; }

const char* icogs_last_error(const icogs_context* ctx) { return ctx ? ctx->last_error.c_str() : "null context"; }

icogs_status icogs_context_set_threads(icogs_context* ctx, int threads) {
  return guarded(ctx, [&] {
    require(threads >= 0, "threads must be >= 0");
    ctx->threads = threads;
  });
}

icogs_status icogs_context_set_log(icogs_context* ctx, icogs_log_fn fn, void* user) {
  return guarded(ctx, [&] {
    ctx->log = fn;
    ctx->log_user = user;
  });
}

void icogs_string_free(char* s) { std::free(s); }

icogs_status icogs_gen(icogs_context* ctx, const char* preset, int views, uint64_t seed, int image_size,
                       int lighting, const char* out_dir) {
  return guarded(ctx, [&] {
    require(preset && out_dir, "preset and out_dir are required");
    icogs::GenOptions o;
    o.preset = preset;
    o.views = views;
    o.seed = seed;
    o.image_size = image_size;
    o.lighting = lighting != 0;
    o.out_dir = out_dir;
    icogs::cmd_gen(o);
  });
}

icogs_status icogs_train(icogs_context* ctx, const char* config_path, const char* const* overrides,
                         size_t n_overrides, char** summary_json) {
  return guarded(ctx, [&] {
    const icogs::RunConfig c = resolve(ctx, config_path, overrides, n_overrides);
    icogs::LogSink sink;
    if (ctx->log) sink = [ctx](const std::string& line) { ctx->log(line.c_str(), ctx->log_user); };
    const std::string summary = icogs::cmd_train(c, sink);
    if (summary_json) *summary_json = dup_string(summary);
  });
}

icogs_status icogs_resolve_config(icogs_context* ctx, const char* config_path, const char* const* overrides,
                                  size_t n_overrides, char** config_json) {
  return guarded(ctx, [&] {
    require(config_json, "config_json is null");
    *config_json = dup_string(icogs::dump_run_config(resolve(ctx, config_path, overrides, n_overrides)));
  });
}

icogs_status icogs_eval(icogs_context* ctx, const char* checkpoint, const char* dataset, char** report_json,
                        char** report_text) {
  return guarded(ctx, [&] {
    require(checkpoint && dataset, "checkpoint and dataset are required");
    const icogs::EvalReport r = icogs::cmd_eval(checkpoint, dataset, effective_threads(ctx));
    if (report_json) *report_json = dup_string(icogs::eval_report_json(r));
    if (report_text) *report_text = dup_string(icogs::eval_report_text(r));
  });
}

icogs_status icogs_warp_debug(icogs_context* ctx, const char* dataset, int ref_id, int src_id,
                              const char* depth_source, const char* checkpoint, const char* out_dir,
                              char** report_json) {
  return guarded(ctx, [&] {
    require(dataset && out_dir, "dataset and out_dir are required");
    icogs::WarpDebugOptions o;
    o.dataset = dataset;
    o.ref_id = ref_id;
    o.src_id = src_id;
    o.depth_source = depth_source ? depth_source : "gt";
    o.checkpoint = checkpoint ? checkpoint : "";
    o.out_dir = out_dir;
    o.threads = effective_threads(ctx);
    const icogs::WarpDebugReport r = icogs::cmd_warp_debug(o);
    if (report_json) *report_json = dup_string(icogs::warp_debug_json(r));
  });
}

icogs_status icogs_render(icogs_context* ctx, const char* checkpoint, const char* dataset, const char* out_dir) {
  return guarded(ctx, [&] {
    require(checkpoint && dataset && out_dir, "checkpoint, dataset and out_dir are required");
    icogs::cmd_render(checkpoint, dataset, out_dir, effective_threads(ctx));
  });
}

icogs_status icogs_cloud_load(icogs_context* ctx, const char* path, icogs_cloud** out) {
  return guarded(ctx, [&] {
    require(path && out, "path and out are required");
    auto c = std::make_unique<icogs_cloud>();
    c->cloud = icogs::read_checkpoint(path);
    *out = c.release();
  });
}

size_t icogs_cloud_size(const icogs_cloud* cloud) { return cloud ? cloud->cloud.size() : 0; }

icogs_status icogs_cloud_render(icogs_context* ctx, const icogs_cloud* cloud, const double intrinsics[4], int width,
                                int height, const double rotation[9], const double translation[3], double* rgb,
                                double* depth, double* alpha) {
  return guarded(ctx, [&] {
    require(cloud && intrinsics && rotation && translation, "cloud, intrinsics and pose are required");
    icogs::CameraIntrinsics K{intrinsics[0], intrinsics[1], intrinsics[2], intrinsics[3], width, height};
    K.validate();
    icogs::CameraPose pose;
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) pose.rotation(r, c) = rotation[3 * r + c];
    pose.translation = icogs::Vec3(translation[0], translation[1], translation[2]);
    pose.validate();
    icogs::RenderOptions opt;
    opt.threads = effective_threads(ctx);
    const icogs::RenderOutput o = icogs::render(cloud->cloud, K, pose, opt);
    if (rgb) std::memcpy(rgb, o.rgb.data.data(), o.rgb.data.size() * sizeof(double));
    if (depth) std::memcpy(depth, o.depth.data.data(), o.depth.data.size() * sizeof(double));
    if (alpha) std::memcpy(alpha, o.alpha.data.data(), o.alpha.data.size() * sizeof(double));
  });
}

void icogs_cloud_destroy(icogs_cloud* cloud) { delete cloud; }

} // extern "C"
