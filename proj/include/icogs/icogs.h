#ifndef ICOGS_H
#define ICOGS_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#if defined(__GNUC__)
#define ICOGS_API __attribute__((visibility("default")))
#else
#define ICOGS_API
#endif

typedef enum icogs_status {
  ICOGS_OK = 0,
  ICOGS_ERR_INVALID_ARGUMENT = 1, /* null pointer, bad range, broken precondition */
  ICOGS_ERR_CONFIG = 2,           /* bad config, override, preset or dataset */
  ICOGS_ERR_IO = 3,
  ICOGS_ERR_NUMERIC = 4,          /* non-finite loss during training */
  ICOGS_ERR_DOMAIN = 5,
  ICOGS_ERR_INTERNAL = 6
} icogs_status;

typedef struct icogs_context icogs_context;
typedef struct icogs_cloud icogs_cloud;

typedef void (*icogs_log_fn)(const char* line, void* user);

ICOGS_API const char* icogs_version(void);

/* Process exit code for a status: 0 success, 2 usage/config error, 1 otherwise. */
ICOGS_API int icogs_exit_code(icogs_status status);

ICOGS_API icogs_status icogs_context_create(icogs_context** out);
ICOGS_API void icogs_context_destroy(icogs_context* ctx);
/* Message of the last failed call on this context; empty after a success. */
ICOGS_API const char* icogs_last_error(const icogs_context* ctx);
/* 0 keeps each command's own thread setting. */
ICOGS_API icogs_status icogs_context_set_threads(icogs_context* ctx, int threads);
ICOGS_API icogs_status icogs_context_set_log(icogs_context* ctx, icogs_log_fn fn, void* user);

/* Strings returned through char** are owned by the caller; free with icogs_string_free. */
ICOGS_API void icogs_string_free(char* s);

ICOGS_API icogs_status icogs_gen(icogs_context* ctx, const char* preset, int views, uint64_t seed, int image_size,
                                 int lighting, const char* out_dir);

/* config_path may be NULL (all defaults). overrides are "dotted.key=value" strings. */
ICOGS_API icogs_status icogs_train(icogs_context* ctx, const char* config_path, const char* const* overrides,
                                   size_t n_overrides, char** summary_json);

/* Writes the fully resolved config (defaults, file, overrides) as JSON. */
ICOGS_API icogs_status icogs_resolve_config(icogs_context* ctx, const char* config_path,
                                            const char* const* overrides, size_t n_overrides, char** config_json);

/* report_json has keys per_view and mean; report_text is a human-readable table. Either may be NULL. */
ICOGS_API icogs_status icogs_eval(icogs_context* ctx, const char* checkpoint, const char* dataset,
                                  char** report_json, char** report_text);

/* depth_source is "gt" or "checkpoint"; checkpoint may be NULL for "gt". */
ICOGS_API icogs_status icogs_warp_debug(icogs_context* ctx, const char* dataset, int ref_id, int src_id,
                                        const char* depth_source, const char* checkpoint, const char* out_dir,
                                        char** report_json);

ICOGS_API icogs_status icogs_render(icogs_context* ctx, const char* checkpoint, const char* dataset,
                                    const char* out_dir);

ICOGS_API icogs_status icogs_cloud_load(icogs_context* ctx, const char* path, icogs_cloud** out);
ICOGS_API size_t icogs_cloud_size(const icogs_cloud* cloud);
/* intrinsics = {fx, fy, cx, cy}; rotation row-major world-to-camera. Outputs are
 * width*height*3 (rgb) and width*height (depth, alpha) doubles; any may be NULL. */
ICOGS_API icogs_status icogs_cloud_render(icogs_context* ctx, const icogs_cloud* cloud, const double intrinsics[4],
                                          int width, int height, const double rotation[9],
                                          const double translation[3], double* rgb, double* depth, double* alpha);
ICOGS_API void icogs_cloud_destroy(icogs_cloud* cloud);

#ifdef __cplusplus
}
#endif

#endif
