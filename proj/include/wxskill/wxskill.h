#ifndef WXSKILL_H
#define WXSKILL_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define WXS_API __declspec(dllexport)
#else
#define WXS_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum wxs_status {
  WXS_OK = 0,
  WXS_INVALID_ARGUMENT = 1,
  WXS_IO = 2,
  WXS_PARSE = 3,
  WXS_CONFIG = 4,
  WXS_COMPUTE = 5,
  WXS_BUNDLE = 6,
  WXS_INTERNAL = 7
} wxs_status;

/* Holds the last error message and the warnings of the last call. Not
   thread-safe; use one context per thread. */
typedef struct wxs_context wxs_context;

/* A verified, read-only artifact bundle. Requests may be issued from several
   threads at once. */
typedef struct wxs_bundle wxs_bundle;

WXS_API const char* wxs_version(void);

WXS_API wxs_context* wxs_context_create(void);
WXS_API void wxs_context_destroy(wxs_context* ctx);

/* Empty string when the last call succeeded. Owned by the context. */
WXS_API const char* wxs_last_error(const wxs_context* ctx);
WXS_API size_t wxs_warning_count(const wxs_context* ctx);
WXS_API const char* wxs_warning(const wxs_context* ctx, size_t i);

/* Stage entry points. Paths are UTF-8. Optional arguments may be NULL. */
WXS_API wxs_status wxs_ingest(wxs_context* ctx, const char* locations, const char* measurements,
                              const char* forecasts, const char* shoreline, const char* patches,
                              const char* schema_json_file, const char* out_dir);
WXS_API wxs_status wxs_cluster(wxs_context* ctx, const char* profiles, size_t k, const char* region_anchors,
                               const char* out_dir);
WXS_API wxs_status wxs_errors(wxs_context* ctx, const char* clean_dir, const char* assignments,
                              const char* out_dir);

typedef struct wxs_forest_options {
  size_t n_trees;            /* 0: 500 */
  size_t features_per_split; /* 0: ceil(p / 3) */
  size_t min_leaf_size;      /* 0: 5 */
  uint64_t seed;
  size_t threads;            /* 0: hardware concurrency */
} wxs_forest_options;

WXS_API wxs_status wxs_importance(wxs_context* ctx, const char* errors_dir, const char* profiles,
                                  const char* assignments, const wxs_forest_options* options,
                                  const char* out_dir);
/* alpha <= 0 selects the default glyph size. */
WXS_API wxs_status wxs_glyphs(wxs_context* ctx, const char* errors_dir, const char* correlations,
                              const char* assignments, double alpha, const char* out_dir);

WXS_API wxs_status wxs_pipeline_run(wxs_context* ctx, const char* config_file);

WXS_API wxs_status wxs_bundle_open(wxs_context* ctx, const char* dir, wxs_bundle** out);
WXS_API void wxs_bundle_close(wxs_bundle* bundle);

/* Answers GET `path_and_query` (e.g. "/api/errors?lag=1") without a network.
   *body is a NUL-terminated JSON string to be released with wxs_free_string. */
WXS_API wxs_status wxs_bundle_request(wxs_context* ctx, const wxs_bundle* bundle, const char* path_and_query,
                                      int* http_status, char** body);
WXS_API void wxs_free_string(char* s);

typedef struct wxs_server wxs_server;

/* Starts serving `bundle` over HTTP on a background thread. port 0 picks a
   free port; a valid WXSKILL_PORT environment variable overrides `port`.
   static_dir may be NULL. The bound port is stored in *bound_port. */
WXS_API wxs_status wxs_server_start(wxs_context* ctx, const wxs_bundle* bundle, const char* host, int port,
                                    const char* static_dir, wxs_server** out, int* bound_port);
/* Blocks until the server stops. */
WXS_API void wxs_server_wait(wxs_server* server);
/* Stops and frees the server. */
WXS_API void wxs_server_stop(wxs_server* server);

#ifdef __cplusplus
}
#endif

#endif
