#include "wxskill/wxskill.h"

#include <cstdlib>
#include <cstring>
#include <memory>
#include <new>
#include <optional>
#include <string>

#include "core/pipeline.hpp"
#include "core/service.hpp"
#include "core/table.hpp"

struct wxs_context {
  std::string last_error;
  std::vector<std::string> warnings;
};

struct wxs_bundle {
  std::shared_ptr<const wxskill::service::Bundle> bundle;
};

struct wxs_server {
  std::unique_ptr<wxskill::service::Server> server;
};

namespace {

using wxskill::Diagnostics;
using wxskill::Error;
using wxskill::ErrorKind;

wxs_status status_of(ErrorKind k) {
  switch (k) {
    case ErrorKind::InvalidArgument: return WXS_INVALID_ARGUMENT;
    case ErrorKind::Io: return WXS_IO;
    case ErrorKind::Parse: return WXS_PARSE;
    case ErrorKind::Config: return WXS_CONFIG;
    case ErrorKind::Compute: return WXS_COMPUTE;
    case ErrorKind::Bundle: return WXS_BUNDLE;
  }
  return WXS_INTERNAL;
}

// Runs `body` with fresh diagnostics, translating exceptions into a status.
template <typename F>
wxs_status guarded(wxs_context* ctx, F&& body) {
  if (!ctx) return WXS_INVALID_ARGUMENT;
  ctx->last_error.clear();
  ctx->warnings.clear();
  Diagnostics diag;
  wxs_status st = WXS_OK;
  try {
    body(diag);
  } catch (const Error& e) {
    ctx->last_error = e.what();
    st = status_of(e.kind());
  } catch (const std::bad_alloc&) {
    ctx->last_error = "out of memory";
    st = WXS_INTERNAL;
  } catch (const std::exception& e) {
    ctx->last_error = e.what();
    st = WXS_INTERNAL;
  }
  ctx->warnings = std::move(diag.warnings);
  return st;
}

std::filesystem::path need(const char* p, const char* what) {
  if (!p || !*p) throw Error(ErrorKind::InvalidArgument, std::string(what) + " is required");
  return std::filesystem::path(p);
}

}  // namespace

extern "C" {

const char* wxs_version(void) { return "0.1.0"; }

wxs_context* wxs_context_create(void) { return new (std::nothrow) wxs_context(); }

void wxs_context_destroy(wxs_context* ctx) { delete ctx; }

const char* wxs_last_error(const wxs_context* ctx) { return ctx ? ctx->last_error.c_str() : "null context"; }

size_t wxs_warning_count(const wxs_context* ctx) { return ctx ? ctx->warnings.size() : 0; }

const char* wxs_warning(const wxs_context* ctx, size_t i) {
  if (!ctx || i >= ctx->warnings.size()) return nullptr;
  return ctx->warnings[i].c_str();
}

wxs_status wxs_ingest(wxs_context* ctx, const char* locations, const char* measurements, const char* forecasts,
                      const char* shoreline, const char* patches, const char* schema_json_file,
                      const char* out_dir) {
  return guarded(ctx, [&](Diagnostics& diag) {
    wxskill::pipeline::IngestPaths in{need(locations, "locations"), need(measurements, "measurements"),
                                      need(forecasts, "forecasts"), need(shoreline, "shoreline"),
                                      need(patches, "patches")};
    wxskill::pipeline::Schemas schemas;
    if (schema_json_file && *schema_json_file)
      schemas = wxskill::pipeline::parse_schemas(wxskill::read_file(schema_json_file));
    wxskill::pipeline::stage_ingest(in, schemas, need(out_dir, "out"), diag);
  });
}

wxs_status wxs_cluster(wxs_context* ctx, const char* profiles, size_t k, const char* region_anchors,
                       const char* out_dir) {
  return guarded(ctx, [&](Diagnostics& diag) {
    std::optional<std::filesystem::path> anchors;
    if (region_anchors && *region_anchors) anchors = region_anchors;
    wxskill::pipeline::stage_cluster(need(profiles, "profiles"), k, anchors, need(out_dir, "out"), diag);
  });
}

wxs_status wxs_errors(wxs_context* ctx, const char* clean_dir, const char* assignments, const char* out_dir) {
  return guarded(ctx, [&](Diagnostics& diag) {
    wxskill::pipeline::stage_errors(need(clean_dir, "clean"), need(assignments, "assignments"),
                                    need(out_dir, "out"), diag);
  });
}

wxs_status wxs_importance(wxs_context* ctx, const char* errors_dir, const char* profiles, const char* assignments,
                          const wxs_forest_options* options, const char* out_dir) {
  return guarded(ctx, [&](Diagnostics& diag) {
    wxskill::importance::ForestConfig cfg;
    if (options) {
      if (options->n_trees) cfg.n_trees = options->n_trees;
      cfg.features_per_split = options->features_per_split;
      if (options->min_leaf_size) cfg.min_leaf_size = options->min_leaf_size;
      cfg.seed = options->seed;
      cfg.threads = options->threads;
    }
    wxskill::pipeline::stage_importance(need(errors_dir, "errors"), need(profiles, "profiles"),
                                        need(assignments, "assignments"), cfg, need(out_dir, "out"), diag);
  });
}

wxs_status wxs_glyphs(wxs_context* ctx, const char* errors_dir, const char* correlations, const char* assignments,
                      double alpha, const char* out_dir) {
  return guarded(ctx, [&](Diagnostics& diag) {
    wxskill::glyphgeom::ProjectionConfig cfg;
    if (alpha > 0) cfg.alpha = alpha;
    wxskill::pipeline::stage_glyphs(need(errors_dir, "errors"), need(correlations, "correlations"),
                                    need(assignments, "assignments"), cfg, need(out_dir, "out"), diag);
  });
}

wxs_status wxs_pipeline_run(wxs_context* ctx, const char* config_file) {
  return guarded(ctx, [&](Diagnostics& diag) {
    wxskill::pipeline::pipeline_run(wxskill::pipeline::load_pipeline_config(need(config_file, "config")), diag);
  });
}

wxs_status wxs_bundle_open(wxs_context* ctx, const char* dir, wxs_bundle** out) {
  return guarded(ctx, [&](Diagnostics&) {
    if (!out) throw Error(ErrorKind::InvalidArgument, "out is required");
    *out = nullptr;
    auto b = std::make_shared<const wxskill::service::Bundle>(wxskill::service::Bundle::open(need(dir, "bundle")));
    *out = new wxs_bundle{std::move(b)};
  });
}

void wxs_bundle_close(wxs_bundle* bundle) { delete bundle; }

wxs_status wxs_bundle_request(wxs_context* ctx, const wxs_bundle* bundle, const char* path_and_query,
                              int* http_status, char** body) {
  return guarded(ctx, [&](Diagnostics&) {
    if (!bundle || !path_and_query || !http_status || !body)
      throw Error(ErrorKind::InvalidArgument, "bundle, path, status and body are required");
    auto r = wxskill::service::handle_url(*bundle->bundle, path_and_query);
    char* copy = static_cast<char*>(std::malloc(r.body.size() + 1));
    if (!copy) throw std::bad_alloc();
    std::memcpy(copy, r.body.c_str(), r.body.size() + 1);
    *http_status = r.status;
    *body = copy;
  });
}

void wxs_free_string(char* s) { std::free(s); }

wxs_status wxs_server_start(wxs_context* ctx, const wxs_bundle* bundle, const char* host, int port,
                            const char* static_dir, wxs_server** out, int* bound_port) {
  return guarded(ctx, [&](Diagnostics&) {
    if (!bundle || !out) throw Error(ErrorKind::InvalidArgument, "bundle and out are required");
    *out = nullptr;
    std::optional<std::filesystem::path> dir;
    if (static_dir && *static_dir) dir = static_dir;
    auto server = std::make_unique<wxskill::service::Server>(bundle->bundle, dir);
    int p = server->start(host && *host ? host : "127.0.0.1", wxskill::service::port_from_env(port));
    if (bound_port) *bound_port = p;
    *out = new wxs_server{std::move(server)};
  });
}

void wxs_server_wait(wxs_server* server) {
  if (server) server->server->wait();
}

void wxs_server_stop(wxs_server* server) { delete server; }

}  // extern "C"
