// Command-line front end. Talks to the library only through wxskill.h.
#include <cstdio>
#include <string>

#include "CLI11.hpp"
#include "wxskill/wxskill.h"

namespace {

int report(wxs_context* ctx, wxs_status st) {
  for (size_t i = 0; i < wxs_warning_count(ctx); ++i) std::fprintf(stderr, "warning: %s\n", wxs_warning(ctx, i));
  if (st != WXS_OK) std::fprintf(stderr, "error: %s\n", wxs_last_error(ctx));
  return st == WXS_OK ? 0 : static_cast<int>(st) + 1;
}

const char* opt(const std::string& s) { return s.empty() ? nullptr : s.c_str(); }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Weather forecast skill pipeline"};
  app.set_version_flag("--version", std::string(wxs_version()));
  app.require_subcommand(1);

  std::string locations, measurements, forecasts, shoreline, patches, schema, out;
  auto* ingest = app.add_subcommand("ingest", "clean raw measurements and forecasts");
  ingest->add_option("--locations", locations)->required();
  ingest->add_option("--measurements", measurements)->required();
  ingest->add_option("--forecasts", forecasts)->required();
  ingest->add_option("--shoreline", shoreline)->required();
  ingest->add_option("--patches", patches)->required();
  ingest->add_option("--schema", schema, "JSON column mapping overrides");
  ingest->add_option("--out", out)->required();

  std::string profiles, names;
  std::size_t k = 6;
  auto* cluster = app.add_subcommand("cluster", "ward clustering of station profiles");
  cluster->add_option("--profiles", profiles)->required();
  cluster->add_option("--k", k)->check(CLI::PositiveNumber);
  cluster->add_option("--names", names, "region anchor JSON");
  cluster->add_option("--out", out)->required();

  std::string clean, assignments;
  auto* errors = app.add_subcommand("errors", "forecast error cells and correlations");
  errors->add_option("--clean", clean)->required();
  errors->add_option("--assignments", assignments)->required();
  errors->add_option("--out", out)->required();

  std::string errors_dir;
  wxs_forest_options forest{500, 0, 5, 42, 0};
  auto* importance = app.add_subcommand("importance", "random forest permutation importance");
  importance->add_option("--errors", errors_dir)->required();
  importance->add_option("--profiles", profiles)->required();
  importance->add_option("--assignments", assignments)->required();
  importance->add_option("--trees", forest.n_trees)->check(CLI::PositiveNumber);
  importance->add_option("--seed", forest.seed);
  importance->add_option("--mtry", forest.features_per_split, "features per split (0: p/3)");
  importance->add_option("--threads", forest.threads);
  importance->add_option("--out", out)->required();

  std::string correlations;
  double alpha = 150.0;
  auto* glyphs = app.add_subcommand("glyphs", "glyph and ellipse geometry");
  glyphs->add_option("--errors", errors_dir)->required();
  glyphs->add_option("--correlations", correlations)->required();
  glyphs->add_option("--assignments", assignments)->required();
  glyphs->add_option("--alpha", alpha)->check(CLI::PositiveNumber);
  glyphs->add_option("--out", out)->required();

  std::string config;
  auto* run = app.add_subcommand("run", "run every stage from a config file");
  run->add_option("--config", config)->required();

  std::string bundle_dir, host = "127.0.0.1", static_dir;
  int port = 8080;
  auto* serve = app.add_subcommand("serve", "serve a bundle over HTTP (WXSKILL_PORT overrides --port)");
  serve->add_option("--bundle", bundle_dir)->required();
  serve->add_option("--port", port)->check(CLI::Range(0, 65535));
  serve->add_option("--host", host);
  serve->add_option("--static", static_dir, "directory of explorer assets");

  std::string request;
  auto* query = app.add_subcommand("query", "answer one API request from a bundle, no network");
  query->add_option("--bundle", bundle_dir)->required();
  query->add_option("path", request, "e.g. /api/errors?lag=1")->required();

  CLI11_PARSE(app, argc, argv);

  wxs_context* ctx = wxs_context_create();
  if (!ctx) return 1;
  int rc = 0;
  if (*ingest) {
    rc = report(ctx, wxs_ingest(ctx, locations.c_str(), measurements.c_str(), forecasts.c_str(), shoreline.c_str(),
                                patches.c_str(), opt(schema), out.c_str()));
  } else if (*cluster) {
    rc = report(ctx, wxs_cluster(ctx, profiles.c_str(), k, opt(names), out.c_str()));
  } else if (*errors) {
    rc = report(ctx, wxs_errors(ctx, clean.c_str(), assignments.c_str(), out.c_str()));
  } else if (*importance) {
    rc = report(ctx, wxs_importance(ctx, errors_dir.c_str(), profiles.c_str(), assignments.c_str(), &forest,
                                    out.c_str()));
  } else if (*glyphs) {
    rc = report(ctx, wxs_glyphs(ctx, errors_dir.c_str(), correlations.c_str(), assignments.c_str(), alpha,
                                out.c_str()));
  } else if (*run) {
    rc = report(ctx, wxs_pipeline_run(ctx, config.c_str()));
  } else if (*serve || *query) {
    wxs_bundle* bundle = nullptr;
    rc = report(ctx, wxs_bundle_open(ctx, bundle_dir.c_str(), &bundle));
    if (rc == 0 && *query) {
      int status = 0;
      char* body = nullptr;
      rc = report(ctx, wxs_bundle_request(ctx, bundle, request.c_str(), &status, &body));
      if (rc == 0) {
        std::printf("%s\n", body);
        wxs_free_string(body);
        if (status != 200) rc = status / 100;
      }
    } else if (rc == 0) {
      wxs_server* server = nullptr;
      int bound = 0;
      rc = report(ctx, wxs_server_start(ctx, bundle, host.c_str(), port, opt(static_dir), &server, &bound));
      if (rc == 0) {
        std::printf("serving %s on http://%s:%d\n", bundle_dir.c_str(), host.c_str(), bound);
        std::fflush(stdout);
        wxs_server_wait(server);
        wxs_server_stop(server);
      }
    }
    wxs_bundle_close(bundle);
  }
  wxs_context_destroy(ctx);
  return rc;
}
