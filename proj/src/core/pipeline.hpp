#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include "core/glyphgeom.hpp"
#include "core/importance.hpp"
#include "core/ingest.hpp"

namespace wxskill::pipeline {

namespace fs = std::filesystem;

struct Schemas {
  ingest::LocationSchema locations;
  ingest::MeasurementSchema measurements;
  ingest::ForecastSchema forecasts;
};

/// Overrides from a JSON object; unknown keys are a Config error.
Schemas parse_schemas(std::string_view json_text);

struct IngestPaths {
  fs::path locations;
  fs::path measurements;
  fs::path forecasts;
  fs::path shoreline;
  fs::path patches;
};

// Stage entry points. Each reads its inputs from disk, writes its outputs
// into `out`, and records warnings both in `diag` and in a report file.
void stage_ingest(const IngestPaths& in, const Schemas& schemas, const fs::path& out, Diagnostics& diag);
void stage_cluster(const fs::path& profiles, std::size_t k, const std::optional<fs::path>& anchors,
                   const fs::path& out, Diagnostics& diag);
void stage_errors(const fs::path& clean_dir, const fs::path& assignments, const fs::path& out, Diagnostics& diag);
void stage_importance(const fs::path& errors_dir, const fs::path& profiles, const fs::path& assignments,
                      const importance::ForestConfig& cfg, const fs::path& out, Diagnostics& diag);
void stage_glyphs(const fs::path& errors_dir, const fs::path& correlations, const fs::path& assignments,
                  const glyphgeom::ProjectionConfig& cfg, const fs::path& out, Diagnostics& diag);

struct PipelineConfig {
  IngestPaths inputs;
  std::optional<fs::path> region_anchors;
  Schemas schemas;
  std::size_t k = 6;
  importance::ForestConfig forest;
  glyphgeom::ProjectionConfig projection;
  fs::path out;
};

/// Relative paths resolve against `base_dir`.
PipelineConfig parse_pipeline_config(std::string_view json_text, const fs::path& base_dir);
PipelineConfig load_pipeline_config(const fs::path& config_file);

/// ingest -> regions -> errors -> importance -> glyphs into cfg.out, then the
/// manifest. A failing stage marks the manifest invalid and rethrows with
/// the stage named.
void pipeline_run(const PipelineConfig& cfg, Diagnostics& diag);

std::string sha256_hex(std::string_view data);

inline constexpr int kBundleSchemaVersion = 1;

/// Writes manifest.json listing every file under `bundle_dir` with its hash.
void write_manifest(const fs::path& bundle_dir, bool valid, const std::string& failed_stage,
                    const std::string& failure, const std::vector<std::string>& completed);

/// Recomputes hashes; throws a Bundle error on any mismatch or invalid flag.
void verify_manifest(const fs::path& bundle_dir);

}  // namespace wxskill::pipeline
