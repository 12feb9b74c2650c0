#include "core/pipeline.hpp"

#include <algorithm>
#include <map>
#include <set>

#include <openssl/evp.h>

#include "core/errors.hpp"
#include "core/regions.hpp"
#include "core/table.hpp"
#include "json.hpp"

namespace wxskill::pipeline {

using json = nlohmann::ordered_json;

namespace {

json warnings_json(const Diagnostics& d, std::size_t from = 0) {
  json w = json::array();
  for (std::size_t i = from; i < d.warnings.size(); ++i) w.push_back(d.warnings[i]);
  return w;
}

char parse_delimiter(const std::string& s) {
  if (s == "whitespace") return '\0';
  if (s == "tab" || s == "\t") return '\t';
  if (s.size() == 1) return s[0];
  throw Error(ErrorKind::Config, "schema: bad delimiter \"" + s + "\"");
}

// Copies recognised keys of `j` into the schema fields; anything else is an error.
template <typename Setter>
void apply_keys(const json& j, std::string_view what, const std::map<std::string, Setter>& setters) {
  if (!j.is_object()) throw Error(ErrorKind::Config, "schema: \"" + std::string(what) + "\" must be an object");
  for (const auto& [key, value] : j.items()) {
    auto it = setters.find(key);
    if (it == setters.end())
      throw Error(ErrorKind::Config, "schema: unknown key \"" + key + "\" in \"" + std::string(what) + "\"");
    it->second(value);
  }
}

using Set = std::function<void(const json&)>;

Set str(std::string& dst) {
  return [&dst](const json& v) { dst = v.get<std::string>(); };
}

Set format_setter(TableFormat& f, bool header) {
  if (header) return [&f](const json& v) { f.has_header = v.get<bool>(); };
  return [&f](const json& v) { f.delimiter = parse_delimiter(v.get<std::string>()); };
}

fs::path resolve(const fs::path& base, const std::string& p) {
  fs::path path(p);
  return path.is_absolute() ? path : base / path;
}

std::string relative_name(const fs::path& p, const fs::path& root) {
  return fs::relative(p, root).generic_string();
}

}  // namespace

Schemas parse_schemas(std::string_view json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Config, std::string("schema: ") + e.what());
  }
  Schemas s;
  try {
    if (j.contains("locations")) {
      auto& l = s.locations;
      apply_keys<Set>(j["locations"], "locations",
                      {{"station_id", str(l.station_id)},
                       {"city", str(l.city)},
                       {"state", str(l.state)},
                       {"longitude", str(l.longitude)},
                       {"latitude", str(l.latitude)},
                       {"elevation", str(l.elevation)},
                       {"delimiter", format_setter(l.format, false)},
                       {"has_header", format_setter(l.format, true)}});
    }
    if (j.contains("measurements")) {
      auto& m = s.measurements;
      apply_keys<Set>(j["measurements"], "measurements",
                      {{"station_id", str(m.station_id)},
                       {"date", str(m.date)},
                       {"max_gust", str(m.max_gust)},
                       {"events", str(m.events)},
                       {"trace_token", str(m.trace_token)},
                       {"trace_value", [&m](const json& v) { m.trace_value = v.get<double>(); }},
                       {"delimiter", format_setter(m.format, false)},
                       {"has_header", format_setter(m.format, true)},
                       {"columns", [&m](const json& v) {
                          for (const auto& [var, col] : v.items()) {
                            auto id = ingest::variable_from_name(var);
                            if (!id) throw Error(ErrorKind::Config, "schema: unknown variable \"" + var + "\"");
                            m.columns[ingest::index(*id)] = col.get<std::string>();
                          }
                        }}});
    }
    if (j.contains("forecasts")) {
      auto& f = s.forecasts;
      auto boolean = [](bool& dst) { return Set([&dst](const json& v) { dst = v.get<bool>(); }); };
      apply_keys<Set>(j["forecasts"], "forecasts",
                      {{"station", str(f.station)},
                       {"target_date", str(f.target_date)},
                       {"value", str(f.value)},
                       {"kind", str(f.kind)},
                       {"issue_date", str(f.issue_date)},
                       {"lag", str(f.lag)},
                       {"station_is_index", boolean(f.station_is_index)},
                       {"precip_in_percent", boolean(f.precip_in_percent)},
                       {"min_temp_kind", str(f.min_temp_kind)},
                       {"max_temp_kind", str(f.max_temp_kind)},
                       {"precip_kind", str(f.precip_kind)},
                       {"delimiter", format_setter(f.format, false)},
                       {"has_header", format_setter(f.format, true)}});
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Config, std::string("schema: ") + e.what());
  }
  return s;
}

// ---- stages ---------------------------------------------------------------------

void stage_ingest(const IngestPaths& in, const Schemas& schemas, const fs::path& out, Diagnostics& diag) {
  const std::size_t first_warning = diag.warnings.size();
  auto stations = ingest::parse_locations(read_table(in.locations, schemas.locations.format), schemas.locations, diag);
  auto shoreline = ingest::parse_shoreline(read_table(in.shoreline));
  if (shoreline.empty()) throw Error(ErrorKind::Config, "shoreline file has no vertices: " + in.shoreline.string());
  for (auto& s : stations) {
    double d = ingest::distance_to_coast({s.longitude, s.latitude}, shoreline);
    if (d < ingest::kCoastDistanceMin || d > ingest::kCoastDistanceMax) {
      diag.warn("ingest: distance to coast for \"" + s.station_id + "\" is " + format_number(d) +
                " mi, outside [0, 807]; set absent");
      continue;
    }
    s.distance_to_coast = d;
  }
  std::set<std::string> known;
  for (const auto& s : stations) known.insert(s.station_id);

  auto records = ingest::parse_measurements(read_table(in.measurements, schemas.measurements.format),
                                            schemas.measurements, diag);
  const std::size_t measurement_rows = records.size();
  std::size_t unknown_station = 0;
  std::erase_if(records, [&](const ingest::DailyRecord& r) {
    bool drop = !known.contains(r.station_id);
    unknown_station += drop;
    return drop;
  });
  if (unknown_station)
    diag.warn("ingest: " + std::to_string(unknown_station) + " measurement row(s) for unknown stations dropped");
  std::stable_sort(records.begin(), records.end(), [](const auto& a, const auto& b) {
    return std::tie(a.station_id, a.date) < std::tie(b.station_id, b.date);
  });
  const std::size_t before_dedupe = records.size();
  records.erase(std::unique(records.begin(), records.end(),
                            [](const auto& a, const auto& b) { return a.station_id == b.station_id && a.date == b.date; }),
                records.end());
  if (records.size() != before_dedupe)
    diag.warn("ingest: " + std::to_string(before_dedupe - records.size()) +
              " duplicate station-day measurement row(s) dropped (first kept)");

  ingest::RangeFilterCounts range;
  records = ingest::apply_range_filters(std::move(records), &range);
  auto patches = ingest::parse_patches(read_table(in.patches));
  ingest::PatchCounts patched;
  records = ingest::apply_patches(std::move(records), patches, stations, diag, &patched);
  std::size_t gust_lower = 0, gust_only = 0;
  for (auto& r : records) {
    auto& w = r[ingest::Variable::MaxWind];
    if (r.max_gust && (!w || *r.max_gust < *w)) (w ? gust_lower : gust_only) += 1;
    w = ingest::fuse_wind(w, r.max_gust);
    r.max_gust.reset();
  }

  auto raw_forecasts = ingest::parse_forecasts(read_table(in.forecasts, schemas.forecasts.format), schemas.forecasts,
                                               stations, diag);
  std::size_t negative_lag = 0, far_lag = 0;
  for (const auto& f : raw_forecasts) {
    negative_lag += f.lag < 0;
    far_lag += f.lag > ingest::kMaxLag;
  }
  const std::size_t raw_count = raw_forecasts.size();
  auto lagged = ingest::filter_lags(std::move(raw_forecasts));
  const std::size_t lag_kept = lagged.size();
  auto forecasts = ingest::dedupe_forecasts(std::move(lagged));

  auto profiles = regions::aggregate_profiles(records, stations, diag);

  write_file(out / "stations.csv", ingest::write_stations(stations));
  write_file(out / "measurements.csv", ingest::write_measurements(records));
  write_file(out / "forecasts.csv", ingest::write_forecasts(forecasts));
  write_file(out / "profiles.csv", regions::write_profiles(profiles));

  json range_json = json::object();
  for (std::size_t v = 0; v < ingest::kVariableCount; ++v)
    range_json[std::string(ingest::variables()[v].name)] = range.removed[v];
  range_json["max_gust"] = range.gust_removed;
  json report = {
      {"schema_version", kBundleSchemaVersion},
      {"counts",
       {{"stations", stations.size()},
        {"measurement_rows", measurement_rows},
        {"station_days", records.size()},
        {"forecast_rows", raw_count},
        {"forecast_records", forecasts.size()}}},
      {"range_filter_removed", std::move(range_json)},
      {"patches",
       {{"rules", patches.size()},
        {"cells_removed", patched.removed},
        {"cells_replaced", patched.replaced},
        {"cells_filled", patched.filled},
        {"rules_skipped", patched.skipped}}},
      {"wind_fusion", {{"gust_lower_than_speed", gust_lower}, {"gust_only", gust_only}}},
      {"forecasts",
       {{"negative_lag_removed", negative_lag},
        {"lag_above_max_removed", far_lag},
        {"duplicates_merged", lag_kept - forecasts.size()}}},
      {"warnings", warnings_json(diag, first_warning)}};
  write_file(out / "cleaning_report.json", report.dump(1) + "\n");
}

void stage_cluster(const fs::path& profiles_path, std::size_t k, const std::optional<fs::path>& anchors,
                   const fs::path& out, Diagnostics& diag) {
  const std::size_t first_warning = diag.warnings.size();
  auto profiles = regions::read_profiles(read_table(profiles_path));
  if (profiles.size() < 2) throw Error(ErrorKind::InvalidArgument, "cluster: need at least 2 station profiles");
  auto z = regions::standardize(profiles, diag);
  auto dend = regions::ward_cluster(regions::euclidean_distances(z));
  auto assignment = regions::cut_tree(dend, z.station_ids, k);
  if (anchors) {
    std::vector<ingest::StationMeta> meta;
    for (const auto& p : profiles) meta.push_back({p.station_id, p.name, p.longitude, p.latitude, {}, {}});
    regions::assign_region_names(assignment, regions::parse_region_anchors(read_file(*anchors)), meta, diag);
  }

  write_file(out / "assignments.csv", regions::write_assignments(assignment, profiles));
  write_file(out / "dendrogram.json", regions::write_dendrogram(dend, z.station_ids));
  write_file(out / "zscores.csv", regions::write_zscores(z));

  std::map<int, std::size_t> sizes;
  for (int l : assignment.labels) ++sizes[l];
  json regions_json = json::array();
  for (const auto& [label, n] : sizes)
    regions_json.push_back({{"label", label}, {"name", assignment.name_of(label)}, {"stations", n}});
  json imputed = json::array();
  for (const auto& [station, feature] : z.imputed) imputed.push_back({{"station_id", station}, {"feature", feature}});
  json report = {{"schema_version", kBundleSchemaVersion},
                 {"k", k},
                 {"method", "ward (Lance-Williams on squared euclidean distances of z-scores)"},
                 {"regions", std::move(regions_json)},
                 {"imputed", std::move(imputed)},
                 {"warnings", warnings_json(diag, first_warning)}};
  write_file(out / "cluster_report.json", report.dump(1) + "\n");
}

void stage_errors(const fs::path& clean_dir, const fs::path& assignments, const fs::path& out, Diagnostics& diag) {
  const std::size_t first_warning = diag.warnings.size();
  auto records = ingest::read_measurements(read_table(clean_dir / "measurements.csv"));
  auto forecasts = ingest::read_forecasts(read_table(clean_dir / "forecasts.csv"));
  auto assignment = regions::read_assignments(read_table(assignments));
  auto stations = errors::join_station_data(records, forecasts);
  auto cells = errors::aggregate_all(stations, diag);
  auto correlations = errors::correlate(cells, assignment, diag);
  write_file(out / "error_cells.csv", errors::write_error_cells(cells));
  write_file(out / "correlations.csv", errors::write_correlations(correlations));
  json report = {{"schema_version", kBundleSchemaVersion},
                 {"stations", stations.size()},
                 {"cells", cells.size()},
                 {"significance_level", errors::kSignificanceLevel},
                 {"warnings", warnings_json(diag, first_warning)}};
  write_file(out / "errors_report.json", report.dump(1) + "\n");
}

void stage_importance(const fs::path& errors_dir, const fs::path& profiles, const fs::path& assignments,
                      const importance::ForestConfig& cfg, const fs::path& out, Diagnostics& diag) {
  const std::size_t first_warning = diag.warnings.size();
  auto cells = errors::read_error_cells(read_table(errors_dir / "error_cells.csv"));
  auto prof = regions::read_profiles(read_table(profiles));
  auto assignment = regions::read_assignments(read_table(assignments));
  auto rows = importance::compute_importance(cells, prof, assignment, cfg, diag);
  write_file(out / "importance.csv", importance::write_importance(rows));
  json report = {{"schema_version", kBundleSchemaVersion},
                 {"importance", "permutation (out-of-bag)"},
                 {"n_trees", cfg.n_trees},
                 {"features_per_split", cfg.features_per_split == 0 ? json("ceil(p/3)") : json(cfg.features_per_split)},
                 {"min_leaf_size", cfg.min_leaf_size},
                 {"bootstrap", cfg.bootstrap},
                 {"seed", cfg.seed},
                 {"warnings", warnings_json(diag, first_warning)}};
  write_file(out / "importance_report.json", report.dump(1) + "\n");
}

void stage_glyphs(const fs::path& errors_dir, const fs::path& correlations, const fs::path& assignments,
                  const glyphgeom::ProjectionConfig& cfg, const fs::path& out, Diagnostics& diag) {
  const std::size_t first_warning = diag.warnings.size();
  auto cells = errors::read_error_cells(read_table(errors_dir / "error_cells.csv"));
  auto corr = errors::read_correlations(read_table(correlations));
  auto assignment = regions::read_assignments(read_table(assignments));
  write_file(out / "geometry.json", glyphgeom::build_geometry(cells, corr, assignment, cfg, diag));
  json report = {{"schema_version", kBundleSchemaVersion}, {"warnings", warnings_json(diag, first_warning)}};
  write_file(out / "glyphs_report.json", report.dump(1) + "\n");
}

// ---- configuration ------------------------------------------------------------

PipelineConfig parse_pipeline_config(std::string_view json_text, const fs::path& base_dir) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Config, std::string("config: ") + e.what());
  }
  PipelineConfig c;
  try {
    const auto& in = j.at("inputs");
    c.inputs.locations = resolve(base_dir, in.at("locations").get<std::string>());
    c.inputs.measurements = resolve(base_dir, in.at("measurements").get<std::string>());
    c.inputs.forecasts = resolve(base_dir, in.at("forecasts").get<std::string>());
    c.inputs.shoreline = resolve(base_dir, in.at("shoreline").get<std::string>());
    c.inputs.patches = resolve(base_dir, in.at("patches").get<std::string>());
    if (in.contains("region_anchors")) c.region_anchors = resolve(base_dir, in["region_anchors"].get<std::string>());
    if (j.contains("schema")) c.schemas = parse_schemas(j["schema"].dump());
    c.k = j.value("k", std::size_t{6});
    c.forest.seed = j.value("seed", std::uint64_t{42});
    c.forest.n_trees = j.value("trees", std::size_t{500});
    c.forest.features_per_split = j.value("features_per_split", std::size_t{0});
    c.forest.min_leaf_size = j.value("min_leaf_size", std::size_t{5});
    c.forest.bootstrap = j.value("bootstrap", true);
    c.forest.threads = j.value("threads", std::size_t{0});
    c.projection.alpha = j.value("alpha", c.projection.alpha);
    if (j.contains("offsets")) {
      c.projection.offsets.clear();
      for (const auto& o : j["offsets"]) c.projection.offsets.push_back({o.at(0).get<double>(), o.at(1).get<double>()});
    }
    c.out = resolve(base_dir, j.at("out").get<std::string>());
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Config, std::string("config: ") + e.what());
  }
  if (c.k < 1) throw Error(ErrorKind::Config, "config: k must be >= 1");
  if (!(c.projection.alpha > 0)) throw Error(ErrorKind::Config, "config: alpha must be positive");
  return c;
}

PipelineConfig load_pipeline_config(const fs::path& config_file) {
  return parse_pipeline_config(read_file(config_file), config_file.parent_path());
}

// ---- bundle -----------------------------------------------------------------------

std::string sha256_hex(std::string_view data) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) != 1)
    throw Error(ErrorKind::Compute, "sha256 failed");
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  for (unsigned i = 0; i < len; ++i) {
    out += hex[md[i] >> 4];
    out += hex[md[i] & 0xF];
  }
  return out;
}

namespace {
const std::array<const char*, 5> kStages{"ingest", "regions", "errors", "importance", "glyphs"};
}

void write_manifest(const fs::path& bundle_dir, bool valid, const std::string& failed_stage,
                    const std::string& failure, const std::vector<std::string>& completed) {
  std::map<std::string, std::string> files;
  for (const char* stage : kStages) {
    if (!fs::exists(bundle_dir / stage)) continue;
    for (const auto& e : fs::recursive_directory_iterator(bundle_dir / stage))
      if (e.is_regular_file()) files[relative_name(e.path(), bundle_dir)] = sha256_hex(read_file(e.path()));
  }
  std::string digest_input;
  json file_json = json::object();
  for (const auto& [name, hash] : files) {
    file_json[name] = hash;
    digest_input += name + ":" + hash + "\n";
  }
  json stages = json::array();
  for (const char* stage : kStages) {
    std::string status = "not_run";
    if (std::find(completed.begin(), completed.end(), stage) != completed.end()) status = "ok";
    if (stage == failed_stage) status = "failed";
    json s = {{"name", stage}, {"status", status}};
    if (stage == failed_stage) s["error"] = failure;
    stages.push_back(std::move(s));
  }
  json m = {{"schema_version", kBundleSchemaVersion},
            {"valid", valid},
            {"stages", std::move(stages)},
            {"files", std::move(file_json)},
            {"bundle_hash", sha256_hex(digest_input)}};
  write_file(bundle_dir / "manifest.json", m.dump(1) + "\n");
}

void verify_manifest(const fs::path& bundle_dir) {
  json m;
  try {
    m = json::parse(read_file(bundle_dir / "manifest.json"));
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Bundle, std::string("bundle manifest unreadable: ") + e.what());
  } catch (const Error& e) {
    throw Error(ErrorKind::Bundle, std::string("bundle manifest missing: ") + e.what());
  }
  if (m.value("schema_version", 0) != kBundleSchemaVersion)
    throw Error(ErrorKind::Bundle, "bundle manifest: unsupported schema_version");
  if (!m.value("valid", false)) throw Error(ErrorKind::Bundle, "bundle manifest marks the bundle invalid");
  for (const auto& [name, hash] : m.at("files").items()) {
    fs::path p = bundle_dir / name;
    if (!fs::exists(p)) throw Error(ErrorKind::Bundle, "bundle file missing: " + name);
    if (sha256_hex(read_file(p)) != hash.get<std::string>())
      throw Error(ErrorKind::Bundle, "bundle file hash mismatch: " + name);
  }
}

void pipeline_run(const PipelineConfig& cfg, Diagnostics& diag) {
  const fs::path& out = cfg.out;
  fs::create_directories(out);
  for (const char* stage : kStages) fs::remove_all(out / stage);
  fs::remove(out / "manifest.json");

  std::vector<std::string> done;
  auto run = [&](const char* name, auto&& body) {
    try {
      body();
    } catch (const std::exception& e) {
      write_manifest(out, false, name, e.what(), done);
      auto kind = ErrorKind::Compute;
      if (auto* we = dynamic_cast<const Error*>(&e)) kind = we->kind();
      throw Error(kind, std::string("stage ") + name + ": " + e.what());
    }
    done.emplace_back(name);
  };

  run("ingest", [&] { stage_ingest(cfg.inputs, cfg.schemas, out / "ingest", diag); });
  run("regions", [&] { stage_cluster(out / "ingest" / "profiles.csv", cfg.k, cfg.region_anchors, out / "regions", diag); });
  run("errors", [&] { stage_errors(out / "ingest", out / "regions" / "assignments.csv", out / "errors", diag); });
  run("importance", [&] {
    stage_importance(out / "errors", out / "ingest" / "profiles.csv", out / "regions" / "assignments.csv", cfg.forest,
                     out / "importance", diag);
  });
  run("glyphs", [&] {
    stage_glyphs(out / "errors", out / "errors" / "correlations.csv", out / "regions" / "assignments.csv",
                 cfg.projection, out / "glyphs", diag);
  });
  write_manifest(out, true, "", "", done);
}

}  // namespace wxskill::pipeline
