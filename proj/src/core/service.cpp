#include "core/service.hpp"

#include <algorithm>
#include <cstdlib>
#include <set>

#include "core/pipeline.hpp"
#include "core/table.hpp"
#include "httplib.h"

namespace wxskill::service {

using json = nlohmann::ordered_json;

namespace {

json val(const Value& v) { return v ? json(*v) : json(nullptr); }

Response ok(json body) {
  body["schema_version"] = pipeline::kBundleSchemaVersion;
  return {200, body.dump()};
}

Response fail(int status, std::string message) {
  json body = {{"schema_version", pipeline::kBundleSchemaVersion}, {"error", std::move(message)}};
  return {status, body.dump()};
}

json cell_json(const errors::ErrorCell& c) {
  return {{"station_id", c.station_id},
          {"lag", c.lag ? json(*c.lag) : json("all")},
          {"month", c.month ? json(*c.month) : json("all")},
          {"mae_min_temp", val(c.mae_min_temp)},
          {"mae_max_temp", val(c.mae_max_temp)},
          {"precip_error", val(c.precip_error)},
          {"n_days", c.n_days}};
}

// "all" or an integer in [lo, hi]; anything else is rejected.
std::optional<std::optional<int>> parse_selector(const Query& q, const std::string& key, int lo, int hi) {
  auto it = q.find(key);
  if (it == q.end() || it->second == "all") return std::optional<int>{};
  auto n = parse_number(it->second);
  if (!n || *n != static_cast<int>(*n) || *n < lo || *n > hi) return std::nullopt;
  return std::optional<int>{static_cast<int>(*n)};
}

}  // namespace

Bundle Bundle::open(const fs::path& dir) {
  pipeline::verify_manifest(dir);
  Bundle b;
  b.dir_ = dir;
  try {
    b.stations_ = ingest::read_stations(read_table(dir / "ingest" / "stations.csv"));
    b.profiles_ = regions::read_profiles(read_table(dir / "ingest" / "profiles.csv"));
    b.assignment_ = regions::read_assignments(read_table(dir / "regions" / "assignments.csv"));
    b.zscores_ = read_table(dir / "regions" / "zscores.csv");
    b.dendrogram_ = json::parse(read_file(dir / "regions" / "dendrogram.json"));
    b.cells_ = errors::read_error_cells(read_table(dir / "errors" / "error_cells.csv"));
    b.correlations_ = errors::read_correlations(read_table(dir / "errors" / "correlations.csv"));
    b.importance_ = importance::read_importance(read_table(dir / "importance" / "importance.csv"));
    b.geometry_ = json::parse(read_file(dir / "glyphs" / "geometry.json"));
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Bundle, std::string("bundle: ") + e.what());
  }
  return b;
}

Response Bundle::handle(std::string_view path, const Query& query) const {
  try {
    if (path == "/api/stations") return stations();
    constexpr std::string_view station_prefix = "/api/stations/";
    if (path.starts_with(station_prefix) && path.size() > station_prefix.size())
      return station(std::string(path.substr(station_prefix.size())));
    if (path == "/api/regions") return regions();
    if (path == "/api/errors") return error_cells(query);
    if (path == "/api/correlations") return correlations();
    if (path == "/api/importance") return importance(query);
    if (path == "/api/glyphs") return glyphs(query);
  } catch (const std::exception& e) {
    return fail(500, e.what());
  }
  return fail(404, "no such endpoint: " + std::string(path));
}

Response Bundle::stations() const {
  std::map<std::string, const regions::AssignmentRow*> by_id;
  for (const auto& a : assignment_) by_id[a.station_id] = &a;
  json list = json::array();
  for (const auto& s : stations_) {
    json j = {{"station_id", s.station_id},
              {"name", s.name},
              {"longitude", s.longitude},
              {"latitude", s.latitude},
              {"elevation", val(s.elevation)},
              {"distance_to_coast", val(s.distance_to_coast)}};
    auto it = by_id.find(s.station_id);
    j["label"] = it == by_id.end() ? json(nullptr) : json(it->second->label);
    j["region"] = it == by_id.end() ? json(nullptr) : json(it->second->region);
    list.push_back(std::move(j));
  }
  return ok({{"stations", std::move(list)}});
}

Response Bundle::station(const std::string& id) const {
  auto s = std::find_if(stations_.begin(), stations_.end(), [&](const auto& m) { return m.station_id == id; });
  if (s == stations_.end()) return fail(404, "unknown station: " + id);
  json j = {{"station_id", s->station_id},
            {"name", s->name},
            {"longitude", s->longitude},
            {"latitude", s->latitude},
            {"elevation", val(s->elevation)},
            {"distance_to_coast", val(s->distance_to_coast)}};
  for (const auto& a : assignment_)
    if (a.station_id == id) {
      j["label"] = a.label;
      j["region"] = a.region;
    }
  for (const auto& p : profiles_)
    if (p.station_id == id) {
      json prof = json::object();
      for (const auto& info : ingest::variables()) {
        auto v = *ingest::variable_from_name(info.name);
        prof[std::string(info.name)] = {{"mean", val(p.mean[ingest::index(v)])}, {"sd", val(p.sd[ingest::index(v)])}};
      }
      j["profile"] = std::move(prof);
    }
  json cells = json::array();
  for (const auto& c : cells_)
    if (c.station_id == id) cells.push_back(cell_json(c));
  j["errors"] = std::move(cells);
  json glyphs = json::array();
  for (const auto& g : geometry_.at("glyphs"))
    if (g.at("station_id") == id) glyphs.push_back(g);
  j["glyphs"] = std::move(glyphs);
  return ok(std::move(j));
}

Response Bundle::regions() const {
  std::map<int, std::pair<std::string, std::vector<std::string>>> groups;
  for (const auto& a : assignment_) {
    groups[a.label].first = a.region;
    groups[a.label].second.push_back(a.station_id);
  }
  // Mean z-score of every feature within each region.
  std::map<std::string, int> label_of;
  for (const auto& a : assignment_) label_of[a.station_id] = a.label;
  const std::size_t nf = zscores_.header.size() - 1;
  std::map<int, std::vector<double>> sums;
  std::map<int, std::size_t> counts;
  json rows = json::array();
  for (const auto& r : zscores_.rows) {
    json zs = json::array();
    std::vector<double> v(nf);
    for (std::size_t f = 0; f < nf; ++f) {
      v[f] = parse_number(r[f + 1]).value_or(0.0);
      zs.push_back(v[f]);
    }
    rows.push_back({{"station_id", r[0]}, {"z", std::move(zs)}});
    auto it = label_of.find(r[0]);
    if (it == label_of.end()) continue;
    auto& s = sums[it->second];
    s.resize(nf, 0.0);
    for (std::size_t f = 0; f < nf; ++f) s[f] += v[f];
    ++counts[it->second];
  }
  json list = json::array();
  for (const auto& [label, g] : groups) {
    json centroid = json::array();
    if (auto it = sums.find(label); it != sums.end())
      for (double x : it->second) centroid.push_back(x / static_cast<double>(counts[label]));
    list.push_back({{"label", label},
                    {"name", g.first},
                    {"size", g.second.size()},
                    {"stations", g.second},
                    {"mean_z", std::move(centroid)}});
  }
  json features(std::vector<std::string>(zscores_.header.begin() + 1, zscores_.header.end()));
  return ok({{"regions", std::move(list)},
             {"features", std::move(features)},
             {"zscores", std::move(rows)},
             {"dendrogram", dendrogram_}});
}

Response Bundle::error_cells(const Query& q) const {
  auto lag = parse_selector(q, "lag", 0, ingest::kMaxLag);
  if (!lag) return fail(400, "lag must be \"all\" or an integer 0..5");
  auto month = parse_selector(q, "month", 1, 12);
  if (!month) return fail(400, "month must be \"all\" or an integer 1..12");
  json list = json::array();
  for (const auto& c : cells_)
    if (c.lag == *lag && c.month == *month) list.push_back(cell_json(c));
  return ok({{"lag", *lag ? json(**lag) : json("all")},
             {"month", *month ? json(**month) : json("all")},
             {"cells", std::move(list)}});
}

Response Bundle::correlations() const {
  json list = json::array();
  for (const auto& c : correlations_)
    list.push_back({{"label", c.label},
                    {"region", c.region},
                    {"var_x", c.var_x},
                    {"var_y", c.var_y},
                    {"n", c.n},
                    {"rho", val(c.rho)},
                    {"p_value", val(c.p_value)},
                    {"significant", c.significant}});
  return ok({{"correlations", std::move(list)}});
}

Response Bundle::importance(const Query& q) const {
  std::optional<std::string> metric;
  if (auto it = q.find("metric"); it != q.end()) {
    if (std::find(errors::kMetrics.begin(), errors::kMetrics.end(), it->second) == errors::kMetrics.end())
      return fail(400, "metric must be one of min_temp, max_temp, precip");
    metric = it->second;
  }
  json list = json::array();
  for (const auto& r : importance_) {
    if (metric && r.error_variable != *metric) continue;
    list.push_back({{"label", r.label},
                    {"region", r.region},
                    {"error_variable", r.error_variable},
                    {"predictor", r.predictor},
                    {"raw", r.raw},
                    {"rescaled", r.rescaled}});
  }
  return ok({{"importance", std::move(list)}});
}

Response Bundle::glyphs(const Query& q) const {
  std::optional<std::string> metric;
  if (auto it = q.find("metric"); it != q.end()) {
    if (std::find(errors::kMetrics.begin(), errors::kMetrics.end(), it->second) == errors::kMetrics.end())
      return fail(400, "metric must be one of min_temp, max_temp, precip");
    metric = it->second;
  }
  json out = geometry_;
  if (metric) {
    json kept = json::array();
    for (const auto& g : geometry_.at("glyphs"))
      if (g.at("metric") == *metric) kept.push_back(g);
    out["glyphs"] = std::move(kept);
  }
  return ok(std::move(out));
}

// ---- HTTP -------------------------------------------------------------------------

Server::Server(std::shared_ptr<const Bundle> bundle, std::optional<fs::path> static_dir)
    : bundle_(std::move(bundle)), http_(std::make_unique<httplib::Server>()) {
  http_->Get(R"(/api/.*)", [b = bundle_](const httplib::Request& req, httplib::Response& res) {
    Query q;
    for (const auto& [k, v] : req.params) q.emplace(k, v);
    auto r = b->handle(req.path, q);
    res.status = r.status;
    res.set_content(r.body, "application/json");
  });
  if (static_dir && !http_->set_mount_point("/", static_dir->string()))
    throw Error(ErrorKind::Io, "static directory not found: " + static_dir->string());
}

Server::~Server() { stop(); }

int Server::start(const std::string& host, int port) {
  int bound = port == 0 ? http_->bind_to_any_port(host) : (http_->bind_to_port(host, port) ? port : -1);
  if (bound <= 0) throw Error(ErrorKind::Io, "cannot bind " + host + ":" + std::to_string(port));
  thread_ = std::thread([this] { http_->listen_after_bind(); });
  http_->wait_until_ready();
  return bound;
}

void Server::stop() {
  if (http_) http_->stop();
  if (thread_.joinable()) thread_.join();
}

void Server::wait() {
  if (thread_.joinable()) thread_.join();
}

Response handle_url(const Bundle& bundle, std::string_view path_and_query) {
  auto qpos = path_and_query.find('?');
  std::string path = httplib::detail::decode_url(std::string(path_and_query.substr(0, qpos)), false);
  Query q;
  if (qpos != std::string_view::npos) {
    httplib::Params params;
    httplib::detail::parse_query_text(std::string(path_and_query.substr(qpos + 1)), params);
    for (const auto& [k, v] : params) q.emplace(k, v);
  }
  return bundle.handle(path, q);
}

int port_from_env(int fallback) {
  const char* env = std::getenv("WXSKILL_PORT");
  if (!env) return fallback;
  auto n = parse_number(env);
  if (!n || *n != static_cast<int>(*n) || *n < 0 || *n > 65535) return fallback;
  return static_cast<int>(*n);
}

}  // namespace wxskill::service
