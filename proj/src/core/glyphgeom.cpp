#include "core/glyphgeom.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>

#include "json.hpp"

namespace wxskill::glyphgeom {

using json = nlohmann::ordered_json;
using std::numbers::pi;

namespace {
constexpr double kDeg = pi / 180.0;

double sign(double v) { return v < 0 ? -1.0 : 1.0; }
}  // namespace

Point albers(double lon, double lat, const ProjectionConfig& cfg) {
  if (!std::isfinite(lon) || !std::isfinite(lat) || std::abs(lat) >= 90.0)
    throw Error(ErrorKind::InvalidArgument, "project: latitude " + format_number(lat) + " is at or beyond a pole");
  const double phi1 = cfg.standard_parallel_1 * kDeg, phi2 = cfg.standard_parallel_2 * kDeg;
  const double n = (std::sin(phi1) + std::sin(phi2)) / 2.0;
  const double c = std::cos(phi1) * std::cos(phi1) + 2.0 * n * std::sin(phi1);
  const double rho0 = cfg.radius_km * std::sqrt(c - 2.0 * n * std::sin(cfg.center_lat * kDeg)) / n;
  const double rho = cfg.radius_km * std::sqrt(c - 2.0 * n * std::sin(lat * kDeg)) / n;
  double dlon = lon - cfg.center_lon;
  while (dlon > 180.0) dlon -= 360.0;
  while (dlon < -180.0) dlon += 360.0;
  const double theta = n * dlon * kDeg;
  return {rho * std::sin(theta), rho0 - rho * std::cos(theta)};
}

Point project(double lon, double lat, const ProjectionConfig& cfg) {
  Point p = albers(lon, lat, cfg);
  for (const auto& in : cfg.insets) {
    if (lon < in.lon_min || lon > in.lon_max || lat < in.lat_min || lat > in.lat_max) continue;
    Point c = albers(in.center_lon, in.center_lat, cfg);
    return {in.target_x + in.scale * (p.x - c.x), in.target_y + in.scale * (p.y - c.y)};
  }
  return p;
}

double month_angle(int month) { return (4.0 - month) * pi / 6.0; }

std::optional<GlyphPolygon> seasonal_glyph(std::string station_id, std::string metric,
                                           std::span<const Value, kMonths> monthly, Point anchor, double alpha,
                                           double global_max, Diagnostics& diag) {
  if (!(alpha > 0)) throw Error(ErrorKind::InvalidArgument, "seasonal_glyph: alpha must be positive");
  if (!(global_max > 0)) throw Error(ErrorKind::InvalidArgument, "seasonal_glyph: global_max must be positive");
  if (std::none_of(monthly.begin(), monthly.end(), [](const Value& v) { return v.has_value(); })) {
    diag.warn("glyphs: no monthly values for \"" + station_id + "\" (" + metric + "); glyph skipped");
    return std::nullopt;
  }
  GlyphPolygon g;
  g.station_id = std::move(station_id);
  g.metric = std::move(metric);
  g.anchor = anchor;
  for (int m = 1; m <= kMonths; ++m) {
    const auto i = static_cast<std::size_t>(m - 1);
    const auto& v = monthly[i];
    if (v && (*v < 0 || *v > global_max))
      throw Error(ErrorKind::InvalidArgument, "seasonal_glyph: monthly value outside [0, global_max]");
    g.gap[i] = !v;
    g.radius[i] = v ? *v / global_max : 0.0;
    const double theta = month_angle(m);
    g.vertices[i] = {anchor.x + alpha * g.radius[i] * std::cos(theta), anchor.y + alpha * g.radius[i] * std::sin(theta)};
  }
  return g;
}

double nudge_correlation(double rho) {
  if (!std::isfinite(rho) || std::abs(rho) > 1.0)
    throw Error(ErrorKind::InvalidArgument, "correlation outside [-1, 1]");
  if (std::abs(rho) < kCorrelationEpsilon) return rho < 0 ? -kCorrelationEpsilon : kCorrelationEpsilon;
  if (std::abs(rho) > 1.0 - kCorrelationEpsilon) return sign(rho) * (1.0 - kCorrelationEpsilon);
  return rho;
}

double ellipse_radius(double rho, double theta) {
  rho = nudge_correlation(rho);
  const double a = std::abs(rho);
  const double e = std::sqrt(a * (2.0 - a));
  return (1.0 - a) * (1.0 - a) / (1.0 - e * std::cos(theta - sign(rho) * pi / 4.0));
}

std::vector<Point> unit_square_scale(std::vector<Point> pts) {
  double mx = 0, my = 0;
  for (const auto& p : pts) {
    mx = std::max(mx, std::abs(p.x));
    my = std::max(my, std::abs(p.y));
  }
  if (!(mx > 0) || !(my > 0)) throw Error(ErrorKind::Compute, "unit_square_scale: degenerate polygon");
  for (auto& p : pts) p = {p.x / (2.0 * mx), p.y / (2.0 * my)};
  return pts;
}

std::vector<Point> ellipse_polygon(double rho, std::size_t n_vertices) {
  if (n_vertices < 16) throw Error(ErrorKind::InvalidArgument, "ellipse_polygon: need at least 16 vertices");
  rho = nudge_correlation(rho);
  const double a = std::abs(rho);
  // The focus sits at the origin; the centre lies a distance e (semi-major
  // axis 1) along the tilted axis.
  const double shift = std::sqrt(a * (2.0 - a)) / std::numbers::sqrt2;
  std::vector<Point> pts;
  pts.reserve(n_vertices + 1);
  for (std::size_t k = 0; k < n_vertices; ++k) {
    const double theta = 2.0 * pi * static_cast<double>(k) / static_cast<double>(n_vertices);
    const double r = ellipse_radius(rho, theta);
    pts.push_back({r * std::cos(theta) - shift, r * std::sin(theta) - sign(rho) * shift});
  }
  pts = unit_square_scale(std::move(pts));
  pts.push_back(pts.front());
  return pts;
}

std::vector<SlotOverlap> measure_overlaps(std::span<const EllipseGeometry> placed) {
  struct Box {
    double x0, x1, y0, y1;
  };
  std::vector<Box> boxes;
  for (const auto& e : placed) {
    Box b{INFINITY, -INFINITY, INFINITY, -INFINITY};
    for (const auto& p : e.polyline) {
      b.x0 = std::min(b.x0, p.x);
      b.x1 = std::max(b.x1, p.x);
      b.y0 = std::min(b.y0, p.y);
      b.y1 = std::max(b.y1, p.y);
    }
    boxes.push_back(b);
  }
  std::vector<SlotOverlap> out;
  for (std::size_t i = 0; i < boxes.size(); ++i)
    for (std::size_t j = i + 1; j < boxes.size(); ++j) {
      const double w = std::min(boxes[i].x1, boxes[j].x1) - std::max(boxes[i].x0, boxes[j].x0);
      const double h = std::min(boxes[i].y1, boxes[j].y1) - std::max(boxes[i].y0, boxes[j].y0);
      if (w > 0 && h > 0) out.push_back({i, j, w, h});
    }
  return out;
}

std::vector<EllipseGeometry> place_ellipse_matrix(std::span<const errors::CorrelationResult> correlations,
                                                  Point anchor, double alpha, std::span<const Point> offsets,
                                                  Diagnostics& diag) {
  if (!(alpha > 0)) throw Error(ErrorKind::InvalidArgument, "place_ellipse_matrix: alpha must be positive");
  if (offsets.size() < correlations.size())
    throw Error(ErrorKind::InvalidArgument, "place_ellipse_matrix: fewer offsets than ellipses");
  std::vector<EllipseGeometry> out;
  for (std::size_t i = 0; i < correlations.size(); ++i) {
    const auto& c = correlations[i];
    if (!c.rho) {
      diag.warn("ellipses: no correlation for " + c.region + " " + c.var_x + "~" + c.var_y + "; slot left empty");
      continue;
    }
    EllipseGeometry e;
    e.label = c.label;
    e.region = c.region;
    e.var_x = c.var_x;
    e.var_y = c.var_y;
    e.rho = *c.rho;
    e.significant = c.significant;
    e.anchor = anchor;
    e.offset = offsets[i];
    for (const auto& p : ellipse_polygon(*c.rho))
      e.polyline.push_back({anchor.x + alpha * (p.x + offsets[i].x), anchor.y + alpha * (p.y + offsets[i].y)});
    out.push_back(std::move(e));
  }
  for (const auto& o : measure_overlaps(out))
    diag.warn("ellipses: slots " + std::to_string(o.a) + " and " + std::to_string(o.b) + " overlap by " +
              format_number(o.width) + " x " + format_number(o.height) + " projected units");
  return out;
}

std::string build_geometry(std::span<const errors::ErrorCell> cells,
                           std::span<const errors::CorrelationResult> correlations,
                           std::span<const regions::AssignmentRow> assignment, const ProjectionConfig& cfg,
                           Diagnostics& diag) {
  std::map<std::string, Point> anchor;
  json stations = json::array();
  for (const auto& a : assignment) {
    Point p = project(a.longitude, a.latitude, cfg);
    anchor[a.station_id] = p;
    stations.push_back({{"station_id", a.station_id}, {"label", a.label}, {"x", p.x}, {"y", p.y}});
  }

  // Monthly series (all lags) per station and metric; scale per metric
  // across the whole network.
  std::map<std::string, std::array<const errors::ErrorCell*, kMonths>> monthly;
  for (const auto& c : cells)
    if (!c.lag && c.month && *c.month >= 1 && *c.month <= kMonths)
      monthly[c.station_id][static_cast<std::size_t>(*c.month - 1)] = &c;

  json glyphs = json::array();
  json global_max = json::object();
  for (auto metric : errors::kMetrics) {
    double gmax = 0;
    for (const auto& [id, months] : monthly)
      for (const auto* c : months)
        if (c)
          if (auto v = errors::metric_value(*c, metric)) gmax = std::max(gmax, *v);
    global_max[std::string(metric)] = gmax;
    if (!(gmax > 0)) {
      diag.warn("glyphs: metric " + std::string(metric) + " has no positive monthly values; no glyphs");
      continue;
    }
    for (const auto& a : assignment) {
      auto it = monthly.find(a.station_id);
      if (it == monthly.end()) continue;
      std::array<Value, kMonths> series{};
      for (std::size_t m = 0; m < kMonths; ++m)
        if (it->second[m]) series[m] = errors::metric_value(*it->second[m], metric);
      auto g = seasonal_glyph(a.station_id, std::string(metric), series, anchor[a.station_id], cfg.alpha, gmax, diag);
      if (!g) continue;
      json verts = json::array(), radii = json::array(), gaps = json::array();
      for (std::size_t m = 0; m < kMonths; ++m) {
        verts.push_back({g->vertices[m].x, g->vertices[m].y});
        radii.push_back(g->radius[m]);
        if (g->gap[m]) gaps.push_back(m + 1);
      }
      glyphs.push_back({{"station_id", g->station_id},
                        {"metric", g->metric},
                        {"anchor", {g->anchor.x, g->anchor.y}},
                        {"radii", std::move(radii)},
                        {"gap_months", std::move(gaps)},
                        {"vertices", std::move(verts)}});
    }
  }

  std::map<int, std::vector<Point>> members;
  for (const auto& a : assignment) members[a.label].push_back(anchor[a.station_id]);
  json ellipses = json::array();
  for (const auto& [label, pts] : members) {
    Point centroid;
    for (const auto& p : pts) {
      centroid.x += p.x / static_cast<double>(pts.size());
      centroid.y += p.y / static_cast<double>(pts.size());
    }
    std::vector<errors::CorrelationResult> mine;
    for (const auto& c : correlations)
      if (c.label == label) mine.push_back(c);
    for (const auto& e : place_ellipse_matrix(mine, centroid, cfg.alpha, cfg.offsets, diag)) {
      json verts = json::array();
      for (const auto& p : e.polyline) verts.push_back({p.x, p.y});
      ellipses.push_back({{"label", e.label},
                          {"region", e.region},
                          {"var_x", e.var_x},
                          {"var_y", e.var_y},
                          {"rho", e.rho},
                          {"significant", e.significant},
                          {"anchor", {e.anchor.x, e.anchor.y}},
                          {"offset", {e.offset.x, e.offset.y}},
                          {"vertices", std::move(verts)}});
    }
  }

  json insets = json::array();
  for (const auto& in : cfg.insets)
    insets.push_back({{"name", in.name},
                      {"lon_range", {in.lon_min, in.lon_max}},
                      {"lat_range", {in.lat_min, in.lat_max}},
                      {"scale", in.scale},
                      {"center", {in.center_lon, in.center_lat}},
                      {"target", {in.target_x, in.target_y}}});
  json offsets = json::array();
  for (const auto& o : cfg.offsets) offsets.push_back({o.x, o.y});
  json out = {{"schema_version", 1},
              {"projection",
               {{"kind", cfg.kind},
                {"standard_parallels", {cfg.standard_parallel_1, cfg.standard_parallel_2}},
                {"center", {cfg.center_lon, cfg.center_lat}},
                {"radius_km", cfg.radius_km},
                {"units", "km"},
                {"insets", std::move(insets)}}},
              {"alpha", cfg.alpha},
              {"ellipse_offsets", std::move(offsets)},
              {"global_max", std::move(global_max)},
              {"stations", std::move(stations)},
              {"glyphs", std::move(glyphs)},
              {"ellipses", std::move(ellipses)}};
  return out.dump() + "\n";
}

}  // namespace wxskill::glyphgeom
