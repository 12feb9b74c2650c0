#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "core/common.hpp"
#include "core/errors.hpp"
#include "core/regions.hpp"

namespace wxskill::glyphgeom {

struct Point {
  double x = 0;
  double y = 0;
  bool operator==(const Point&) const = default;
};

// Translate-and-scale inset for stations outside the contiguous US: points in
// the lon/lat box are projected, scaled about (center_lon, center_lat), and
// moved so that center lands on (target_x, target_y).
struct Inset {
  std::string name;
  double lon_min, lon_max, lat_min, lat_max;
  double scale;
  double center_lon, center_lat;
  double target_x, target_y;
};

struct ProjectionConfig {
  std::string kind = "albers_equal_area_conic";
  double standard_parallel_1 = 29.5;
  double standard_parallel_2 = 45.5;
  double center_lon = -96.0;
  double center_lat = 37.5;
  double radius_km = 6371.0;  // projected units are kilometres
  double alpha = 150.0;       // glyph radius / ellipse cell size, projected units
  std::vector<Point> offsets{{-1.1, 0.0}, {0.0, 0.0}, {1.1, 0.0}};
  std::vector<Inset> insets{
      {"alaska", -180.0, -129.0, 50.0, 72.0, 0.35, -150.0, 63.0, -1900.0, -1350.0},
      {"hawaii", -161.0, -154.0, 18.0, 23.0, 1.0, -157.5, 20.5, -900.0, -1450.0},
  };
};

/// Spherical Albers equal-area conic; (center_lon, center_lat) maps to (0, 0).
Point albers(double lon, double lat, const ProjectionConfig& cfg);

/// Albers plus the configured insets. Latitude at a pole is fatal.
Point project(double lon, double lat, const ProjectionConfig& cfg);

inline constexpr int kMonths = 12;

/// Polar angle of month m (1 = January at 12:00, proceeding clockwise).
double month_angle(int month);

struct GlyphPolygon {
  std::string station_id;
  std::string metric;
  Point anchor;
  std::array<double, kMonths> radius{};   // r_m in [0, 1]
  std::array<bool, kMonths> gap{};        // month absent, drawn at radius 0
  std::array<Point, kMonths> vertices{};  // January first
};

/// Star glyph of a 12-month series. Returns nullopt (with a warning) when
/// every month is absent.
std::optional<GlyphPolygon> seasonal_glyph(std::string station_id, std::string metric,
                                           std::span<const Value, kMonths> monthly, Point anchor, double alpha,
                                           double global_max, Diagnostics& diag);

inline constexpr double kCorrelationEpsilon = 1e-6;
inline constexpr std::size_t kEllipseVertices = 72;

/// Moves rho off {-1, 0, 1} by kCorrelationEpsilon.
double nudge_correlation(double rho);

/// Focus-centred polar radius of the correlation ellipse.
double ellipse_radius(double rho, double theta);

/// Closed polyline (first == last) of the ellipse centred at the origin and
/// scaled to touch the [-0.5, 0.5]^2 square on every side.
std::vector<Point> ellipse_polygon(double rho, std::size_t n_vertices = kEllipseVertices);

std::vector<Point> unit_square_scale(std::vector<Point> pts);

struct EllipseGeometry {
  int label = 0;
  std::string region;
  std::string var_x;
  std::string var_y;
  double rho = 0;
  bool significant = false;
  Point anchor;
  Point offset;
  std::vector<Point> polyline;
};

struct SlotOverlap {
  std::size_t a;
  std::size_t b;
  double width;   // overlap extent in x, projected units
  double height;  // overlap extent in y
};

std::vector<SlotOverlap> measure_overlaps(std::span<const EllipseGeometry> placed);

/// Places one ellipse per correlation at anchor + alpha * (x' + o1, y' + o2),
/// slot i using offsets[i]; overlapping slots are reported as warnings.
std::vector<EllipseGeometry> place_ellipse_matrix(std::span<const errors::CorrelationResult> correlations,
                                                  Point anchor, double alpha, std::span<const Point> offsets,
                                                  Diagnostics& diag);

/// Glyphs for every station and metric plus one ellipse matrix per region,
/// as the JSON geometry bundle.
std::string build_geometry(std::span<const errors::ErrorCell> cells,
                           std::span<const errors::CorrelationResult> correlations,
                           std::span<const regions::AssignmentRow> assignment, const ProjectionConfig& cfg,
                           Diagnostics& diag);

}  // namespace wxskill::glyphgeom
