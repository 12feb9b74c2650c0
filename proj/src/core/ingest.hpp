#pragma once

#include <array>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "core/common.hpp"
#include "core/table.hpp"

namespace wxskill::ingest {

// Daily weather variables retained for analysis, in canonical column order.
enum class Variable : std::size_t {
  MinTemp,
  MaxTemp,
  Precipitation,
  MinDew,
  MaxDew,
  MinHumidity,
  MaxHumidity,
  MinSlp,
  MaxSlp,
  MeanWind,
  MaxWind,
  MinVisibility,
  CloudCover,
};
inline constexpr std::size_t kVariableCount = 13;

struct VariableInfo {
  std::string_view name;
  double lo;
  double hi;
  bool lo_open;   // humidity is (0, 100]
  bool integral;  // cloud cover is okta 0..8
};

const std::array<VariableInfo, kVariableCount>& variables();
std::string_view variable_name(Variable v);
std::optional<Variable> variable_from_name(std::string_view name);
constexpr std::size_t index(Variable v) { return static_cast<std::size_t>(v); }

/// True when `x` lies inside the variable's validity range.
bool in_range(Variable v, double x);

inline constexpr double kElevationMin = 3.0, kElevationMax = 7422.0;
inline constexpr double kCoastDistanceMin = 0.0, kCoastDistanceMax = 807.0;
inline constexpr double kWindMin = 0.0, kWindMax = 70.0;
inline constexpr int kMaxLag = 5;

struct StationMeta {
  std::string station_id;
  std::string name;
  double longitude = 0;
  double latitude = 0;
  Value elevation;
  Value distance_to_coast;
};

struct DailyRecord {
  std::string station_id;
  Date date{};
  std::array<Value, kVariableCount> values{};
  Value max_gust;  // raw gust, consumed by wind fusion
  std::string events;

  Value& operator[](Variable v) { return values[index(v)]; }
  const Value& operator[](Variable v) const { return values[index(v)]; }
};

struct ForecastRecord {
  std::string station_id;
  Date target_date{};
  int lag = 0;
  Value fmin_temp;
  Value fmax_temp;
  Value precip_prob;
};

enum class PatchAction { Remove, Replace, RemoveBelow, RemoveAbove, FillFrom };

struct Patch {
  std::string station;        // station id or "City, State" name
  std::optional<Date> date;   // nullopt: every date of the station
  Variable variable{};
  PatchAction action{};
  Value value;                // replacement value or threshold
  std::string source_station; // FillFrom only
};
using PatchSet = std::vector<Patch>;

// ---- schemas ---------------------------------------------------------------

struct LocationSchema {
  std::string station_id = "AirPtCd";
  std::string city = "city";
  std::string state = "state";
  std::string longitude = "longitude";
  std::string latitude = "latitude";
  std::string elevation = "elevation";
  TableFormat format{};
};

struct MeasurementSchema {
  std::string station_id = "AirPtCd";
  std::string date = "Date";
  std::array<std::string, kVariableCount> columns{
      "Min_TemperatureF",         "Max_TemperatureF",         "PrecipitationIn",
      "Min_DewpointF",            "Max_Dew_PointF",           "Min_Humidity",
      "Max_Humidity",             "Min_Sea_Level_PressureIn", "Max_Sea_Level_PressureIn",
      "Mean_Wind_SpeedMPH",       "Max_Wind_SpeedMPH",        "Min_VisibilityMiles",
      "CloudCover"};
  std::string max_gust = "Max_Gust_SpeedMPH";
  std::string events = "Events";
  std::string trace_token = "T";  // trace precipitation
  double trace_value = 0.0;
  TableFormat format{};
};

struct ForecastSchema {
  std::string station = "V1";
  std::string target_date = "V2";
  std::string value = "V3";
  std::string kind = "V4";
  std::string issue_date = "V5";
  std::string lag;                 // when set, read the lag directly instead of issue_date
  bool station_is_index = true;    // 1-based row index into the locations table
  bool precip_in_percent = true;
  std::string min_temp_kind = "MinTemp";
  std::string max_temp_kind = "MaxTemp";
  std::string precip_kind = "ProbPrecip";
  TableFormat format{'\0', false};
};

// ---- operations ------------------------------------------------------------

std::vector<StationMeta> parse_locations(const Table& table, const LocationSchema& schema,
                                         Diagnostics& diag);

/// One record per row, order preserved. Missing columns are fatal; bad cells
/// become absent values with a warning.
std::vector<DailyRecord> parse_measurements(const Table& table, const MeasurementSchema& schema,
                                            Diagnostics& diag);

/// One raw record per forecast row; each carries a single quantity.
std::vector<ForecastRecord> parse_forecasts(const Table& table, const ForecastSchema& schema,
                                            std::span<const StationMeta> stations,
                                            Diagnostics& diag);

PatchSet parse_patches(const Table& table);

struct RangeFilterCounts {
  std::array<std::size_t, kVariableCount> removed{};
  std::size_t gust_removed = 0;
};

/// Nulls every out-of-range field; records are kept. Idempotent.
std::vector<DailyRecord> apply_range_filters(std::vector<DailyRecord> records,
                                             RangeFilterCounts* counts = nullptr);

struct PatchCounts {
  std::size_t removed = 0;
  std::size_t replaced = 0;
  std::size_t filled = 0;
  std::size_t skipped = 0;
};

std::vector<DailyRecord> apply_patches(std::vector<DailyRecord> records, const PatchSet& patches,
                                       std::span<const StationMeta> stations, Diagnostics& diag,
                                       PatchCounts* counts = nullptr);

/// Lower of the two wind measurements; the present one if only one is.
Value fuse_wind(Value max_wind_speed, Value max_gust);

/// Collapses duplicates per (station, target date, lag): lowest min-temp,
/// highest max-temp, highest precipitation probability. Output sorted by key.
std::vector<ForecastRecord> dedupe_forecasts(std::vector<ForecastRecord> records);

/// Keeps lags 0..5 only.
std::vector<ForecastRecord> filter_lags(std::vector<ForecastRecord> records);

inline constexpr double kEarthRadiusMiles = 3958.8;

double haversine_miles(double lon1, double lat1, double lon2, double lat2);

struct LonLat {
  double lon;
  double lat;
};

std::vector<LonLat> parse_shoreline(const Table& table);

/// Minimum great-circle distance from the station to any shoreline vertex.
double distance_to_coast(LonLat station, std::span<const LonLat> shoreline);

/// Precipitation event: measured precipitation > 0 or "rain"/"snow" in the
/// event text (case-insensitive).
bool detect_precip_event(const DailyRecord& record);

/// Whether a day carries enough information to decide an event at all.
bool has_precip_observation(const DailyRecord& record);

// ---- canonical clean tables --------------------------------------------------

std::string write_stations(std::span<const StationMeta> stations);
std::string write_measurements(std::span<const DailyRecord> records);
std::string write_forecasts(std::span<const ForecastRecord> records);

std::vector<StationMeta> read_stations(const Table& table);
std::vector<DailyRecord> read_measurements(const Table& table);
std::vector<ForecastRecord> read_forecasts(const Table& table);

}  // namespace wxskill::ingest
