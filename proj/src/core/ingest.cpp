#include "core/ingest.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <numbers>
#include <tuple>
#include <unordered_map>

namespace wxskill::ingest {

namespace {

constexpr std::array<VariableInfo, kVariableCount> kVariables{{
    {"min_temp", -37.0, 127.0, false, false},
    {"max_temp", -37.0, 127.0, false, false},
    {"precipitation", 0.0, 12.95, false, false},
    {"min_dew", -50.0, 90.0, false, false},
    {"max_dew", -50.0, 90.0, false, false},
    {"min_humidity", 0.0, 100.0, true, false},
    {"max_humidity", 0.0, 100.0, true, false},
    {"min_slp", 28.2, 31.2, false, false},
    {"max_slp", 28.2, 31.2, false, false},
    {"mean_wind", 0.0, 70.0, false, false},
    {"max_wind", 0.0, 70.0, false, false},
    {"min_visibility", 0.0, 10.0, false, false},
    {"cloud_cover", 0.0, 8.0, false, true},
}};

bool is_missing_token(std::string_view cell) {
  std::string t = to_lower(trim(cell));
  return t.empty() || t == "na" || t == "n/a" || t == "nan" || t == "-" || t == "null";
}

// Tallies bad cells per column so a large file yields one line per column.
class CellWarnings {
 public:
  void note(const std::string& column, std::size_t row, std::string_view cell) {
    auto& e = entries_[column];
    if (e.count++ == 0) {
      e.first_row = row;
      e.example = std::string(cell);
    }
  }
  void flush(Diagnostics& diag, std::string_view context) const {
    for (const auto& [col, e] : entries_)
      diag.warn(std::string(context) + ": " + std::to_string(e.count) + " unparseable cell(s) in column \"" +
                col + "\" set absent (first at data row " + std::to_string(e.first_row + 1) + ": \"" +
                e.example + "\")");
  }

 private:
  struct Entry {
    std::size_t count = 0;
    std::size_t first_row = 0;
    std::string example;
  };
  std::map<std::string, Entry> entries_;
};

const std::string& cell(const std::vector<std::string>& row, std::size_t i) {
  static const std::string empty;
  return i < row.size() ? row[i] : empty;
}

// Station reference used by patch rows: id, full name, or unique city.
std::optional<std::string> resolve_station(std::string_view ref, std::span<const StationMeta> stations) {
  for (const auto& s : stations)
    if (s.station_id == ref) return s.station_id;
  std::string lref = to_lower(trim(ref));
  for (const auto& s : stations)
    if (to_lower(s.name) == lref) return s.station_id;
  // Fall back to the city alone so "Salmon, Idaho" still finds "Salmon, ID".
  std::string lcity = trim(lref.substr(0, lref.find(',')));
  std::optional<std::string> hit;
  for (const auto& s : stations) {
    auto comma = s.name.find(',');
    if (to_lower(trim(s.name.substr(0, comma))) == lcity) {
      if (hit) return std::nullopt;
      hit = s.station_id;
    }
  }
  return hit;
}

}  // namespace

const std::array<VariableInfo, kVariableCount>& variables() { return kVariables; }

std::string_view variable_name(Variable v) { return kVariables[index(v)].name; }

std::optional<Variable> variable_from_name(std::string_view name) {
  for (std::size_t i = 0; i < kVariableCount; ++i)
    if (kVariables[i].name == name) return static_cast<Variable>(i);
  return std::nullopt;
}

bool in_range(Variable v, double x) {
  const auto& info = kVariables[index(v)];
  if (!std::isfinite(x)) return false;
  if (info.lo_open ? !(x > info.lo) : !(x >= info.lo)) return false;
  if (x > info.hi) return false;
  if (info.integral && x != std::floor(x)) return false;
  return true;
}

std::vector<StationMeta> parse_locations(const Table& table, const LocationSchema& schema,
                                         Diagnostics& diag) {
  const auto ctx = "locations";
  auto c_id = table.require_column(schema.station_id, ctx);
  auto c_lon = table.require_column(schema.longitude, ctx);
  auto c_lat = table.require_column(schema.latitude, ctx);
  auto c_city = table.column(schema.city);
  auto c_state = table.column(schema.state);
  auto c_elev = table.column(schema.elevation);
  if (!c_elev) diag.warn("locations: no \"" + schema.elevation + "\" column; elevation absent for every station");

  std::vector<StationMeta> out;
  std::map<std::string, std::size_t> seen;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    StationMeta s;
    s.station_id = trim(cell(row, c_id));
    if (s.station_id.empty())
      throw Error(ErrorKind::Parse, "locations: empty station id at data row " + std::to_string(r + 1));
    if (auto [it, fresh] = seen.emplace(s.station_id, r); !fresh)
      throw Error(ErrorKind::Parse, "locations: duplicate station id \"" + s.station_id + "\"");
    std::string city = c_city ? trim(cell(row, *c_city)) : std::string{};
    std::string state = c_state ? trim(cell(row, *c_state)) : std::string{};
    s.name = state.empty() ? city : city + ", " + state;
    if (s.name.empty()) s.name = s.station_id;
    auto lon = parse_number(cell(row, c_lon));
    auto lat = parse_number(cell(row, c_lat));
    if (!lon || !lat || *lon < -180 || *lon > 180 || *lat < -90 || *lat > 90)
      throw Error(ErrorKind::Parse, "locations: invalid coordinates for station \"" + s.station_id + "\"");
    s.longitude = *lon;
    s.latitude = *lat;
    if (c_elev) {
      auto e = parse_number(cell(row, *c_elev));
      if (e && *e >= kElevationMin && *e <= kElevationMax) {
        s.elevation = e;
      } else {
        diag.warn("locations: elevation for \"" + s.station_id + "\" missing or outside [3, 7422] ft; set absent");
      }
    }
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<DailyRecord> parse_measurements(const Table& table, const MeasurementSchema& schema,
                                            Diagnostics& diag) {
  const auto ctx = "measurements";
  auto column_for = [&](const std::string& src, std::string_view canonical) {
    auto c = table.column(src);
    if (!c)
      throw Error(ErrorKind::Parse, std::string(ctx) + ": missing required column \"" + src + "\" (" +
                                        std::string(canonical) + ")");
    return *c;
  };
  auto c_id = column_for(schema.station_id, "station_id");
  auto c_date = column_for(schema.date, "date");
  std::array<std::size_t, kVariableCount> c_var{};
  for (std::size_t v = 0; v < kVariableCount; ++v) c_var[v] = column_for(schema.columns[v], kVariables[v].name);
  auto c_gust = table.column(schema.max_gust);
  auto c_events = table.column(schema.events);

  CellWarnings bad;
  std::vector<DailyRecord> out;
  out.reserve(table.rows.size());
  std::size_t bad_dates = 0;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    auto date = parse_date(cell(row, c_date));
    if (!date) {
      ++bad_dates;
      continue;
    }
    DailyRecord rec;
    rec.station_id = trim(cell(row, c_id));
    rec.date = *date;
    auto read = [&](std::size_t col, const std::string& name, bool precip) -> Value {
      const auto& text = cell(row, col);
      if (precip && trim(text) == schema.trace_token) return schema.trace_value;
      if (is_missing_token(text)) return std::nullopt;
      auto v = parse_number(text);
      if (!v) bad.note(name, r, text);
      return v;
    };
    for (std::size_t v = 0; v < kVariableCount; ++v)
      rec.values[v] = read(c_var[v], schema.columns[v], v == index(Variable::Precipitation));
    if (c_gust) rec.max_gust = read(*c_gust, schema.max_gust, false);
    if (c_events) rec.events = trim(cell(row, *c_events));
    out.push_back(std::move(rec));
  }
  bad.flush(diag, ctx);
  if (bad_dates) diag.warn("measurements: " + std::to_string(bad_dates) + " row(s) with unparseable date skipped");
  return out;
}

std::vector<ForecastRecord> parse_forecasts(const Table& table, const ForecastSchema& schema,
                                            std::span<const StationMeta> stations,
                                            Diagnostics& diag) {
  const auto ctx = "forecasts";
  auto c_station = table.require_column(schema.station, ctx);
  auto c_target = table.require_column(schema.target_date, ctx);
  auto c_value = table.require_column(schema.value, ctx);
  auto c_kind = table.require_column(schema.kind, ctx);
  std::optional<std::size_t> c_issue, c_lag;
  if (!schema.lag.empty())
    c_lag = table.require_column(schema.lag, ctx);
  else
    c_issue = table.require_column(schema.issue_date, ctx);

  std::size_t skipped_station = 0, skipped_date = 0, skipped_value = 0, skipped_kind = 0, bad_prob = 0;
  std::vector<ForecastRecord> out;
  out.reserve(table.rows.size());
  for (const auto& row : table.rows) {
    ForecastRecord rec;
    std::string station = trim(cell(row, c_station));
    if (schema.station_is_index) {
      auto idx = parse_number(station);
      if (!idx || *idx < 1 || *idx > static_cast<double>(stations.size()) || *idx != std::floor(*idx)) {
        ++skipped_station;
        continue;
      }
      rec.station_id = stations[static_cast<std::size_t>(*idx) - 1].station_id;
    } else {
      rec.station_id = station;
    }
    auto target = parse_date(cell(row, c_target));
    if (!target) {
      ++skipped_date;
      continue;
    }
    rec.target_date = *target;
    if (c_lag) {
      auto lag = parse_number(cell(row, *c_lag));
      if (!lag || *lag != std::floor(*lag)) {
        ++skipped_date;
        continue;
      }
      rec.lag = static_cast<int>(*lag);
    } else {
      auto issued = parse_date(cell(row, *c_issue));
      if (!issued) {
        ++skipped_date;
        continue;
      }
      rec.lag = static_cast<int>((*target - *issued).count());
    }
    auto value = parse_number(cell(row, c_value));
    if (!value) {
      ++skipped_value;
      continue;
    }
    const std::string kind = trim(cell(row, c_kind));
    if (kind == schema.min_temp_kind) {
      rec.fmin_temp = value;
    } else if (kind == schema.max_temp_kind) {
      rec.fmax_temp = value;
    } else if (kind == schema.precip_kind) {
      double p = schema.precip_in_percent ? *value / 100.0 : *value;
      if (p < 0.0 || p > 1.0) {
        ++bad_prob;
        continue;
      }
      rec.precip_prob = p;
    } else {
      ++skipped_kind;
      continue;
    }
    out.push_back(std::move(rec));
  }
  auto note = [&](std::size_t n, const char* what) {
    if (n) diag.warn(std::string(ctx) + ": " + std::to_string(n) + " row(s) skipped: " + what);
  };
  note(skipped_station, "unknown station");
  note(skipped_date, "unparseable date or lag");
  note(skipped_value, "missing or unparseable value");
  note(skipped_kind, "unknown forecast kind");
  note(bad_prob, "precipitation probability outside [0, 1]");
  return out;
}

PatchSet parse_patches(const Table& table) {
  const auto ctx = "patches";
  auto c_station = table.require_column("station_id", ctx);
  auto c_date = table.require_column("date", ctx);
  auto c_var = table.require_column("variable", ctx);
  auto c_action = table.require_column("action", ctx);
  auto c_value = table.require_column("value", ctx);

  PatchSet out;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    const std::string where = "patches row " + std::to_string(r + 1);
    if (trim(cell(row, c_station)).starts_with("#")) continue;
    Patch p;
    p.station = trim(cell(row, c_station));
    std::string date = trim(cell(row, c_date));
    if (!date.empty() && date != "*") {
      p.date = parse_date(date);
      if (!p.date) throw Error(ErrorKind::Config, where + ": bad date \"" + date + "\"");
    }
    auto var = variable_from_name(trim(cell(row, c_var)));
    if (!var) throw Error(ErrorKind::Config, where + ": unknown variable \"" + cell(row, c_var) + "\"");
    p.variable = *var;
    const std::string action = to_lower(trim(cell(row, c_action)));
    const std::string value = trim(cell(row, c_value));
    auto need_number = [&] {
      auto v = parse_number(value);
      if (!v) throw Error(ErrorKind::Config, where + ": action \"" + action + "\" needs a numeric value");
      return v;
    };
    if (action == "remove") {
      p.action = PatchAction::Remove;
    } else if (action == "replace") {
      p.action = PatchAction::Replace;
      p.value = need_number();
      if (!in_range(p.variable, *p.value))
        throw Error(ErrorKind::Config, where + ": replacement value outside the variable's valid range");
    } else if (action == "remove_below") {
      p.action = PatchAction::RemoveBelow;
      p.value = need_number();
    } else if (action == "remove_above") {
      p.action = PatchAction::RemoveAbove;
      p.value = need_number();
    } else if (action == "fill_from") {
      p.action = PatchAction::FillFrom;
      if (value.empty()) throw Error(ErrorKind::Config, where + ": fill_from needs a source station");
      p.source_station = value;
    } else {
      throw Error(ErrorKind::Config, where + ": unknown action \"" + action + "\"");
    }
    out.push_back(std::move(p));
  }
  return out;
}

std::vector<DailyRecord> apply_range_filters(std::vector<DailyRecord> records, RangeFilterCounts* counts) {
  RangeFilterCounts local;
  for (auto& rec : records) {
    for (std::size_t v = 0; v < kVariableCount; ++v) {
      auto& cell = rec.values[v];
      if (cell && !in_range(static_cast<Variable>(v), *cell)) {
        cell.reset();
        ++local.removed[v];
      }
    }
    if (rec.max_gust && !(*rec.max_gust >= kWindMin && *rec.max_gust <= kWindMax)) {
      rec.max_gust.reset();
      ++local.gust_removed;
    }
  }
  if (counts) *counts = local;
  return records;
}

std::vector<DailyRecord> apply_patches(std::vector<DailyRecord> records, const PatchSet& patches,
                                       std::span<const StationMeta> stations, Diagnostics& diag,
                                       PatchCounts* counts) {
  PatchCounts local;
  std::map<std::string, std::map<Date, std::size_t>> by_station;
  for (std::size_t i = 0; i < records.size(); ++i) by_station[records[i].station_id][records[i].date] = i;

  for (const auto& p : patches) {
    auto id = resolve_station(p.station, stations);
    auto it = id ? by_station.find(*id) : by_station.end();
    if (it == by_station.end()) {
      diag.warn("patch skipped: no records for station \"" + p.station + "\"");
      ++local.skipped;
      continue;
    }
    std::vector<std::size_t> targets;
    if (p.date) {
      auto d = it->second.find(*p.date);
      if (d == it->second.end()) {
        diag.warn("patch skipped: no record for \"" + p.station + "\" on " + format_date(*p.date));
        ++local.skipped;
        continue;
      }
      targets.push_back(d->second);
    } else {
      for (const auto& [date, idx] : it->second) targets.push_back(idx);
    }

    const std::map<Date, std::size_t>* source = nullptr;
    if (p.action == PatchAction::FillFrom) {
      auto src_id = resolve_station(p.source_station, stations);
      auto src = src_id ? by_station.find(*src_id) : by_station.end();
      if (src == by_station.end()) {
        diag.warn("patch skipped: no records for source station \"" + p.source_station + "\"");
        ++local.skipped;
        continue;
      }
      source = &src->second;
    }

    for (auto idx : targets) {
      auto& cell = records[idx][p.variable];
      switch (p.action) {
        case PatchAction::Remove:
          if (cell) ++local.removed;
          cell.reset();
          break;
        case PatchAction::Replace:
          cell = p.value;
          ++local.replaced;
          break;
        case PatchAction::RemoveBelow:
          if (cell && *cell < *p.value) {
            cell.reset();
            ++local.removed;
          }
          break;
        case PatchAction::RemoveAbove:
          if (cell && *cell > *p.value) {
            cell.reset();
            ++local.removed;
          }
          break;
        case PatchAction::FillFrom:
          if (!cell) {
            auto s = source->find(records[idx].date);
            if (s != source->end() && records[s->second][p.variable]) {
              cell = records[s->second][p.variable];
              ++local.filled;
            }
          }
          break;
      }
    }
  }
  if (counts) *counts = local;
  return records;
}

Value fuse_wind(Value max_wind_speed, Value max_gust) {
  if (max_wind_speed && max_gust) return std::min(*max_wind_speed, *max_gust);
  return max_wind_speed ? max_wind_speed : max_gust;
}

std::vector<ForecastRecord> dedupe_forecasts(std::vector<ForecastRecord> records) {
  auto key = [](const ForecastRecord& r) { return std::tie(r.station_id, r.target_date, r.lag); };
  std::stable_sort(records.begin(), records.end(),
                   [&](const ForecastRecord& a, const ForecastRecord& b) { return key(a) < key(b); });
  auto merge = [](Value& into, const Value& from, bool take_max) {
    if (!from) return;
    if (!into || (take_max ? *from > *into : *from < *into)) into = from;
  };
  std::vector<ForecastRecord> out;
  for (auto& r : records) {
    if (!out.empty() && key(out.back()) == key(r)) {
      auto& m = out.back();
      merge(m.fmin_temp, r.fmin_temp, false);
      merge(m.fmax_temp, r.fmax_temp, true);
      merge(m.precip_prob, r.precip_prob, true);
    } else {
      out.push_back(std::move(r));
    }
  }
  return out;
}

std::vector<ForecastRecord> filter_lags(std::vector<ForecastRecord> records) {
  std::erase_if(records, [](const ForecastRecord& r) { return r.lag < 0 || r.lag > kMaxLag; });
  return records;
}

double haversine_miles(double lon1, double lat1, double lon2, double lat2) {
  constexpr double deg = std::numbers::pi / 180.0;
  const double dlat = (lat2 - lat1) * deg;
  const double dlon = (lon2 - lon1) * deg;
  const double a = std::sin(dlat / 2) * std::sin(dlat / 2) +
                   std::cos(lat1 * deg) * std::cos(lat2 * deg) * std::sin(dlon / 2) * std::sin(dlon / 2);
  return 2.0 * kEarthRadiusMiles * std::asin(std::min(1.0, std::sqrt(a)));
}

std::vector<LonLat> parse_shoreline(const Table& table) {
  auto c_lon = table.column("longitude").value_or(0);
  auto c_lat = table.column("latitude").value_or(1);
  std::vector<LonLat> out;
  out.reserve(table.rows.size());
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    auto lon = parse_number(cell(table.rows[r], c_lon));
    auto lat = parse_number(cell(table.rows[r], c_lat));
    if (!lon || !lat)
      throw Error(ErrorKind::Config, "shoreline: bad vertex at data row " + std::to_string(r + 1));
    out.push_back({*lon, *lat});
  }
  return out;
}

double distance_to_coast(LonLat station, std::span<const LonLat> shoreline) {
  if (shoreline.empty()) throw Error(ErrorKind::Config, "shoreline vertex list is empty");
  double best = std::numeric_limits<double>::infinity();
  for (const auto& v : shoreline) best = std::min(best, haversine_miles(station.lon, station.lat, v.lon, v.lat));
  return best;
}

bool detect_precip_event(const DailyRecord& record) {
  const auto& p = record[Variable::Precipitation];
  if (p && *p > 0.0) return true;
  std::string ev = to_lower(record.events);
  return ev.find("rain") != std::string::npos || ev.find("snow") != std::string::npos;
}

bool has_precip_observation(const DailyRecord& record) {
  return record[Variable::Precipitation].has_value() || detect_precip_event(record);
}

// ---- canonical tables ----------------------------------------------------------

std::string write_stations(std::span<const StationMeta> stations) {
  CsvWriter w({"station_id", "name", "longitude", "latitude", "elevation", "distance_to_coast"});
  for (const auto& s : stations)
    w.add_row({s.station_id, s.name, format_number(s.longitude), format_number(s.latitude),
               format_value(s.elevation), format_value(s.distance_to_coast)});
  return w.str();
}

std::string write_measurements(std::span<const DailyRecord> records) {
  std::vector<std::string> header{"station_id", "date"};
  for (const auto& v : kVariables) header.emplace_back(v.name);
  header.emplace_back("events");
  CsvWriter w(std::move(header));
  for (const auto& r : records) {
    std::vector<std::string> row{r.station_id, format_date(r.date)};
    for (const auto& v : r.values) row.push_back(format_value(v));
    row.push_back(r.events);
    w.add_row(std::move(row));
  }
  return w.str();
}

std::string write_forecasts(std::span<const ForecastRecord> records) {
  CsvWriter w({"station_id", "target_date", "lag", "fmin_temp", "fmax_temp", "precip_prob"});
  for (const auto& r : records)
    w.add_row({r.station_id, format_date(r.target_date), std::to_string(r.lag), format_value(r.fmin_temp),
               format_value(r.fmax_temp), format_value(r.precip_prob)});
  return w.str();
}

std::vector<StationMeta> read_stations(const Table& t) {
  const auto ctx = "stations";
  auto c_id = t.require_column("station_id", ctx), c_name = t.require_column("name", ctx),
       c_lon = t.require_column("longitude", ctx), c_lat = t.require_column("latitude", ctx),
       c_el = t.require_column("elevation", ctx), c_d = t.require_column("distance_to_coast", ctx);
  std::vector<StationMeta> out;
  for (const auto& row : t.rows) {
    StationMeta s;
    s.station_id = cell(row, c_id);
    s.name = cell(row, c_name);
    s.longitude = parse_number(cell(row, c_lon)).value_or(0);
    s.latitude = parse_number(cell(row, c_lat)).value_or(0);
    s.elevation = parse_number(cell(row, c_el));
    s.distance_to_coast = parse_number(cell(row, c_d));
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<DailyRecord> read_measurements(const Table& t) {
  const auto ctx = "clean measurements";
  auto c_id = t.require_column("station_id", ctx), c_date = t.require_column("date", ctx);
  std::array<std::size_t, kVariableCount> c_var{};
  for (std::size_t v = 0; v < kVariableCount; ++v) c_var[v] = t.require_column(kVariables[v].name, ctx);
  auto c_ev = t.require_column("events", ctx);
  std::vector<DailyRecord> out;
  out.reserve(t.rows.size());
  for (const auto& row : t.rows) {
    DailyRecord r;
    r.station_id = cell(row, c_id);
    auto d = parse_date(cell(row, c_date));
    if (!d) throw Error(ErrorKind::Parse, "clean measurements: bad date \"" + cell(row, c_date) + "\"");
    r.date = *d;
    for (std::size_t v = 0; v < kVariableCount; ++v) r.values[v] = parse_number(cell(row, c_var[v]));
    r.events = cell(row, c_ev);
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<ForecastRecord> read_forecasts(const Table& t) {
  const auto ctx = "clean forecasts";
  auto c_id = t.require_column("station_id", ctx), c_date = t.require_column("target_date", ctx),
       c_lag = t.require_column("lag", ctx), c_min = t.require_column("fmin_temp", ctx),
       c_max = t.require_column("fmax_temp", ctx), c_pp = t.require_column("precip_prob", ctx);
  std::vector<ForecastRecord> out;
  out.reserve(t.rows.size());
  for (const auto& row : t.rows) {
    ForecastRecord r;
    r.station_id = cell(row, c_id);
    auto d = parse_date(cell(row, c_date));
    auto lag = parse_number(cell(row, c_lag));
    if (!d || !lag) throw Error(ErrorKind::Parse, "clean forecasts: bad key for station \"" + r.station_id + "\"");
    r.target_date = *d;
    r.lag = static_cast<int>(*lag);
    r.fmin_temp = parse_number(cell(row, c_min));
    r.fmax_temp = parse_number(cell(row, c_max));
    r.precip_prob = parse_number(cell(row, c_pp));
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace wxskill::ingest
