#include "core/errors.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>

#include <boost/math/distributions/students_t.hpp>

namespace wxskill::errors {

double temp_abs_error(double forecast, double actual) { return std::abs(forecast - actual); }

double climatology(std::span<const int> outcomes) {
  if (outcomes.empty()) throw Error(ErrorKind::InvalidArgument, "climatology: empty outcome series");
  double s = 0;
  for (int o : outcomes) s += o;
  return s / static_cast<double>(outcomes.size());
}

BrierTerms brier_terms(const PrecipSeries& s, std::span<const int> lags) {
  BrierTerms t;
  for (std::size_t i = 0; i < s.outcomes.size(); ++i) {
    const double o = s.outcomes[i];
    for (int lag : lags) {
      const auto& y = s.probs[i][static_cast<std::size_t>(lag)];
      if (!y) continue;
      t.numerator += (*y - o) * (*y - o);
      t.denominator += (s.climatology - o) * (s.climatology - o);
      ++t.terms;
    }
  }
  return t;
}

double brier_skill_score(const PrecipSeries& s, std::span<const int> lags) {
  for (int lag : lags)
    if (lag < 0 || lag >= static_cast<int>(kLagCount))
      throw Error(ErrorKind::InvalidArgument, "brier_skill_score: lag out of range");
  if (s.climatology <= 0.0 || s.climatology >= 1.0)
    throw Error(ErrorKind::Compute,
                "brier_skill_score: undefined for station \"" + s.station_id + "\" (climatology is 0 or 1)");
  auto t = brier_terms(s, lags);
  if (t.terms == 0)
    throw Error(ErrorKind::Compute, "brier_skill_score: no forecast terms for station \"" + s.station_id + "\"");
  return 1.0 - t.numerator / t.denominator;
}

std::vector<StationData> join_station_data(std::span<const ingest::DailyRecord> records,
                                           std::span<const ingest::ForecastRecord> forecasts) {
  std::map<std::string, std::map<Date, const ingest::DailyRecord*>> days;
  for (const auto& r : records) days[r.station_id][r.date] = &r;

  std::map<std::string, StationData> out;
  std::map<std::string, std::map<Date, std::size_t>> pos;
  for (const auto& [id, byday] : days) {
    auto& s = out[id];
    s.station_id = id;
    auto& index = pos[id];
    std::size_t events = 0, decided = 0;
    for (const auto& [date, rec] : byday) {
      index[date] = s.dates.size();
      s.dates.push_back(date);
      s.obs_min.push_back((*rec)[ingest::Variable::MinTemp]);
      s.obs_max.push_back((*rec)[ingest::Variable::MaxTemp]);
      std::optional<int> o;
      if (ingest::has_precip_observation(*rec)) {
        o = ingest::detect_precip_event(*rec) ? 1 : 0;
        events += static_cast<std::size_t>(*o);
        ++decided;
      }
      s.outcome.push_back(o);
    }
    s.fmin.resize(s.dates.size());
    s.fmax.resize(s.dates.size());
    s.pprob.resize(s.dates.size());
    if (decided) s.climatology = static_cast<double>(events) / static_cast<double>(decided);
  }

  for (const auto& f : forecasts) {
    if (f.lag < 0 || f.lag >= static_cast<int>(kLagCount)) continue;
    auto st = pos.find(f.station_id);
    if (st == pos.end()) continue;
    auto d = st->second.find(f.target_date);
    if (d == st->second.end()) continue;
    auto& s = out[f.station_id];
    const auto lag = static_cast<std::size_t>(f.lag);
    if (f.fmin_temp) s.fmin[d->second][lag] = f.fmin_temp;
    if (f.fmax_temp) s.fmax[d->second][lag] = f.fmax_temp;
    if (f.precip_prob) s.pprob[d->second][lag] = f.precip_prob;
  }

  std::vector<StationData> v;
  v.reserve(out.size());
  for (auto& [id, s] : out) v.push_back(std::move(s));
  return v;
}

std::vector<ErrorCell> aggregate_errors(const StationData& s, Grouping g, Diagnostics& diag) {
  std::vector<std::optional<int>> lag_groups, month_groups;
  if (g.by_lag)
    for (int l = 0; l < static_cast<int>(kLagCount); ++l) lag_groups.emplace_back(l);
  else
    lag_groups.emplace_back(std::nullopt);
  if (g.by_month)
    for (int m = 1; m <= 12; ++m) month_groups.emplace_back(m);
  else
    month_groups.emplace_back(std::nullopt);

  const bool climatology_ok = s.climatology && *s.climatology > 0.0 && *s.climatology < 1.0;
  if (!climatology_ok && !g.by_lag && !g.by_month)
    diag.warn("errors: precipitation skill undefined for station \"" + s.station_id +
              "\" (climatology is 0, 1 or unknown)");

  std::vector<ErrorCell> out;
  for (const auto& lag : lag_groups) {
    std::vector<int> lags;
    if (lag)
      lags.push_back(*lag);
    else
      for (int l = 0; l < static_cast<int>(kLagCount); ++l) lags.push_back(l);

    for (const auto& month : month_groups) {
      ErrorCell c;
      c.station_id = s.station_id;
      c.lag = lag;
      c.month = month;
      double sum_min = 0, sum_max = 0;
      PrecipSeries ps;
      ps.station_id = s.station_id;
      ps.climatology = s.climatology.value_or(0.0);
      std::size_t days = 0;
      for (std::size_t i = 0; i < s.dates.size(); ++i) {
        if (month && static_cast<int>(month_of(s.dates[i])) != *month) continue;
        bool used = false;
        for (int l : lags) {
          const auto li = static_cast<std::size_t>(l);
          if (s.obs_min[i] && s.fmin[i][li]) {
            sum_min += temp_abs_error(*s.fmin[i][li], *s.obs_min[i]);
            ++c.n_min_temp;
            used = true;
          }
          if (s.obs_max[i] && s.fmax[i][li]) {
            sum_max += temp_abs_error(*s.fmax[i][li], *s.obs_max[i]);
            ++c.n_max_temp;
            used = true;
          }
        }
        if (s.outcome[i]) {
          bool any = false;
          for (int l : lags) any = any || s.pprob[i][static_cast<std::size_t>(l)].has_value();
          if (any) {
            ps.outcomes.push_back(*s.outcome[i]);
            ps.probs.push_back(s.pprob[i]);
            used = true;
          }
        }
        if (used) ++days;
      }
      if (c.n_min_temp) c.mae_min_temp = sum_min / static_cast<double>(c.n_min_temp);
      if (c.n_max_temp) c.mae_max_temp = sum_max / static_cast<double>(c.n_max_temp);
      if (climatology_ok && !ps.outcomes.empty()) {
        auto t = brier_terms(ps, lags);
        c.n_precip = t.terms;
        if (t.terms) c.precip_error = t.numerator / t.denominator;  // 1 - BSS
      }
      c.n_days = days;
      if (c.n_days == 0) continue;
      out.push_back(std::move(c));
    }
  }
  return out;
}

std::vector<ErrorCell> aggregate_all(std::span<const StationData> stations, Diagnostics& diag) {
  std::vector<ErrorCell> out;
  for (const auto& s : stations) {
    std::vector<ErrorCell> cells;
    for (Grouping g : {Grouping{false, false}, Grouping{false, true}, Grouping{true, false}, Grouping{true, true}}) {
      auto part = aggregate_errors(s, g, diag);
      cells.insert(cells.end(), std::make_move_iterator(part.begin()), std::make_move_iterator(part.end()));
    }
    // all-before-specific ordering: nullopt sorts first
    std::stable_sort(cells.begin(), cells.end(), [](const ErrorCell& a, const ErrorCell& b) {
      return std::tie(a.lag, a.month) < std::tie(b.lag, b.month);
    });
    out.insert(out.end(), std::make_move_iterator(cells.begin()), std::make_move_iterator(cells.end()));
  }
  return out;
}

std::vector<double> mid_ranks(std::span<const double> x) {
  const std::size_t n = x.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> ranks(n);
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && x[order[j + 1]] == x[order[i]]) ++j;
    const double r = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

double spearman_rho(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw Error(ErrorKind::InvalidArgument, "spearman_rho: length mismatch");
  if (x.size() < 3) throw Error(ErrorKind::Compute, "spearman_rho: undefined for fewer than 3 pairs");
  auto rx = mid_ranks(x), ry = mid_ranks(y);
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0 || syy == 0) throw Error(ErrorKind::Compute, "spearman_rho: zero rank variance");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

double spearman_pvalue(double rho, std::size_t n) {
  if (n < 4) throw Error(ErrorKind::Compute, "spearman_pvalue: undefined for fewer than 4 pairs");
  if (!(std::abs(rho) <= 1.0)) throw Error(ErrorKind::InvalidArgument, "spearman_pvalue: |rho| > 1");
  if (std::abs(rho) == 1.0) return 0.0;
  if (rho == 0.0) return 1.0;
  const double df = static_cast<double>(n - 2);
  const double t = rho * std::sqrt(df / (1.0 - rho * rho));
  boost::math::students_t dist(df);
  return std::min(1.0, 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t))));
}

Value metric_value(const ErrorCell& c, std::string_view metric) {
  if (metric == "min_temp") return c.mae_min_temp;
  if (metric == "max_temp") return c.mae_max_temp;
  if (metric == "precip") return c.precip_error;
  throw Error(ErrorKind::InvalidArgument, "unknown error metric \"" + std::string(metric) + "\"");
}

std::vector<CorrelationResult> correlate(std::span<const ErrorCell> cells,
                                         std::span<const regions::AssignmentRow> assignment,
                                         Diagnostics& diag) {
  std::map<std::string, const ErrorCell*> overall_cell;
  for (const auto& c : cells)
    if (!c.lag && !c.month) overall_cell[c.station_id] = &c;

  std::map<int, std::string> region_name;
  std::map<int, std::vector<const ErrorCell*>> members;
  std::vector<const ErrorCell*> everyone;
  for (const auto& a : assignment) {
    region_name[a.label] = a.region;
    auto it = overall_cell.find(a.station_id);
    if (it == overall_cell.end()) continue;
    members[a.label].push_back(it->second);
    everyone.push_back(it->second);
  }

  constexpr std::array<std::pair<std::string_view, std::string_view>, 3> pairs{
      {{"min_temp", "max_temp"}, {"min_temp", "precip"}, {"max_temp", "precip"}}};

  auto run = [&](int label, const std::string& region, const std::vector<const ErrorCell*>& group,
                 std::vector<CorrelationResult>& out) {
    for (const auto& [vx, vy] : pairs) {
      CorrelationResult r;
      r.label = label;
      r.region = region;
      r.var_x = vx;
      r.var_y = vy;
      std::vector<double> xs, ys;
      for (const auto* c : group) {
        auto x = metric_value(*c, vx), y = metric_value(*c, vy);
        if (x && y) {
          xs.push_back(*x);
          ys.push_back(*y);
        }
      }
      r.n = xs.size();
      try {
        r.rho = spearman_rho(xs, ys);
        r.p_value = spearman_pvalue(*r.rho, r.n);
        r.significant = *r.p_value < kSignificanceLevel;
      } catch (const Error& e) {
        diag.warn("correlations: " + region + " " + std::string(vx) + "~" + std::string(vy) + ": " + e.what());
      }
      out.push_back(std::move(r));
    }
  };

  std::vector<CorrelationResult> out;
  for (const auto& [label, group] : members) run(label, region_name[label], group, out);
  run(0, "overall", everyone, out);
  return out;
}

// ---- serialization -----------------------------------------------------------

namespace {
std::string opt_int(const std::optional<int>& v) { return v ? std::to_string(*v) : "all"; }

std::optional<int> read_opt_int(const std::string& s, const char* what) {
  if (s == "all") return std::nullopt;
  auto v = parse_number(s);
  if (!v) throw Error(ErrorKind::Parse, std::string("error cells: bad ") + what + " \"" + s + "\"");
  return static_cast<int>(*v);
}
}  // namespace

std::string write_error_cells(std::span<const ErrorCell> cells) {
  CsvWriter w({"station_id", "lag", "month", "mae_min_temp", "mae_max_temp", "precip_error", "n_days", "n_min_temp",
               "n_max_temp", "n_precip"});
  for (const auto& c : cells)
    w.add_row({c.station_id, opt_int(c.lag), opt_int(c.month), format_value(c.mae_min_temp),
               format_value(c.mae_max_temp), format_value(c.precip_error), std::to_string(c.n_days),
               std::to_string(c.n_min_temp), std::to_string(c.n_max_temp), std::to_string(c.n_precip)});
  return w.str();
}

std::vector<ErrorCell> read_error_cells(const Table& t) {
  const auto ctx = "error cells";
  std::array<std::size_t, 10> c{};
  const std::array<const char*, 10> names{"station_id", "lag",     "month",      "mae_min_temp", "mae_max_temp",
                                          "precip_error", "n_days", "n_min_temp", "n_max_temp",   "n_precip"};
  for (std::size_t i = 0; i < names.size(); ++i) c[i] = t.require_column(names[i], ctx);
  std::vector<ErrorCell> out;
  out.reserve(t.rows.size());
  for (const auto& row : t.rows) {
    auto get = [&](std::size_t i) -> std::string { return c[i] < row.size() ? row[c[i]] : std::string{}; };
    auto count = [&](std::size_t i) { return static_cast<std::size_t>(parse_number(get(i)).value_or(0)); };
    ErrorCell e;
    e.station_id = get(0);
    e.lag = read_opt_int(get(1), "lag");
    e.month = read_opt_int(get(2), "month");
    e.mae_min_temp = parse_number(get(3));
    e.mae_max_temp = parse_number(get(4));
    e.precip_error = parse_number(get(5));
    e.n_days = count(6);
    e.n_min_temp = count(7);
    e.n_max_temp = count(8);
    e.n_precip = count(9);
    out.push_back(std::move(e));
  }
  return out;
}

std::string write_correlations(std::span<const CorrelationResult> rows) {
  CsvWriter w({"label", "region", "var_x", "var_y", "n", "rho", "p_value", "significant"});
  for (const auto& r : rows)
    w.add_row({r.label == 0 ? "overall" : std::to_string(r.label), r.region, r.var_x, r.var_y, std::to_string(r.n),
               format_value(r.rho), format_value(r.p_value), r.significant ? "true" : "false"});
  return w.str();
}

std::vector<CorrelationResult> read_correlations(const Table& t) {
  const auto ctx = "correlations";
  auto c_label = t.require_column("label", ctx), c_region = t.require_column("region", ctx),
       c_x = t.require_column("var_x", ctx), c_y = t.require_column("var_y", ctx), c_n = t.require_column("n", ctx),
       c_rho = t.require_column("rho", ctx), c_p = t.require_column("p_value", ctx),
       c_sig = t.require_column("significant", ctx);
  std::vector<CorrelationResult> out;
  for (const auto& row : t.rows) {
    auto get = [&](std::size_t c) -> std::string { return c < row.size() ? row[c] : std::string{}; };
    CorrelationResult r;
    r.label = get(c_label) == "overall" ? 0 : static_cast<int>(parse_number(get(c_label)).value_or(0));
    r.region = get(c_region);
    r.var_x = get(c_x);
    r.var_y = get(c_y);
    r.n = static_cast<std::size_t>(parse_number(get(c_n)).value_or(0));
    r.rho = parse_number(get(c_rho));
    r.p_value = parse_number(get(c_p));
    r.significant = get(c_sig) == "true";
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace wxskill::errors
