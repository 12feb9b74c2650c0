#pragma once

#include <array>
#include <span>
#include <string>
#include <vector>

#include "core/common.hpp"
#include "core/ingest.hpp"
#include "core/regions.hpp"

namespace wxskill::errors {

inline constexpr std::size_t kLagCount = ingest::kMaxLag + 1;

double temp_abs_error(double forecast, double actual);

// One station's precipitation verification data: outcome per day and the
// forecast probability per (day, lag). `climatology` is P.
struct PrecipSeries {
  std::string station_id;
  std::vector<int> outcomes;
  std::vector<std::array<Value, kLagCount>> probs;
  double climatology = 0;
};

double climatology(std::span<const int> outcomes);

struct BrierTerms {
  double numerator = 0;    // sum (Y - O)^2
  double denominator = 0;  // sum (P - O)^2
  std::size_t terms = 0;
};

/// Sums over the requested lags; a missing Y drops the matching term from
/// both sums.
BrierTerms brier_terms(const PrecipSeries& s, std::span<const int> lags);

/// 1 - numerator/denominator. Throws a Compute error naming the station when
/// P is 0 or 1 or no terms are available.
double brier_skill_score(const PrecipSeries& s, std::span<const int> lags);

// Joined observation / forecast data for one station, one entry per measured day.
struct StationData {
  std::string station_id;
  std::vector<Date> dates;
  std::vector<Value> obs_min;
  std::vector<Value> obs_max;
  std::vector<std::optional<int>> outcome;
  std::vector<std::array<Value, kLagCount>> fmin;
  std::vector<std::array<Value, kLagCount>> fmax;
  std::vector<std::array<Value, kLagCount>> pprob;
  Value climatology;  // over every day with a defined outcome
};

/// Stations in sorted id order; forecasts without a measured day are dropped.
std::vector<StationData> join_station_data(std::span<const ingest::DailyRecord> records,
                                           std::span<const ingest::ForecastRecord> forecasts);

struct ErrorCell {
  std::string station_id;
  std::optional<int> lag;    // nullopt: all lags
  std::optional<int> month;  // nullopt: all months
  Value mae_min_temp;
  Value mae_max_temp;
  Value precip_error;  // 1 - BSS
  std::size_t n_days = 0;
  std::size_t n_min_temp = 0;
  std::size_t n_max_temp = 0;
  std::size_t n_precip = 0;
};

struct Grouping {
  bool by_lag = false;
  bool by_month = false;
};

/// Cells for one station under a grouping; empty groups are omitted.
std::vector<ErrorCell> aggregate_errors(const StationData& s, Grouping g, Diagnostics& diag);

/// All four groupings for every station, in (station, lag, month) order with
/// "all" first.
std::vector<ErrorCell> aggregate_all(std::span<const StationData> stations, Diagnostics& diag);

std::vector<double> mid_ranks(std::span<const double> x);
double spearman_rho(std::span<const double> x, std::span<const double> y);
double spearman_pvalue(double rho, std::size_t n);

inline constexpr double kSignificanceLevel = 0.05;

struct CorrelationResult {
  int label = 0;  // 0: overall
  std::string region;
  std::string var_x;
  std::string var_y;
  std::size_t n = 0;
  Value rho;
  Value p_value;
  bool significant = false;
};

/// Spearman correlations of the three error metrics (lag = all, month = all),
/// per region in label order, then overall.
std::vector<CorrelationResult> correlate(std::span<const ErrorCell> cells,
                                         std::span<const regions::AssignmentRow> assignment,
                                         Diagnostics& diag);

inline constexpr std::array<std::string_view, 3> kMetrics{"min_temp", "max_temp", "precip"};
Value metric_value(const ErrorCell& c, std::string_view metric);

std::string write_error_cells(std::span<const ErrorCell> cells);
std::vector<ErrorCell> read_error_cells(const Table& t);
std::string write_correlations(std::span<const CorrelationResult> rows);
std::vector<CorrelationResult> read_correlations(const Table& t);

}  // namespace wxskill::errors
