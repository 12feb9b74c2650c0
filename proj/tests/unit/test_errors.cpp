#include <algorithm>
#include <cmath>
#include <random>

#include "core/errors.hpp"
#include "doctest.h"
#include "oracles.hpp"

using namespace wxskill;
using namespace wxskill::errors;

namespace {

constexpr std::array<int, 6> kAllLags{0, 1, 2, 3, 4, 5};

// Random outcome/probability series with roughly `missing` of the
// forecasts absent. Guarantees at least one event and one non-event.
struct RandomSeries {
  PrecipSeries series;
  std::vector<int> outcomes;
  std::vector<std::vector<std::optional<double>>> probs;
};

RandomSeries random_series(std::mt19937_64& rng, std::size_t days, double missing) {
  std::uniform_real_distribution<double> u(0, 1);
  RandomSeries r;
  r.series.station_id = "KTST";
  for (std::size_t i = 0; i < days; ++i) {
    int o = u(rng) < 0.3 ? 1 : 0;
    if (i == 0) o = 1;
    if (i == 1) o = 0;
    r.outcomes.push_back(o);
    std::array<Value, kLagCount> row{};
    std::vector<std::optional<double>> orow(kLagCount);
    for (std::size_t l = 0; l < kLagCount; ++l) {
      if (u(rng) < missing && !(i == 0 && l == 0)) continue;
      const double y = std::round(u(rng) * 10) / 10;
      row[l] = y;
      orow[l] = y;
    }
    r.series.probs.push_back(row);
    r.probs.push_back(orow);
  }
  r.series.outcomes = r.outcomes;
  r.series.climatology = climatology(r.outcomes);
  return r;
}

ingest::DailyRecord day(const std::string& id, Date d, std::optional<double> tmin, std::optional<double> tmax,
                        std::optional<double> precip) {
  ingest::DailyRecord r;
  r.station_id = id;
  r.date = d;
  r[ingest::Variable::MinTemp] = tmin;
  r[ingest::Variable::MaxTemp] = tmax;
  r[ingest::Variable::Precipitation] = precip;
  return r;
}

Date ymd(int y, unsigned m, unsigned d) {
  return std::chrono::sys_days{std::chrono::year{y} / std::chrono::month{m} / std::chrono::day{d}};
}

}  // namespace

TEST_CASE("temperature error is absolute difference") {
  CHECK(temp_abs_error(50, 47) == 3);
  CHECK(temp_abs_error(47, 50) == 3);
  CHECK(temp_abs_error(-2.5, -2.5) == 0);
}

TEST_CASE("BSS matches the direct double-loop oracle") {
  std::mt19937_64 rng(11);
  for (int rep = 0; rep < 200; ++rep) {
    auto r = random_series(rng, 5 + rep % 60, rep % 3 == 0 ? 0.25 : 0.0);
    std::vector<int> lags(kAllLags.begin(), kAllLags.end());
    CHECK(brier_skill_score(r.series, kAllLags) == doctest::Approx(oracle::brier_skill_score(r.outcomes, r.probs, lags)).epsilon(1e-12));
    const int one = rep % 6;
    CHECK(brier_skill_score(r.series, std::span<const int>(&one, 1)) ==
          doctest::Approx(oracle::brier_skill_score(r.outcomes, r.probs, {one})).epsilon(1e-12));
  }
}

TEST_CASE("BSS properties: bounded by 1, equal to 1 only for perfect forecasts") {
  std::mt19937_64 rng(12);
  for (int rep = 0; rep < 200; ++rep) {
    auto r = random_series(rng, 30, 0.1);
    const double bss = brier_skill_score(r.series, kAllLags);
    CHECK(bss <= 1.0);
    auto t = brier_terms(r.series, kAllLags);
    CHECK((1.0 - bss) == doctest::Approx(t.numerator / t.denominator).epsilon(1e-12));
    bool perfect = true;
    for (std::size_t i = 0; i < r.outcomes.size(); ++i)
      for (auto& y : r.series.probs[i])
        if (y && *y != r.outcomes[i]) perfect = false;
    CHECK((bss == 1.0) == perfect);
  }

  auto r = random_series(rng, 40, 0.2);
  for (std::size_t i = 0; i < r.outcomes.size(); ++i)
    for (auto& y : r.series.probs[i])
      if (y) y = r.outcomes[i];
  CHECK(brier_skill_score(r.series, kAllLags) == 1.0);

  // Forecasting climatology everywhere scores exactly 0.
  for (std::size_t i = 0; i < r.outcomes.size(); ++i)
    for (auto& y : r.series.probs[i]) y = r.series.climatology;
  CHECK(brier_skill_score(r.series, kAllLags) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("BSS drops missing forecasts pairwise") {
  PrecipSeries s;
  s.station_id = "KA";
  s.outcomes = {1, 0, 0, 1};
  s.climatology = 0.5;
  s.probs.resize(4);
  s.probs[0][0] = 0.9;
  s.probs[1][0] = 0.2;
  s.probs[3][0] = 0.6;  // day 2 has no lag-0 forecast
  const int lag0 = 0;
  auto t = brier_terms(s, std::span<const int>(&lag0, 1));
  CHECK(t.terms == 3);
  CHECK(t.numerator == doctest::Approx(0.01 + 0.04 + 0.16));
  CHECK(t.denominator == doctest::Approx(0.75));
  CHECK(brier_skill_score(s, std::span<const int>(&lag0, 1)) == doctest::Approx(1 - 0.21 / 0.75));
}

TEST_CASE("BSS is undefined when climatology is 0 or 1") {
  PrecipSeries s;
  s.station_id = "KDRY";
  s.outcomes = {0, 0, 0};
  s.probs.resize(3);
  for (auto& p : s.probs) p[0] = 0.1;
  s.climatology = climatology(s.outcomes);
  CHECK_THROWS_WITH(brier_skill_score(s, kAllLags), doctest::Contains("KDRY"));
  s.outcomes = {1, 1, 1};
  s.climatology = climatology(s.outcomes);
  CHECK_THROWS_AS(brier_skill_score(s, kAllLags), Error);
  const int bad = 6;
  CHECK_THROWS_AS(brier_skill_score(s, std::span<const int>(&bad, 1)), Error);
  CHECK_THROWS_AS(climatology({}), Error);
}

TEST_CASE("mid-ranks and Spearman agree with the counting oracle") {
  std::vector<double> x{3, 1, 4, 1, 5, 9, 2, 6, 5, 3};
  auto r = mid_ranks(x);
  auto o = oracle::mid_ranks(x);
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(r[i] == o[i]);
  CHECK(r[1] == 1.5);
  CHECK(r[3] == 1.5);

  std::mt19937_64 rng(21);
  std::uniform_int_distribution<int> small(0, 6);
  std::normal_distribution<double> z(0, 1);
  for (int rep = 0; rep < 300; ++rep) {
    const std::size_t n = 4 + rep % 40;
    std::vector<double> a(n), b(n);
    for (std::size_t i = 0; i < n; ++i) {
      a[i] = rep % 2 ? small(rng) : z(rng);  // ties on odd reps
      b[i] = 0.5 * a[i] + z(rng);
    }
    if (std::all_of(a.begin(), a.end(), [&](double v) { return v == a[0]; })) a[0] += 1;
    const double rho = spearman_rho(a, b);
    CHECK(rho == doctest::Approx(oracle::spearman(a, b)).epsilon(1e-12));
    CHECK(std::abs(rho) <= 1.0);
    CHECK(spearman_rho(b, a) == doctest::Approx(rho).epsilon(1e-12));

    // Strictly increasing transforms leave rho unchanged.
    std::vector<double> ea(n), cb(n);
    for (std::size_t i = 0; i < n; ++i) {
      ea[i] = std::exp(a[i]);
      cb[i] = b[i] * b[i] * b[i] + 7;
    }
    CHECK(spearman_rho(ea, cb) == doctest::Approx(rho).epsilon(1e-12));
  }

  std::vector<double> inc{1, 2, 3, 4, 5}, dec{9, 7, 5, 3, 1};
  CHECK(spearman_rho(inc, inc) == 1.0);
  CHECK(spearman_rho(inc, dec) == -1.0);
  std::vector<double> flat{2, 2, 2, 2, 2};
  CHECK_THROWS_AS(spearman_rho(inc, flat), Error);
  CHECK_THROWS_AS(spearman_rho(std::vector<double>{1, 2}, std::vector<double>{1, 2}), Error);
}

TEST_CASE("Spearman p-value matches numerical integration of the t tail") {
  CHECK(spearman_pvalue(0.8, 22) == doctest::Approx(oracle::spearman_pvalue(0.8, 22)).epsilon(1e-6));
  for (double r : {-0.9, -0.45, -0.05, 0.1, 0.3, 0.55, 0.72, 0.95})
    for (std::size_t n : {5u, 12u, 30u, 113u}) {
      const double p = spearman_pvalue(r, n);
      CHECK(p == doctest::Approx(oracle::spearman_pvalue(r, n)).epsilon(1e-6));
      CHECK(p >= 0.0);
      CHECK(p <= 1.0);
      CHECK(spearman_pvalue(-r, n) == doctest::Approx(p).epsilon(1e-12));
    }
  CHECK(spearman_pvalue(0.0, 10) == 1.0);
  CHECK(spearman_pvalue(1.0, 10) == 0.0);
  CHECK(spearman_pvalue(0.6, 20) < spearman_pvalue(0.6, 10));
  CHECK_THROWS_AS(spearman_pvalue(0.5, 3), Error);
}

TEST_CASE("join_station_data aligns forecasts with measured days") {
  std::vector<ingest::DailyRecord> recs{day("KA", ymd(2015, 1, 1), 30, 45, 0.0),
                                        day("KA", ymd(2015, 1, 2), 28, 40, 0.2),
                                        day("KA", ymd(2015, 1, 3), 25, 41, std::nullopt)};
  std::vector<ingest::ForecastRecord> fc{{"KA", ymd(2015, 1, 2), 1, 29.0, 42.0, 0.7},
                                         {"KA", ymd(2015, 1, 9), 0, 1.0, 2.0, 0.5},   // no measured day
                                         {"KB", ymd(2015, 1, 2), 0, 1.0, 2.0, 0.5}};  // unknown station
  auto joined = join_station_data(recs, fc);
  REQUIRE(joined.size() == 1);
  const auto& s = joined[0];
  CHECK(s.dates.size() == 3);
  CHECK(s.outcome[0] == 0);
  CHECK(s.outcome[1] == 1);
  CHECK(!s.outcome[2]);
  CHECK(*s.climatology == 0.5);
  CHECK(*s.fmin[1][1] == 29.0);
  CHECK(!s.fmin[1][0]);
  CHECK(*s.pprob[1][1] == 0.7);
}

TEST_CASE("aggregated errors are weighted means of the finer cells") {
  std::mt19937_64 rng(31);
  std::normal_distribution<double> z(0, 1);
  std::uniform_real_distribution<double> u(0, 1);
  std::vector<ingest::DailyRecord> recs;
  std::vector<ingest::ForecastRecord> fc;
  for (int d = 0; d < 400; ++d) {
    const Date date = ymd(2015, 1, 1) + std::chrono::days(d);
    const double tmin = std::round(40 + 10 * z(rng));
    const bool rain = u(rng) < 0.3;
    recs.push_back(day("KA", date, u(rng) < 0.05 ? std::nullopt : std::optional<double>(tmin), tmin + 15,
                       rain ? 0.3 : 0.0));
    for (int lag = 0; lag <= 5; ++lag) {
      if (u(rng) < 0.1) continue;
      ingest::ForecastRecord f{"KA", date, lag, std::round(tmin + (1 + lag) * z(rng)), tmin + 15 + lag * z(rng),
                               std::round(10 * std::clamp((rain ? 0.7 : 0.2) + 0.2 * z(rng), 0.0, 1.0)) / 10};
      if (u(rng) < 0.1) f.precip_prob.reset();
      fc.push_back(f);
    }
  }
  auto stations = join_station_data(recs, fc);
  REQUIRE(stations.size() == 1);
  Diagnostics diag;
  auto all = aggregate_errors(stations[0], {}, diag);
  auto by_lag = aggregate_errors(stations[0], {true, false}, diag);
  auto by_month = aggregate_errors(stations[0], {false, true}, diag);
  auto both = aggregate_errors(stations[0], {true, true}, diag);
  REQUIRE(all.size() == 1);
  CHECK(by_lag.size() == 6);
  CHECK(by_month.size() == 12);
  CHECK(both.size() == 72);

  auto check_mean = [&](const std::vector<ErrorCell>& parts) {
    double wmin = 0, wmax = 0;
    std::size_t nmin = 0, nmax = 0;
    for (const auto& c : parts) {
      wmin += *c.mae_min_temp * static_cast<double>(c.n_min_temp);
      wmax += *c.mae_max_temp * static_cast<double>(c.n_max_temp);
      nmin += c.n_min_temp;
      nmax += c.n_max_temp;
    }
    CHECK(nmin == all[0].n_min_temp);
    CHECK(nmax == all[0].n_max_temp);
    CHECK(wmin / static_cast<double>(nmin) == doctest::Approx(*all[0].mae_min_temp).epsilon(1e-12));
    CHECK(wmax / static_cast<double>(nmax) == doctest::Approx(*all[0].mae_max_temp).epsilon(1e-12));
  };
  check_mean(by_lag);
  check_mean(by_month);
  check_mean(both);

  // precip error over all lags is the lag terms pooled, so it lies between
  // the best and worst single-lag errors.
  double lo = INFINITY, hi = -INFINITY;
  std::size_t terms = 0;
  for (const auto& c : by_lag) {
    lo = std::min(lo, *c.precip_error);
    hi = std::max(hi, *c.precip_error);
    terms += c.n_precip;
  }
  CHECK(terms == all[0].n_precip);
  CHECK(*all[0].precip_error >= lo - 1e-12);
  CHECK(*all[0].precip_error <= hi + 1e-12);

  // Direct recomputation of the pooled temperature error.
  double sum = 0;
  std::size_t n = 0;
  const auto& s = stations[0];
  for (std::size_t i = 0; i < s.dates.size(); ++i)
    for (std::size_t l = 0; l < kLagCount; ++l)
      if (s.obs_min[i] && s.fmin[i][l]) {
        sum += std::abs(*s.fmin[i][l] - *s.obs_min[i]);
        ++n;
      }
  CHECK(*all[0].mae_min_temp == doctest::Approx(sum / static_cast<double>(n)).epsilon(1e-12));
}

TEST_CASE("a station that never or always sees precipitation has no precip error") {
  std::vector<ingest::DailyRecord> recs;
  std::vector<ingest::ForecastRecord> fc;
  for (int d = 0; d < 20; ++d) {
    const Date date = ymd(2015, 6, 1) + std::chrono::days(d);
    recs.push_back(day("KDRY", date, 60, 90, 0.0));
    fc.push_back({"KDRY", date, 0, 61.0, 88.0, 0.1});
  }
  auto s = join_station_data(recs, fc);
  Diagnostics diag;
  auto cells = aggregate_errors(s[0], {}, diag);
  REQUIRE(cells.size() == 1);
  CHECK(!cells[0].precip_error);
  CHECK(*cells[0].mae_min_temp == 1.0);
  CHECK(*cells[0].mae_max_temp == 2.0);
  REQUIRE(diag.warnings.size() == 1);
  CHECK(diag.warnings[0].find("KDRY") != std::string::npos);
}

TEST_CASE("correlate per region and overall") {
  std::vector<ErrorCell> cells;
  std::vector<regions::AssignmentRow> assign;
  std::mt19937_64 rng(41);
  std::normal_distribution<double> z(0, 1);
  for (int i = 0; i < 20; ++i) {
    ErrorCell c;
    c.station_id = "K" + std::to_string(100 + i);
    const double base = z(rng);
    c.mae_min_temp = 3 + base;
    c.mae_max_temp = 3 + base + 0.3 * z(rng);
    c.precip_error = 0.5 + 0.1 * z(rng);
    cells.push_back(c);
    ErrorCell lagged = c;
    lagged.lag = 2;
    lagged.mae_min_temp = 100;  // must be ignored
    cells.push_back(lagged);
    assign.push_back({c.station_id, "", 0, 0, i < 10 ? 1 : 2, i < 10 ? "East" : "West"});
  }
  Diagnostics diag;
  auto res = correlate(cells, assign, diag);
  REQUIRE(res.size() == 9);
  CHECK(res[0].label == 1);
  CHECK(res[0].region == "East");
  CHECK(res[3].label == 2);
  CHECK(res[6].label == 0);
  CHECK(res[6].region == "overall");
  CHECK(res[6].n == 20);
  CHECK(res[0].n == 10);

  std::vector<double> x, y;
  for (const auto& c : cells)
    if (!c.lag) {
      x.push_back(*c.mae_min_temp);
      y.push_back(*c.mae_max_temp);
    }
  CHECK(*res[6].rho == doctest::Approx(oracle::spearman(x, y)).epsilon(1e-12));
  CHECK(*res[6].p_value == doctest::Approx(oracle::spearman_pvalue(*res[6].rho, 20)).epsilon(1e-6));
  CHECK(res[6].significant == (*res[6].p_value < 0.05));
  CHECK(res[6].var_x == "min_temp");
  CHECK(res[6].var_y == "max_temp");

  // Round trip through CSV.
  auto back = read_correlations(parse_table(write_correlations(res)));
  REQUIRE(back.size() == res.size());
  for (std::size_t i = 0; i < res.size(); ++i) {
    CHECK(back[i].label == res[i].label);
    CHECK(back[i].region == res[i].region);
    CHECK(*back[i].rho == doctest::Approx(*res[i].rho).epsilon(1e-12));
  }
  auto cells_back = read_error_cells(parse_table(write_error_cells(cells)));
  REQUIRE(cells_back.size() == cells.size());
  CHECK(cells_back[1].lag == 2);
  CHECK(!cells_back[0].lag);
  CHECK(*cells_back[1].mae_min_temp == 100);
}

TEST_CASE("BSS hand-computed example") {
  PrecipSeries s;
  s.station_id = "KEX";
  s.outcomes = {1, 0};
  s.probs.resize(2);
  s.probs[0][0] = 0.8;
  s.probs[1][0] = 0.4;
  s.climatology = 0.5;
  const int lag0 = 0;
  auto t = brier_terms(s, std::span<const int>(&lag0, 1));
  CHECK(t.numerator == doctest::Approx(0.2));
  CHECK(t.denominator == doctest::Approx(0.5));
  CHECK(brier_skill_score(s, std::span<const int>(&lag0, 1)) == doctest::Approx(0.6));
}

TEST_CASE("Spearman with ties equals mid-rank Pearson") {
  std::vector<double> x{1, 2, 2, 4}, y{2, 1, 3, 4};
  auto r = mid_ranks(x);
  CHECK(r == std::vector<double>{1, 2.5, 2.5, 4});
  CHECK(spearman_rho(x, y) == doctest::Approx(oracle::pearson(oracle::mid_ranks(x), oracle::mid_ranks(y))).epsilon(1e-15));
  CHECK(spearman_rho(x, y) == doctest::Approx(3.0 / std::sqrt(22.5)));
}
