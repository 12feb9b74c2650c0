// Acceptance checks that run on generated data. Prints one PASS/FAIL line per
// criterion; criteria that need the Data Expo files are reported as SKIP here
// and checked by acceptance_paper_data.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <numbers>
#include <random>
#include <set>
#include <string>

#include "core/errors.hpp"
#include "core/glyphgeom.hpp"
#include "core/importance.hpp"
#include "core/pipeline.hpp"
#include "core/regions.hpp"
#include "oracles.hpp"
#include "synthetic.hpp"

using namespace wxskill;
namespace fs = std::filesystem;

namespace {

constexpr double kPi = std::numbers::pi;

int failed = 0;

void report(const char* name, bool pass, const std::string& detail) {
  std::printf("%s  %-34s %s\n", pass ? "PASS" : "FAIL", name, detail.c_str());
  if (!pass) ++failed;
}

void skip(const char* name, const std::string& detail) { std::printf("SKIP  %-34s %s\n", name, detail.c_str()); }

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* f, double a, double b = 0, double c = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c);
  return buf;
}

// 1,000 series, N <= 10 days, a random non-empty subset of lags 0..2.
// Tolerance: |a - b| <= 1e-12 |b|, with a 1e-15 absolute floor for BSS = 0.
void bss_oracle() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(2018);
  std::uniform_real_distribution<double> u(0, 1);
  int mismatches = 0, series = 0;
  double worst = 0;
  while (series < 1000) {
    const std::size_t n = 2 + rng() % 9;
    errors::PrecipSeries s;
    s.station_id = "S" + std::to_string(series);
    std::vector<std::vector<std::optional<double>>> oprobs;
    for (std::size_t i = 0; i < n; ++i) {
      s.outcomes.push_back(u(rng) < 0.4 ? 1 : 0);
      std::array<Value, errors::kLagCount> row{};
      std::vector<std::optional<double>> orow(errors::kLagCount);
      for (std::size_t l = 0; l < 3; ++l)
        if (u(rng) < 0.85) {
          row[l] = u(rng);
          orow[l] = row[l];
        }
      s.probs.push_back(row);
      oprobs.push_back(orow);
    }
    const int events = std::count(s.outcomes.begin(), s.outcomes.end(), 1);
    if (events == 0 || events == static_cast<int>(n)) continue;  // BSS undefined
    std::vector<int> lags;
    for (int l = 0; l < 3; ++l)
      if (u(rng) < 0.6) lags.push_back(l);
    if (lags.empty()) lags.push_back(static_cast<int>(rng() % 3));
    s.climatology = errors::climatology(s.outcomes);
    if (errors::brier_terms(s, lags).terms == 0) continue;
    ++series;
    const double got = errors::brier_skill_score(s, lags);
    const double want = oracle::brier_skill_score(s.outcomes, oprobs, lags);
    const double err = std::abs(got - want);
    worst = std::max(worst, err / std::max(std::abs(want), 1e-300));
    if (err > 1e-12 * std::abs(want) + 1e-15) ++mismatches;
  }
  const double secs = seconds_since(t0);
  report("bss_oracle_equivalence", mismatches == 0 && secs < 5.0,
         fmt("1000 series, mismatches=%.0f, worst rel=%.2e, %.3fs (limit 5s)", mismatches, worst, secs));
}

std::vector<std::pair<std::set<std::size_t>, std::set<std::size_t>>> merge_sets(const regions::Dendrogram& d) {
  std::vector<std::set<std::size_t>> node(d.leaf_count + d.merges.size());
  for (std::size_t i = 0; i < d.leaf_count; ++i) node[i] = {i};
  std::vector<std::pair<std::set<std::size_t>, std::set<std::size_t>>> out;
  for (std::size_t s = 0; s < d.merges.size(); ++s) {
    auto a = node[d.merges[s].left], b = node[d.merges[s].right];
    if (*b.begin() < *a.begin()) std::swap(a, b);
    out.emplace_back(a, b);
    node[d.leaf_count + s] = a;
    node[d.leaf_count + s].insert(b.begin(), b.end());
  }
  return out;
}

// 200 datasets, 2 <= n <= 8, 1 <= p <= 4. The merge sequence (which clusters
// join, in order) must match exactly; heights must satisfy h^2 / 2 = delta SS
// to 1e-9 relative.
void ward_oracle() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(1998);
  std::normal_distribution<double> z(0, 1);
  int sequence_mismatch = 0, height_mismatch = 0;
  for (int rep = 0; rep < 200; ++rep) {
    const std::size_t n = 2 + rng() % 7, p = 1 + rng() % 4;
    std::vector<std::vector<double>> pts(n, std::vector<double>(p));
    for (auto& row : pts)
      for (auto& v : row) v = z(rng);
    auto d = regions::ward_cluster(regions::euclidean_distances(pts));
    auto want = oracle::ward(pts);
    auto got = merge_sets(d);
    bool same = got.size() == want.size();
    for (std::size_t s = 0; same && s < got.size(); ++s) {
      auto wa = want[s].a, wb = want[s].b;
      if (*wb.begin() < *wa.begin()) std::swap(wa, wb);
      same = got[s].first == wa && got[s].second == wb;
      const double h2 = d.merges[s].height * d.merges[s].height / 2.0;
      if (std::abs(h2 - want[s].delta_ss) > 1e-9 * std::max(1.0, want[s].delta_ss)) ++height_mismatch;
    }
    if (!same) ++sequence_mismatch;
  }
  const double secs = seconds_since(t0);
  report("ward_oracle_equivalence", sequence_mismatch == 0 && height_mismatch == 0 && secs < 30.0,
         fmt("200 datasets, sequence mismatches=%.0f, height mismatches=%.0f, %.3fs (limit 30s)", sequence_mismatch,
             height_mismatch, secs));
}

// Circumscription to 1e-9 for 100 random rho, the rho -> 0 circle to 1e-3,
// and major-axis orientation within 1 degree of sign(rho) * pi / 4.
void ellipse_suite() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(73);
  std::uniform_real_distribution<double> u(-1, 1);
  double worst_box = 0, worst_angle = 0;
  for (int rep = 0; rep < 100; ++rep) {
    const double rho = u(rng);
    auto poly = glyphgeom::ellipse_polygon(rho);
    double mx = 0, my = 0;
    std::vector<std::pair<double, double>> v;
    for (std::size_t i = 0; i + 1 < poly.size(); ++i) {
      mx = std::max(mx, std::abs(poly[i].x));
      my = std::max(my, std::abs(poly[i].y));
      v.emplace_back(poly[i].x, poly[i].y);
    }
    worst_box = std::max({worst_box, std::abs(mx - 0.5), std::abs(my - 0.5)});
    if (std::abs(rho) > 1e-3) {
      const double angle = oracle::major_axis_angle(oracle::polygon_moments(v));
      worst_angle = std::max(worst_angle, std::abs(angle - (rho > 0 ? 1 : -1) * kPi / 4));
    }
  }
  double worst_radial = 0;
  for (double rho : {0.0, 1e-7, -1e-7, 1e-5}) {
    for (const auto& p : glyphgeom::ellipse_polygon(rho))
      worst_radial = std::max(worst_radial, std::abs(std::hypot(p.x, p.y) - 0.5));
  }
  const double secs = seconds_since(t0);
  const double worst_deg = worst_angle * 180 / kPi;
  report("ellipse_geometry_suite", worst_box <= 1e-9 && worst_radial < 1e-3 && worst_deg < 1.0 && secs < 1.0,
         fmt("box dev=%.1e, circle dev=%.1e, axis dev=%.2e deg", worst_box, worst_radial, worst_deg) +
             fmt(", %.4fs (limit 1s)", secs));
}

// January at 12:00, clockwise order, monotone radius, regular 12-gon for a
// constant series. Angles are compared exactly against (4 - m) pi / 6.
void glyph_suite() {
  const auto t0 = std::chrono::steady_clock::now();
  Diagnostics diag;
  bool angles = glyphgeom::month_angle(1) == kPi / 2;
  for (int m = 1; m <= 12; ++m) angles = angles && glyphgeom::month_angle(m) == (4.0 - m) * kPi / 6.0;

  std::array<Value, 12> flat{};
  for (auto& v : flat) v = 3.0;
  const glyphgeom::Point anchor{250, -125};
  auto g = glyphgeom::seasonal_glyph("S", "min_temp", flat, anchor, 150, 4.0, diag);
  bool january = g && std::abs(g->vertices[0].x - anchor.x) < 1e-12 && g->vertices[0].y > anchor.y;

  bool clockwise = g.has_value();
  double side_min = INFINITY, side_max = 0, r_min = INFINITY, r_max = 0;
  for (std::size_t m = 0; g && m < 12; ++m) {
    const auto& a = g->vertices[m];
    const auto& b = g->vertices[(m + 1) % 12];
    const double cross = (a.x - anchor.x) * (b.y - anchor.y) - (a.y - anchor.y) * (b.x - anchor.x);
    clockwise = clockwise && cross < 0;
    const double side = std::hypot(b.x - a.x, b.y - a.y);
    side_min = std::min(side_min, side);
    side_max = std::max(side_max, side);
    const double r = std::hypot(a.x - anchor.x, a.y - anchor.y);
    r_min = std::min(r_min, r);
    r_max = std::max(r_max, r);
  }
  const bool regular = g && (side_max - side_min) <= 1e-9 * side_max && (r_max - r_min) <= 1e-9 * r_max;

  bool monotone = true;
  for (int m = 0; m < 12; ++m) {
    double prev = -1;
    for (double v = 0; v <= 4.0; v += 0.25) {
      auto series = flat;
      series[static_cast<std::size_t>(m)] = v;
      auto h = glyphgeom::seasonal_glyph("S", "min_temp", series, anchor, 150, 4.0, diag);
      const auto& p = h->vertices[static_cast<std::size_t>(m)];
      const double r = std::hypot(p.x - anchor.x, p.y - anchor.y);
      monotone = monotone && r > prev;
      prev = r;
    }
  }
  const double secs = seconds_since(t0);
  report("glyph_geometry_suite", angles && january && clockwise && regular && monotone && secs < 1.0,
         std::string("angles=") + (angles ? "exact" : "off") + " january=" + (january ? "12:00" : "off") +
             " clockwise=" + (clockwise ? "yes" : "no") + " monotone=" + (monotone ? "yes" : "no") +
             " regular=" + (regular ? "yes" : "no") + fmt(", %.4fs (limit 1s)", secs));
}

// One informative predictor among five; y = x0 + N(0, 1). Each run draws a
// fresh dataset and forest seed.
void synthetic_importance() {
  const auto t0 = std::chrono::steady_clock::now();
  int wins = 0;
  for (int run = 0; run < 100; ++run) {
    std::mt19937_64 rng(5000 + run);
    std::normal_distribution<double> z(0, 1);
    importance::DesignMatrix m;
    m.predictors = {"informative", "noise1", "noise2", "noise3", "noise4"};
    for (int i = 0; i < 150; ++i) {
      std::vector<double> row(5);
      for (auto& v : row) v = z(rng);
      m.y.push_back(row[0] + z(rng));
      m.x.push_back(std::move(row));
    }
    importance::ForestConfig cfg;
    cfg.n_trees = 100;
    cfg.seed = 900 + run;
    auto imp = importance::permutation_importance(importance::Forest::fit(m, cfg), m);
    if (imp[0] > *std::max_element(imp.begin() + 1, imp.end())) ++wins;
  }
  report("synthetic_importance_signal", wins >= 95,
         fmt("informative > max noise in %.0f/100 runs (need >= 95), %.2fs", wins, seconds_since(t0)));
}

bool same_tree(const fs::path& a, const fs::path& b, std::string& why) {
  std::set<std::string> fa, fb;
  for (const auto& e : fs::recursive_directory_iterator(a))
    if (e.is_regular_file()) fa.insert(fs::relative(e.path(), a).generic_string());
  for (const auto& e : fs::recursive_directory_iterator(b))
    if (e.is_regular_file()) fb.insert(fs::relative(e.path(), b).generic_string());
  if (fa != fb) {
    why = "file lists differ";
    return false;
  }
  for (const auto& f : fa)
    if (read_file(a / f) != read_file(b / f)) {
      why = f + " differs";
      return false;
    }
  why = std::to_string(fa.size()) + " files identical";
  return true;
}

void determinism() {
  const auto t0 = std::chrono::steady_clock::now();
  auto root = wxtest::scratch_dir("acceptance_determinism");
  auto files = wxtest::write_synthetic(root / "raw");
  std::string why;
  bool ok = false;
  try {
    for (const char* out : {"a", "b"}) {
      Diagnostics diag;
      auto cfg = pipeline::load_pipeline_config(wxtest::write_config(root, files, root / out, 3, 200, 42));
      pipeline::pipeline_run(cfg, diag);
    }
    ok = same_tree(root / "a", root / "b", why);
  } catch (const std::exception& e) {
    why = e.what();
  }
  report("determinism_byte_identical", ok, why + fmt(", %.2fs", seconds_since(t0)));
}

}  // namespace

int main() {
  bss_oracle();
  ward_oracle();
  ellipse_suite();
  glyph_suite();
  synthetic_importance();
  determinism();

  const char* gated = "needs the Data Expo files; checked by acceptance_paper_data";
  skip("cluster_reproduction", gated);
  skip("outlier_reproduction", gated);
  skip("importance_lag_precip", gated);
  skip("overall_spearman_positive", gated);

  std::printf("%s: %d failure(s)\n", failed ? "FAILED" : "OK", failed);
  return failed ? 1 : 0;
}
