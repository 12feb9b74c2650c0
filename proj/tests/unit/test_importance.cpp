#include <algorithm>
#include <atomic>
#include <cmath>
#include <map>
#include <numeric>
#include <random>

#include "core/importance.hpp"
#include "doctest.h"

using namespace wxskill;
using namespace wxskill::importance;

namespace {

// y = 3 x0 + x1^2 + noise; x2..x4 are pure noise, x5 is constant.
DesignMatrix synthetic(std::uint64_t seed, std::size_t n) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z(0, 1);
  DesignMatrix m;
  m.predictors = {"signal", "curve", "noise_a", "noise_b", "noise_c", "constant"};
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> row(6);
    for (std::size_t f = 0; f < 5; ++f) row[f] = z(rng);
    row[5] = 1.5;
    m.y.push_back(3 * row[0] + row[1] * row[1] + 0.3 * z(rng));
    m.x.push_back(std::move(row));
  }
  return m;
}

std::size_t leaf_of(const RegressionTree& t, const std::vector<double>& row) {
  std::uint32_t i = 0;
  const auto& nodes = t.nodes();
  while (nodes[i].feature >= 0)
    i = row[static_cast<std::size_t>(nodes[i].feature)] <= nodes[i].threshold ? nodes[i].left : nodes[i].right;
  return i;
}

}  // namespace

TEST_CASE("rescale maps min to 0 and max to 100") {
  std::vector<double> raw{0.4, -0.1, 2.5, 1.0};
  auto s = rescale_importance(raw);
  CHECK(s[1] == 0.0);
  CHECK(s[2] == 100.0);
  CHECK(s[0] == doctest::Approx(100 * 0.5 / 2.6));
  CHECK(s[3] == doctest::Approx(100 * 1.1 / 2.6));
}

TEST_CASE("rescale is invariant under positive affine maps") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> z(0, 1);
  std::uniform_real_distribution<double> u(0.01, 50);
  for (int rep = 0; rep < 200; ++rep) {
    std::vector<double> raw(2 + rep % 30);
    for (auto& v : raw) v = z(rng);
    const double a = u(rng), b = 10 * z(rng);
    std::vector<double> moved(raw.size());
    for (std::size_t i = 0; i < raw.size(); ++i) moved[i] = a * raw[i] + b;
    auto s1 = rescale_importance(raw), s2 = rescale_importance(moved);
    for (std::size_t i = 0; i < raw.size(); ++i) {
      CHECK(s1[i] >= 0.0);
      CHECK(s1[i] <= 100.0);
      CHECK(s2[i] == doctest::Approx(s1[i]).epsilon(1e-9));
    }
    CHECK(*std::min_element(s1.begin(), s1.end()) == 0.0);
    CHECK(*std::max_element(s1.begin(), s1.end()) == 100.0);
  }
}

TEST_CASE("rescale of all-equal importances is zero with a warning") {
  std::vector<double> raw{0.7, 0.7, 0.7};
  Diagnostics diag;
  auto s = rescale_importance(raw, &diag);
  for (double v : s) CHECK(v == 0.0);
  CHECK(diag.warnings.size() == 1);
}

TEST_CASE("rng streams are keyed and reproducible") {
  Rng a(42, 1, 2), b(42, 1, 2), c(42, 2, 1), d(43, 1, 2);
  const auto va = a.next();
  CHECK(va == b.next());
  CHECK(va != c.next());
  CHECK(va != d.next());
  Rng e(5, 0);
  for (int i = 0; i < 1000; ++i) CHECK(e.below(7) < 7);
}

TEST_CASE("parallel_for visits every index once") {
  for (std::size_t threads : {1u, 3u, 8u}) {
    std::vector<std::atomic<int>> hits(257);
    parallel_for(hits.size(), threads, [&](std::size_t i) { hits[i]++; });
    for (auto& h : hits) CHECK(h.load() == 1);
  }
}

TEST_CASE("tree leaves hold at least min_leaf samples and predict within the sample range") {
  auto m = synthetic(9, 300);
  std::vector<std::size_t> sample(m.rows());
  Rng draw(1, 0);
  for (auto& s : sample) s = draw.below(m.rows());
  for (std::size_t min_leaf : {1u, 5u, 20u}) {
    Rng rng(7, min_leaf);
    auto tree = RegressionTree::grow(m, sample, 2, min_leaf, rng);
    std::map<std::size_t, std::size_t> count;
    for (auto s : sample) ++count[leaf_of(tree, m.x[s])];
    for (auto [leaf, n] : count) CHECK(n >= min_leaf);
    double lo = INFINITY, hi = -INFINITY;
    for (auto s : sample) {
      lo = std::min(lo, m.y[s]);
      hi = std::max(hi, m.y[s]);
    }
    for (const auto& row : m.x) {
      const double p = tree.predict(row);
      CHECK(p >= lo);
      CHECK(p <= hi);
    }
    CHECK(!tree.uses_feature(5));
  }
}

TEST_CASE("forest predictions stay within the training response range") {
  auto m = synthetic(10, 200);
  ForestConfig cfg;
  cfg.n_trees = 60;
  auto f = Forest::fit(m, cfg);
  CHECK(f.trees().size() == 60);
  const double lo = *std::min_element(m.y.begin(), m.y.end());
  const double hi = *std::max_element(m.y.begin(), m.y.end());
  std::mt19937_64 rng(1);
  std::normal_distribution<double> z(0, 4);
  for (int i = 0; i < 500; ++i) {
    std::vector<double> row(6);
    for (auto& v : row) v = z(rng);
    const double p = f.predict(row);
    CHECK(p >= lo);
    CHECK(p <= hi);
  }
}

TEST_CASE("forest is deterministic for a seed regardless of thread count") {
  auto m = synthetic(11, 150);
  ForestConfig cfg;
  cfg.n_trees = 80;
  cfg.seed = 1234;
  cfg.threads = 1;
  auto f1 = Forest::fit(m, cfg);
  auto i1 = permutation_importance(f1, m);
  cfg.threads = 6;
  auto f2 = Forest::fit(m, cfg);
  auto i2 = permutation_importance(f2, m);
  REQUIRE(i1.size() == i2.size());
  for (std::size_t k = 0; k < i1.size(); ++k) CHECK(i1[k] == i2[k]);
  for (const auto& row : m.x) CHECK(f1.predict(row) == f2.predict(row));

  cfg.seed = 1235;
  auto i3 = permutation_importance(Forest::fit(m, cfg), m);
  CHECK(i3 != i1);
}

TEST_CASE("permutation importance ranks the signal and ignores unused predictors") {
  auto m = synthetic(12, 250);
  ForestConfig cfg;
  cfg.n_trees = 150;
  auto f = Forest::fit(m, cfg);
  auto imp = permutation_importance(f, m);
  REQUIRE(imp.size() == 6);
  CHECK(imp[5] == 0.0);
  for (std::size_t k = 2; k < 5; ++k) {
    CHECK(imp[0] > imp[k]);
    CHECK(imp[1] > imp[k]);
  }
  CHECK(imp[0] > imp[1]);
  for (const auto& t : f.trees()) {
    CHECK(!t.tree.uses_feature(5));
    CHECK(!t.oob.empty());
  }
}

TEST_CASE("default features per split is ceil(p / 3)") {
  auto m = synthetic(13, 60);
  ForestConfig cfg;
  cfg.n_trees = 5;
  auto f = Forest::fit(m, cfg);
  CHECK(f.config().features_per_split == 2);
  CHECK(predictor_names().size() == regions::feature_names().size() + 1);
  CHECK(predictor_names().back() == "lag");
}

TEST_CASE("design matrix rows are per-lag per-month cells of one region") {
  std::vector<regions::StationProfile> profiles(2);
  profiles[0].station_id = "KA";
  profiles[1].station_id = "KB";
  for (std::size_t v = 0; v < ingest::kVariableCount; ++v) {
    profiles[0].mean[v] = 1.0 + static_cast<double>(v);
    profiles[0].sd[v] = 0.5;
    profiles[1].mean[v] = 2.0;
  }
  profiles[0].elevation = 100;
  profiles[1].elevation = 300;
  profiles[0].distance_to_coast = 10;
  std::vector<regions::AssignmentRow> assign{{"KA", "", 0, 0, 1, "R1"}, {"KB", "", 0, 0, 1, "R1"}};
  std::vector<errors::ErrorCell> cells;
  for (const char* id : {"KA", "KB"}) {
    errors::ErrorCell all;
    all.station_id = id;
    all.mae_min_temp = 9;
    cells.push_back(all);
    for (int lag = 0; lag < 2; ++lag) {
      errors::ErrorCell c;
      c.station_id = id;
      c.lag = lag;
      c.month = 3;
      c.mae_min_temp = lag + 0.5;
      cells.push_back(c);
    }
  }
  cells.back().mae_min_temp.reset();

  auto m = build_design_matrix(cells, profiles, assign, 1, "min_temp");
  CHECK(m.rows() == 3);
  CHECK(m.cols() == predictor_names().size());
  CHECK(m.x[0].back() == 0);
  CHECK(m.x[1].back() == 1);
  CHECK(m.y[1] == 1.5);
  // KB has no SDs and no distance to coast; they fall back to KA's values.
  const auto& names = predictor_names();
  const auto dist = static_cast<std::size_t>(std::find(names.begin(), names.end(), "distance_to_coast") - names.begin());
  REQUIRE(dist < names.size());
  CHECK(m.x[2][dist] == 10);
  CHECK_THROWS_AS(build_design_matrix(cells, profiles, assign, 2, "min_temp"), Error);
}

TEST_CASE("importance table round trip") {
  std::vector<ImportanceRow> rows{{1, "Region A", "precip", "lag", 0.125, 100}, {1, "Region A", "precip", "min_temp_mean", -0.01, 0}};
  auto back = read_importance(parse_table(write_importance(rows)));
  REQUIRE(back.size() == 2);
  CHECK(back[0].region == "Region A");
  CHECK(back[0].raw == 0.125);
  CHECK(back[1].predictor == "min_temp_mean");
  CHECK(back[1].rescaled == 0);
}

TEST_CASE("forest on y = x1 fits the training data") {
  std::mt19937_64 rng(14);
  std::uniform_real_distribution<double> u(-5, 5);
  DesignMatrix m;
  m.predictors = {"x1", "x2", "x3"};
  for (int i = 0; i < 500; ++i) {
    std::vector<double> row{u(rng), u(rng), u(rng)};
    m.y.push_back(row[0]);
    m.x.push_back(std::move(row));
  }
  ForestConfig cfg;
  cfg.n_trees = 100;
  cfg.min_leaf_size = 1;
  auto f = Forest::fit(m, cfg);
  double mean = 0;
  for (double y : m.y) mean += y / 500.0;
  double ss_res = 0, ss_tot = 0;
  for (std::size_t i = 0; i < m.rows(); ++i) {
    const double e = m.y[i] - f.predict(m.x[i]);
    ss_res += e * e;
    ss_tot += (m.y[i] - mean) * (m.y[i] - mean);
  }
  CHECK(1.0 - ss_res / ss_tot > 0.95);
}

TEST_CASE("constant response gives constant predictions and zero importance") {
  auto m = synthetic(15, 80);
  for (auto& y : m.y) y = 4.25;
  ForestConfig cfg;
  cfg.n_trees = 30;
  auto f = Forest::fit(m, cfg);
  for (const auto& row : m.x) CHECK(f.predict(row) == 4.25);
  for (double v : permutation_importance(f, m)) CHECK(v == 0.0);
  Diagnostics diag;
  for (double v : rescale_importance(permutation_importance(f, m), &diag)) CHECK(v == 0.0);
  CHECK(diag.warnings.size() == 1);
}

TEST_CASE("too few rows for the leaf size is an error") {
  auto m = synthetic(16, 9);
  ForestConfig cfg;
  cfg.n_trees = 3;
  CHECK_THROWS_AS(Forest::fit(m, cfg), Error);
  cfg.min_leaf_size = 4;
  CHECK_NOTHROW(Forest::fit(m, cfg));
}

TEST_CASE("signal beats noise, and a shuffled copy of the noise does not change that") {
  int wins = 0, wins_dup = 0;
  for (int rep = 0; rep < 100; ++rep) {
    std::mt19937_64 rng(700 + rep);
    std::normal_distribution<double> z(0, 1);
    DesignMatrix m;
    m.predictors = {"x1", "x2"};
    for (int i = 0; i < 120; ++i) {
      std::vector<double> row{z(rng), z(rng)};
      m.y.push_back(row[0] + z(rng));
      m.x.push_back(std::move(row));
    }
    ForestConfig cfg;
    cfg.n_trees = 60;
    cfg.seed = 100 + rep;
    cfg.features_per_split = 1;
    auto imp = permutation_importance(Forest::fit(m, cfg), m);
    wins += imp[0] > imp[1];

    std::vector<std::size_t> order(m.rows());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    m.predictors.push_back("x2_shuffled");
    for (std::size_t i = 0; i < m.rows(); ++i) m.x[i].push_back(m.x[order[i]][1]);
    auto dup = permutation_importance(Forest::fit(m, cfg), m);
    wins_dup += dup[0] > dup[1] && dup[0] > dup[2];
  }
  CHECK(wins >= 95);
  CHECK(wins_dup >= 95);
}
