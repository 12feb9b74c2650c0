#include "core/importance.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <functional>
#include <map>
#include <mutex>
#include <numeric>
#include <thread>

namespace wxskill::importance {

namespace {

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

}  // namespace

Rng::Rng(std::uint64_t seed, std::uint64_t a, std::uint64_t b)
    : engine_(splitmix(splitmix(splitmix(seed) ^ a) ^ (b * 0xD1B54A32D192ED03ull))) {}

std::size_t Rng::below(std::size_t n) {
  // Rejection sampling keeps the draw exact and platform independent.
  const std::uint64_t bound = static_cast<std::uint64_t>(n);
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % bound;
  std::uint64_t r;
  do r = engine_();
  while (r >= limit);
  return static_cast<std::size_t>(r % bound);
}

void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn) {
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = std::min(threads, n);
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::jthread> pool;
  for (std::size_t t = 0; t < threads; ++t)
    pool.emplace_back([&] {
      for (std::size_t i; (i = next.fetch_add(1)) < n;) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  pool.clear();
  if (failure) std::rethrow_exception(failure);
}

const std::vector<std::string>& predictor_names() {
  static const std::vector<std::string> names = [] {
    auto n = regions::feature_names();
    n.emplace_back("lag");
    return n;
  }();
  return names;
}

DesignMatrix build_design_matrix(std::span<const errors::ErrorCell> cells,
                                 std::span<const regions::StationProfile> profiles,
                                 std::span<const regions::AssignmentRow> assignment, int region,
                                 std::string_view error_variable) {
  // Absent profile features fall back to the cross-station mean, matching
  // the imputation used for clustering.
  const std::size_t nf = regions::feature_names().size();
  std::vector<double> fill(nf, 0.0);
  std::vector<std::size_t> count(nf, 0);
  std::map<std::string, std::vector<Value>> features;
  for (const auto& p : profiles) {
    auto f = regions::feature_vector(p);
    for (std::size_t i = 0; i < nf; ++i)
      if (f[i]) {
        fill[i] += *f[i];
        ++count[i];
      }
    features[p.station_id] = std::move(f);
  }
  for (std::size_t i = 0; i < nf; ++i) fill[i] = count[i] ? fill[i] / static_cast<double>(count[i]) : 0.0;

  std::map<std::string, int> label_of;
  std::string region_name;
  for (const auto& a : assignment) {
    label_of[a.station_id] = a.label;
    if (a.label == region) region_name = a.region;
  }

  DesignMatrix m;
  m.predictors = predictor_names();
  for (const auto& c : cells) {
    if (!c.lag || !c.month) continue;
    auto l = label_of.find(c.station_id);
    if (l == label_of.end() || l->second != region) continue;
    auto y = errors::metric_value(c, error_variable);
    if (!y || !std::isfinite(*y)) continue;
    auto f = features.find(c.station_id);
    if (f == features.end()) continue;
    std::vector<double> row(nf + 1);
    for (std::size_t i = 0; i < nf; ++i) row[i] = f->second[i].value_or(fill[i]);
    row[nf] = *c.lag;
    m.x.push_back(std::move(row));
    m.y.push_back(*y);
    m.row_station.push_back(c.station_id);
    m.row_lag.push_back(*c.lag);
    m.row_month.push_back(*c.month);
  }
  if (m.rows() == 0)
    throw Error(ErrorKind::Compute, "design matrix: no rows for region " + std::to_string(region) +
                                        (region_name.empty() ? "" : " (" + region_name + ")") + ", error variable " +
                                        std::string(error_variable));
  return m;
}

// ---- tree -------------------------------------------------------------------------

bool RegressionTree::uses_feature(std::size_t f) const {
  return std::any_of(nodes_.begin(), nodes_.end(), [&](const Node& n) { return n.feature == static_cast<int>(f); });
}

RegressionTree RegressionTree::grow(const DesignMatrix& m, std::span<const std::size_t> sample, std::size_t mtry,
                                    std::size_t min_leaf, Rng& rng) {
  RegressionTree tree;
  std::vector<std::size_t> idx(sample.begin(), sample.end());
  const std::size_t p = m.cols();
  std::vector<std::size_t> feature_pool(p);
  std::vector<std::pair<double, double>> xy;

  struct Task {
    std::uint32_t node;
    std::size_t begin, end;
  };
  tree.nodes_.push_back({});
  std::vector<Task> stack{{0, 0, idx.size()}};
  while (!stack.empty()) {
    Task t = stack.back();
    stack.pop_back();
    const std::size_t n = t.end - t.begin;
    double sum = 0;
    for (std::size_t k = t.begin; k < t.end; ++k) sum += m.y[idx[k]];
    const double mean = sum / static_cast<double>(n);
    tree.nodes_[t.node].value = mean;

    bool pure = true;
    for (std::size_t k = t.begin + 1; k < t.end && pure; ++k) pure = m.y[idx[k]] == m.y[idx[t.begin]];
    if (pure || n < 2 * min_leaf) continue;

    std::iota(feature_pool.begin(), feature_pool.end(), 0);
    double best_gain = 0;
    int best_feature = -1;
    double best_threshold = 0;
    for (std::size_t c = 0; c < mtry; ++c) {
      std::swap(feature_pool[c], feature_pool[c + rng.below(p - c)]);
      const std::size_t f = feature_pool[c];
      xy.clear();
      for (std::size_t k = t.begin; k < t.end; ++k) xy.emplace_back(m.x[idx[k]][f], m.y[idx[k]] - mean);
      std::sort(xy.begin(), xy.end());
      if (xy.front().first == xy.back().first) continue;
      double left = 0;
      for (std::size_t k = 1; k < n; ++k) {
        left += xy[k - 1].second;
        if (k < min_leaf || n - k < min_leaf) continue;
        if (xy[k - 1].first == xy[k].first) continue;
        const double nl = static_cast<double>(k), nr = static_cast<double>(n - k);
        // Centered sums: SSE reduction = L^2/nl + R^2/nr with R = -L.
        const double gain = left * left / nl + left * left / nr;
        if (gain > best_gain) {
          best_gain = gain;
          best_feature = static_cast<int>(f);
          double mid = 0.5 * (xy[k - 1].first + xy[k].first);
          best_threshold = mid < xy[k].first ? mid : xy[k - 1].first;
        }
      }
    }
    if (best_feature < 0) continue;

    auto split = std::partition(idx.begin() + static_cast<std::ptrdiff_t>(t.begin),
                                idx.begin() + static_cast<std::ptrdiff_t>(t.end), [&](std::size_t r) {
                                  return m.x[r][static_cast<std::size_t>(best_feature)] <= best_threshold;
                                });
    const std::size_t mid = static_cast<std::size_t>(split - idx.begin());
    const auto left_id = static_cast<std::uint32_t>(tree.nodes_.size());
    tree.nodes_.push_back({});
    tree.nodes_.push_back({});
    auto& node = tree.nodes_[t.node];
    node.feature = best_feature;
    node.threshold = best_threshold;
    node.left = left_id;
    node.right = left_id + 1;
    stack.push_back({left_id + 1, mid, t.end});
    stack.push_back({left_id, t.begin, mid});
  }
  return tree;
}

// ---- forest -----------------------------------------------------------------------

Forest Forest::fit(const DesignMatrix& m, const ForestConfig& cfg_in) {
  ForestConfig cfg = cfg_in;
  const std::size_t p = m.cols(), n = m.rows();
  if (cfg.n_trees < 1) throw Error(ErrorKind::InvalidArgument, "forest: n_trees must be >= 1");
  if (cfg.min_leaf_size < 1) throw Error(ErrorKind::InvalidArgument, "forest: min_leaf_size must be >= 1");
  if (cfg.features_per_split == 0) cfg.features_per_split = std::max<std::size_t>(1, (p + 2) / 3);
  if (cfg.features_per_split > p)
    throw Error(ErrorKind::InvalidArgument, "forest: features_per_split exceeds the predictor count");
  if (n < 2 * cfg.min_leaf_size)
    throw Error(ErrorKind::Compute, "forest: " + std::to_string(n) + " rows is fewer than twice min_leaf_size");

  Forest forest;
  forest.cfg_ = cfg;
  forest.trees_.resize(cfg.n_trees);
  parallel_for(cfg.n_trees, cfg.threads, [&](std::size_t t) {
    Rng rng(cfg.seed, t);
    std::vector<std::size_t> sample(n);
    std::vector<char> drawn(n, 0);
    if (cfg.bootstrap) {
      for (auto& s : sample) {
        s = rng.below(n);
        drawn[s] = 1;
      }
    } else {
      std::iota(sample.begin(), sample.end(), 0);
    }
    FittedTree ft;
    ft.tree = RegressionTree::grow(m, sample, cfg.features_per_split, cfg.min_leaf_size, rng);
    if (cfg.bootstrap)
      for (std::size_t r = 0; r < n; ++r)
        if (!drawn[r]) ft.oob.push_back(r);
    forest.trees_[t] = std::move(ft);
  });
  return forest;
}

double Forest::predict(std::span<const double> row) const {
  double s = 0;
  for (const auto& t : trees_) s += t.tree.predict(row);
  return s / static_cast<double>(trees_.size());
}

std::vector<double> permutation_importance(const Forest& forest, const DesignMatrix& m) {
  const std::size_t p = m.cols();
  const auto& trees = forest.trees();
  std::vector<std::vector<double>> per_tree(trees.size());
  parallel_for(trees.size(), forest.config().threads, [&](std::size_t t) {
    const auto& ft = trees[t];
    if (ft.oob.empty()) return;
    const auto& rows = ft.oob;
    auto mse = [&](std::size_t feature, const std::vector<std::size_t>* perm) {
      double s = 0;
      for (std::size_t k = 0; k < rows.size(); ++k) {
        const auto& row = m.x[rows[k]];
        double pred = ft.tree.predict_with([&](std::size_t f) {
          return perm && f == feature ? m.x[(*perm)[k]][f] : row[f];
        });
        double e = m.y[rows[k]] - pred;
        s += e * e;
      }
      return s / static_cast<double>(rows.size());
    };
    const double base = mse(0, nullptr);
    std::vector<double> delta(p, 0.0);
    std::vector<std::size_t> perm;
    for (std::size_t f = 0; f < p; ++f) {
      if (!ft.tree.uses_feature(f)) continue;  // permuting cannot change predictions
      perm = rows;
      Rng rng(forest.config().seed ^ 0xA5A5A5A5A5A5A5A5ull, t, f + 1);
      for (std::size_t i = perm.size(); i > 1; --i) std::swap(perm[i - 1], perm[rng.below(i)]);
      delta[f] = mse(f, &perm) - base;
    }
    per_tree[t] = std::move(delta);
  });

  std::vector<double> imp(p, 0.0);
  std::size_t used = 0;
  for (const auto& d : per_tree) {
    if (d.empty()) continue;
    ++used;
    for (std::size_t f = 0; f < p; ++f) imp[f] += d[f];
  }
  if (used)
    for (auto& v : imp) v /= static_cast<double>(used);
  return imp;
}

std::vector<double> rescale_importance(std::span<const double> raw, Diagnostics* diag) {
  if (raw.empty()) throw Error(ErrorKind::InvalidArgument, "rescale_importance: no predictors");
  auto [lo, hi] = std::minmax_element(raw.begin(), raw.end());
  const double min = *lo, range = *hi - *lo;
  std::vector<double> out(raw.size(), 0.0);
  if (!(range > 0)) {
    if (diag) diag->warn("importance: all raw importances equal; rescaled to 0");
    return out;
  }
  for (std::size_t i = 0; i < raw.size(); ++i) out[i] = 100.0 * ((raw[i] - min) / range);  // exact 0 and 100 at the extremes
  return out;
}

std::vector<ImportanceRow> compute_importance(std::span<const errors::ErrorCell> cells,
                                              std::span<const regions::StationProfile> profiles,
                                              std::span<const regions::AssignmentRow> assignment,
                                              const ForestConfig& cfg, Diagnostics& diag) {
  std::map<int, std::string> regions;
  for (const auto& a : assignment) regions.emplace(a.label, a.region);
  std::vector<ImportanceRow> out;
  for (const auto& [label, name] : regions) {
    for (auto metric : errors::kMetrics) {
      auto m = build_design_matrix(cells, profiles, assignment, label, metric);
      auto forest = Forest::fit(m, cfg);
      auto raw = permutation_importance(forest, m);
      Diagnostics local;
      auto scaled = rescale_importance(raw, &local);
      for (auto& w : local.warnings) diag.warn(name + " / " + std::string(metric) + ": " + w);
      for (std::size_t f = 0; f < raw.size(); ++f)
        out.push_back({label, name, std::string(metric), m.predictors[f], raw[f], scaled[f]});
    }
  }
  return out;
}

std::string write_importance(std::span<const ImportanceRow> rows) {
  CsvWriter w({"label", "region", "error_variable", "predictor", "raw", "rescaled"});
  for (const auto& r : rows)
    w.add_row({std::to_string(r.label), r.region, r.error_variable, r.predictor, format_number(r.raw),
               format_number(r.rescaled)});
  return w.str();
}

std::vector<ImportanceRow> read_importance(const Table& t) {
  const auto ctx = "importance";
  auto c_label = t.require_column("label", ctx), c_region = t.require_column("region", ctx),
       c_var = t.require_column("error_variable", ctx), c_pred = t.require_column("predictor", ctx),
       c_raw = t.require_column("raw", ctx), c_res = t.require_column("rescaled", ctx);
  std::vector<ImportanceRow> out;
  for (const auto& row : t.rows) {
    auto get = [&](std::size_t c) -> std::string { return c < row.size() ? row[c] : std::string{}; };
    out.push_back({static_cast<int>(parse_number(get(c_label)).value_or(0)), get(c_region), get(c_var), get(c_pred),
                   parse_number(get(c_raw)).value_or(0), parse_number(get(c_res)).value_or(0)});
  }
  return out;
}

}  // namespace wxskill::importance
