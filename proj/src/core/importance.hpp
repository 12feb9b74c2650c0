#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "core/errors.hpp"
#include "core/regions.hpp"

namespace wxskill::importance {

// Row-major design matrix for one (region, error variable) pair. Rows are
// (station, lag, month) error cells.
struct DesignMatrix {
  std::vector<std::string> predictors;
  std::vector<std::vector<double>> x;  // rows x predictors
  std::vector<double> y;
  std::vector<std::string> row_station;
  std::vector<int> row_lag;
  std::vector<int> row_month;

  std::size_t rows() const { return y.size(); }
  std::size_t cols() const { return predictors.size(); }
};

/// Profile features followed by "lag".
const std::vector<std::string>& predictor_names();

DesignMatrix build_design_matrix(std::span<const errors::ErrorCell> cells,
                                 std::span<const regions::StationProfile> profiles,
                                 std::span<const regions::AssignmentRow> assignment, int region,
                                 std::string_view error_variable);

struct ForestConfig {
  std::size_t n_trees = 500;
  std::size_t features_per_split = 0;  // 0: ceil(p / 3)
  std::size_t min_leaf_size = 5;
  bool bootstrap = true;
  std::uint64_t seed = 42;
  std::size_t threads = 0;  // 0: hardware concurrency
};

// Independent, reproducible stream keyed by (seed, a, b).
class Rng {
 public:
  Rng(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0);
  std::uint64_t next() { return engine_(); }
  /// Uniform integer in [0, n).
  std::size_t below(std::size_t n);

 private:
  std::mt19937_64 engine_;
};

class RegressionTree {
 public:
  struct Node {
    int feature = -1;  // -1: leaf
    double threshold = 0;
    std::uint32_t left = 0;
    std::uint32_t right = 0;
    double value = 0;
  };

  static RegressionTree grow(const DesignMatrix& m, std::span<const std::size_t> sample, std::size_t mtry,
                             std::size_t min_leaf, Rng& rng);

  /// `get(feature)` supplies the predictor value for the row being scored.
  template <typename Getter>
  double predict_with(Getter&& get) const {
    std::uint32_t i = 0;
    while (nodes_[i].feature >= 0) i = get(static_cast<std::size_t>(nodes_[i].feature)) <= nodes_[i].threshold
                                           ? nodes_[i].left
                                           : nodes_[i].right;
    return nodes_[i].value;
  }
  double predict(std::span<const double> row) const {
    return predict_with([&](std::size_t f) { return row[f]; });
  }

  const std::vector<Node>& nodes() const { return nodes_; }
  bool uses_feature(std::size_t f) const;

 private:
  std::vector<Node> nodes_;
};

struct FittedTree {
  RegressionTree tree;
  std::vector<std::size_t> oob;  // rows not drawn into the tree's sample
};

class Forest {
 public:
  static Forest fit(const DesignMatrix& m, const ForestConfig& cfg);

  double predict(std::span<const double> row) const;
  const std::vector<FittedTree>& trees() const { return trees_; }
  const ForestConfig& config() const { return cfg_; }

 private:
  ForestConfig cfg_;
  std::vector<FittedTree> trees_;
};

/// Mean over trees of the increase in out-of-bag squared error when one
/// predictor is permuted among that tree's OOB rows.
std::vector<double> permutation_importance(const Forest& forest, const DesignMatrix& m);

/// 100 * (v - min) / (max - min); all-equal input maps to zeros.
std::vector<double> rescale_importance(std::span<const double> raw, Diagnostics* diag = nullptr);

struct ImportanceRow {
  int label = 0;
  std::string region;
  std::string error_variable;
  std::string predictor;
  double raw = 0;
  double rescaled = 0;
};

std::vector<ImportanceRow> compute_importance(std::span<const errors::ErrorCell> cells,
                                              std::span<const regions::StationProfile> profiles,
                                              std::span<const regions::AssignmentRow> assignment,
                                              const ForestConfig& cfg, Diagnostics& diag);

std::string write_importance(std::span<const ImportanceRow> rows);
std::vector<ImportanceRow> read_importance(const Table& t);

/// Runs fn(i) for i in [0, n) on up to `threads` workers; each index once.
void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn);

}  // namespace wxskill::importance
