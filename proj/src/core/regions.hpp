#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include "core/common.hpp"
#include "core/ingest.hpp"

namespace wxskill::regions {

struct StationProfile {
  std::string station_id;
  std::string name;
  double longitude = 0;
  double latitude = 0;
  std::array<Value, ingest::kVariableCount> mean{};
  std::array<Value, ingest::kVariableCount> sd{};
  Value elevation;
  Value distance_to_coast;
};

/// Per-station sample mean and SD (n-1) of every variable, absent values ignored.
std::vector<StationProfile> aggregate_profiles(std::span<const ingest::DailyRecord> records,
                                               std::span<const ingest::StationMeta> meta,
                                               Diagnostics& diag);

/// Clustering features: <var>_mean, <var>_sd for every variable, then
/// elevation and distance_to_coast.
const std::vector<std::string>& feature_names();
std::vector<Value> feature_vector(const StationProfile& p);

struct ZScoreTable {
  std::vector<std::string> station_ids;
  std::vector<std::string> features;
  std::vector<std::vector<double>> rows;  // stations x features
  std::vector<double> mean;               // per feature, before standardizing
  std::vector<double> sd;
  std::vector<std::pair<std::string, std::string>> imputed;  // (station, feature)
};

/// Column-wise z-scores. Absent cells take the column mean (z = 0) and are
/// listed in `imputed`; constant columns become zeros with a warning.
ZScoreTable standardize(std::span<const StationProfile> profiles, Diagnostics& diag);
ZScoreTable standardize(std::vector<std::string> station_ids, std::vector<std::string> features,
                        const std::vector<std::vector<Value>>& cells, Diagnostics& diag);

class DistanceMatrix {
 public:
  explicit DistanceMatrix(std::size_t n) : n_(n), d_(n * n, 0.0) {}
  std::size_t size() const { return n_; }
  double operator()(std::size_t i, std::size_t j) const { return d_[i * n_ + j]; }
  void set(std::size_t i, std::size_t j, double v) {
    d_[i * n_ + j] = v;
    d_[j * n_ + i] = v;
  }

 private:
  std::size_t n_;
  std::vector<double> d_;
};

/// Pairwise L2 distances between z-score rows. Non-finite cells are fatal.
DistanceMatrix euclidean_distances(const ZScoreTable& z);
DistanceMatrix euclidean_distances(const std::vector<std::vector<double>>& rows);

struct Merge {
  std::size_t left;   // node ids: leaves 0..n-1, merge s creates node n+s
  std::size_t right;
  double height;
  std::size_t size;
};

struct Dendrogram {
  std::size_t leaf_count = 0;
  std::vector<Merge> merges;
};

/// Ward's minimum-variance agglomeration via the Lance-Williams recurrence on
/// squared distances; heights are reported on the distance scale. Ties go to
/// the lexicographically smallest pair of clusters (by smallest member leaf).
Dendrogram ward_cluster(const DistanceMatrix& d);

struct RegionAssignment {
  std::vector<std::string> station_ids;
  std::vector<int> labels;  // 1..k, parallel to station_ids
  int k = 0;
  std::map<int, std::string> names;

  std::string name_of(int label) const;
};

/// Undo the last k-1 merges; components are labelled 1..k in order of their
/// smallest member station id.
RegionAssignment cut_tree(const Dendrogram& dend, std::span<const std::string> station_ids, std::size_t k);

struct RegionAnchor {
  std::string name;
  std::vector<std::string> stations;  // station ids or names, first match wins
};

std::vector<RegionAnchor> parse_region_anchors(std::string_view json_text);

/// Names each label after the anchor stations it contains; others get "Region <label>".
void assign_region_names(RegionAssignment& a, std::span<const RegionAnchor> anchors,
                         std::span<const ingest::StationMeta> stations, Diagnostics& diag);

// ---- serialization -----------------------------------------------------------

std::string write_profiles(std::span<const StationProfile> profiles);
std::vector<StationProfile> read_profiles(const Table& t);
std::string write_zscores(const ZScoreTable& z);
std::string write_dendrogram(const Dendrogram& d, std::span<const std::string> station_ids);

struct AssignmentRow {
  std::string station_id;
  std::string name;
  double longitude = 0;
  double latitude = 0;
  int label = 0;
  std::string region;
};
std::string write_assignments(const RegionAssignment& a, std::span<const StationProfile> profiles);
std::vector<AssignmentRow> read_assignments(const Table& t);

}  // namespace wxskill::regions
