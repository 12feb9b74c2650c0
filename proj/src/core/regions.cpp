#include "core/regions.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "json.hpp"

namespace wxskill::regions {

using ingest::kVariableCount;
using json = nlohmann::ordered_json;

std::string RegionAssignment::name_of(int label) const {
  auto it = names.find(label);
  return it != names.end() ? it->second : "Region " + std::to_string(label);
}

std::vector<StationProfile> aggregate_profiles(std::span<const ingest::DailyRecord> records,
                                               std::span<const ingest::StationMeta> meta,
                                               Diagnostics& diag) {
  struct Acc {
    std::array<std::vector<double>, kVariableCount> xs;
  };
  std::map<std::string, Acc> acc;
  for (const auto& r : records) {
    auto& a = acc[r.station_id];
    for (std::size_t v = 0; v < kVariableCount; ++v)
      if (r.values[v]) a.xs[v].push_back(*r.values[v]);
  }

  std::vector<StationProfile> out;
  out.reserve(meta.size());
  for (const auto& m : meta) {
    StationProfile p;
    p.station_id = m.station_id;
    p.name = m.name;
    p.longitude = m.longitude;
    p.latitude = m.latitude;
    p.elevation = m.elevation;
    p.distance_to_coast = m.distance_to_coast;
    auto it = acc.find(m.station_id);
    if (it == acc.end()) diag.warn("profiles: station \"" + m.station_id + "\" has no measurements");
    for (std::size_t v = 0; v < kVariableCount; ++v) {
      const auto* xs = it != acc.end() ? &it->second.xs[v] : nullptr;
      const std::size_t n = xs ? xs->size() : 0;
      const auto name = ingest::variables()[v].name;
      if (n == 0) {
        diag.warn("profiles: \"" + m.station_id + "\" has no values for " + std::string(name) +
                  "; mean and SD absent");
        continue;
      }
      double mean = std::accumulate(xs->begin(), xs->end(), 0.0) / static_cast<double>(n);
      p.mean[v] = mean;
      if (n < 2) {
        diag.warn("profiles: \"" + m.station_id + "\" has fewer than 2 values for " + std::string(name) +
                  "; SD absent");
        continue;
      }
      double ss = 0;
      for (double x : *xs) ss += (x - mean) * (x - mean);
      p.sd[v] = std::sqrt(ss / static_cast<double>(n - 1));
    }
    out.push_back(std::move(p));
  }
  return out;
}

const std::vector<std::string>& feature_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> n;
    for (const auto& v : ingest::variables()) {
      n.push_back(std::string(v.name) + "_mean");
      n.push_back(std::string(v.name) + "_sd");
    }
    n.emplace_back("elevation");
    n.emplace_back("distance_to_coast");
    return n;
  }();
  return names;
}

std::vector<Value> feature_vector(const StationProfile& p) {
  std::vector<Value> f;
  f.reserve(2 * kVariableCount + 2);
  for (std::size_t v = 0; v < kVariableCount; ++v) {
    f.push_back(p.mean[v]);
    f.push_back(p.sd[v]);
  }
  f.push_back(p.elevation);
  f.push_back(p.distance_to_coast);
  return f;
}

ZScoreTable standardize(std::span<const StationProfile> profiles, Diagnostics& diag) {
  std::vector<std::string> ids;
  std::vector<std::vector<Value>> cells;
  for (const auto& p : profiles) {
    ids.push_back(p.station_id);
    cells.push_back(feature_vector(p));
  }
  return standardize(std::move(ids), feature_names(), cells, diag);
}

ZScoreTable standardize(std::vector<std::string> station_ids, std::vector<std::string> features,
                        const std::vector<std::vector<Value>>& cells, Diagnostics& diag) {
  const std::size_t n = station_ids.size(), p = features.size();
  if (n < 2) throw Error(ErrorKind::InvalidArgument, "standardize: need at least 2 stations");
  ZScoreTable z;
  z.station_ids = std::move(station_ids);
  z.features = std::move(features);
  z.rows.assign(n, std::vector<double>(p, 0.0));
  z.mean.assign(p, 0.0);
  z.sd.assign(p, 0.0);

  for (std::size_t f = 0; f < p; ++f) {
    double sum = 0;
    std::size_t present = 0;
    for (std::size_t i = 0; i < n; ++i)
      if (cells[i][f]) {
        sum += *cells[i][f];
        ++present;
      }
    if (present == 0) {
      diag.warn("standardize: feature \"" + z.features[f] + "\" absent for every station; set to 0");
      continue;
    }
    const double fill = sum / static_cast<double>(present);
    std::vector<double> col(n);
    for (std::size_t i = 0; i < n; ++i) {
      if (cells[i][f]) {
        col[i] = *cells[i][f];
      } else {
        col[i] = fill;
        z.imputed.emplace_back(z.station_ids[i], z.features[f]);
      }
    }
    double mean = std::accumulate(col.begin(), col.end(), 0.0) / static_cast<double>(n);
    double ss = 0;
    for (double x : col) ss += (x - mean) * (x - mean);
    double sd = std::sqrt(ss / static_cast<double>(n - 1));
    z.mean[f] = mean;
    z.sd[f] = sd;
    if (!(sd > 0)) {
      diag.warn("standardize: feature \"" + z.features[f] + "\" is constant; z-scores set to 0");
      continue;
    }
    for (std::size_t i = 0; i < n; ++i) z.rows[i][f] = (col[i] - mean) / sd;
  }
  for (const auto& [station, feature] : z.imputed)
    diag.warn("standardize: imputed " + feature + " for station \"" + station + "\" with the cross-station mean");
  return z;
}

DistanceMatrix euclidean_distances(const std::vector<std::vector<double>>& rows) {
  const std::size_t n = rows.size();
  DistanceMatrix d(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      double ss = 0;
      for (std::size_t f = 0; f < rows[i].size(); ++f) {
        double diff = rows[i][f] - rows[j][f];
        ss += diff * diff;
      }
      d.set(i, j, std::sqrt(ss));
    }
  }
  return d;
}

DistanceMatrix euclidean_distances(const ZScoreTable& z) {
  for (std::size_t i = 0; i < z.rows.size(); ++i)
    for (std::size_t f = 0; f < z.rows[i].size(); ++f)
      if (!std::isfinite(z.rows[i][f]))
        throw Error(ErrorKind::Compute, "euclidean_distances: absent cell for station \"" + z.station_ids[i] +
                                            "\", feature \"" + z.features[f] + "\"");
  return euclidean_distances(z.rows);
}

Dendrogram ward_cluster(const DistanceMatrix& dist) {
  const std::size_t n = dist.size();
  if (n < 2) throw Error(ErrorKind::InvalidArgument, "ward_cluster: need at least 2 observations");

  // Slot i holds the cluster whose smallest leaf is i; merging slots i < j
  // keeps the result in i, so slot order doubles as the tie-break order.
  std::vector<double> d2(n * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) d2[i * n + j] = dist(i, j) * dist(i, j);
  std::vector<std::size_t> node(n), size(n, 1);
  std::iota(node.begin(), node.end(), 0);
  std::vector<bool> active(n, true);

  Dendrogram dend;
  dend.leaf_count = n;
  for (std::size_t step = 0; step + 1 < n; ++step) {
    double best = std::numeric_limits<double>::infinity();
    std::size_t bi = 0, bj = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (!active[i]) continue;
      for (std::size_t j = i + 1; j < n; ++j) {
        if (!active[j]) continue;
        if (d2[i * n + j] < best) {
          best = d2[i * n + j];
          bi = i;
          bj = j;
        }
      }
    }
    const double ni = static_cast<double>(size[bi]), nj = static_cast<double>(size[bj]);
    for (std::size_t k = 0; k < n; ++k) {
      if (!active[k] || k == bi || k == bj) continue;
      const double nk = static_cast<double>(size[k]);
      double upd = ((ni + nk) * d2[k * n + bi] + (nj + nk) * d2[k * n + bj] - nk * best) / (ni + nj + nk);
      d2[k * n + bi] = d2[bi * n + k] = upd;
    }
    dend.merges.push_back({node[bi], node[bj], std::sqrt(std::max(best, 0.0)), size[bi] + size[bj]});
    node[bi] = n + step;
    size[bi] += size[bj];
    active[bj] = false;
  }
  return dend;
}

RegionAssignment cut_tree(const Dendrogram& dend, std::span<const std::string> station_ids, std::size_t k) {
  const std::size_t n = dend.leaf_count;
  if (station_ids.size() != n) throw Error(ErrorKind::InvalidArgument, "cut_tree: label count mismatch");
  if (k < 1 || k > n)
    throw Error(ErrorKind::InvalidArgument, "cut_tree: k must be in [1, " + std::to_string(n) + "]");

  std::vector<std::size_t> parent(2 * n - 1);
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  for (std::size_t s = 0; s < n - k; ++s) {
    const auto& m = dend.merges[s];
    parent[find(m.left)] = n + s;
    parent[find(m.right)] = n + s;
  }

  std::map<std::size_t, std::string> smallest;
  for (std::size_t i = 0; i < n; ++i) {
    auto root = find(i);
    auto it = smallest.find(root);
    if (it == smallest.end() || station_ids[i] < it->second) smallest[root] = station_ids[i];
  }
  std::vector<std::pair<std::string, std::size_t>> order;
  for (const auto& [root, id] : smallest) order.emplace_back(id, root);
  std::sort(order.begin(), order.end());
  std::map<std::size_t, int> label_of;
  for (std::size_t i = 0; i < order.size(); ++i) label_of[order[i].second] = static_cast<int>(i + 1);

  RegionAssignment a;
  a.k = static_cast<int>(k);
  a.station_ids.assign(station_ids.begin(), station_ids.end());
  for (std::size_t i = 0; i < n; ++i) a.labels.push_back(label_of[find(i)]);
  return a;
}

std::vector<RegionAnchor> parse_region_anchors(std::string_view json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Config, std::string("region anchors: ") + e.what());
  }
  if (!j.contains("regions") || !j["regions"].is_array())
    throw Error(ErrorKind::Config, "region anchors: expected a \"regions\" array");
  std::vector<RegionAnchor> out;
  for (const auto& r : j["regions"]) {
    RegionAnchor a;
    a.name = r.at("name").get<std::string>();
    a.stations = r.at("anchors").get<std::vector<std::string>>();
    out.push_back(std::move(a));
  }
  return out;
}

void assign_region_names(RegionAssignment& a, std::span<const RegionAnchor> anchors,
                         std::span<const ingest::StationMeta> stations, Diagnostics& diag) {
  auto label_for = [&](const std::string& ref) -> std::optional<int> {
    std::string lref = to_lower(ref);
    for (const auto& s : stations) {
      if (s.station_id != ref && to_lower(s.name) != lref) continue;
      for (std::size_t i = 0; i < a.station_ids.size(); ++i)
        if (a.station_ids[i] == s.station_id) return a.labels[i];
    }
    return std::nullopt;
  };
  for (const auto& anchor : anchors) {
    std::optional<int> label;
    for (const auto& ref : anchor.stations)
      if ((label = label_for(ref))) break;
    if (!label) {
      diag.warn("region names: no anchor station found for \"" + anchor.name + "\"");
      continue;
    }
    if (auto it = a.names.find(*label); it != a.names.end()) {
      diag.warn("region names: \"" + anchor.name + "\" anchors cluster " + std::to_string(*label) +
                ", already named \"" + it->second + "\"");
      continue;
    }
    a.names[*label] = anchor.name;
  }
}

// ---- serialization -----------------------------------------------------------

std::string write_profiles(std::span<const StationProfile> profiles) {
  std::vector<std::string> header{"station_id", "name", "longitude", "latitude"};
  for (const auto& f : feature_names()) header.push_back(f);
  CsvWriter w(std::move(header));
  for (const auto& p : profiles) {
    std::vector<std::string> row{p.station_id, p.name, format_number(p.longitude), format_number(p.latitude)};
    for (const auto& v : feature_vector(p)) row.push_back(format_value(v));
    w.add_row(std::move(row));
  }
  return w.str();
}

std::vector<StationProfile> read_profiles(const Table& t) {
  const auto ctx = "profiles";
  auto c_id = t.require_column("station_id", ctx), c_name = t.require_column("name", ctx),
       c_lon = t.require_column("longitude", ctx), c_lat = t.require_column("latitude", ctx);
  std::vector<std::size_t> c_feat;
  for (const auto& f : feature_names()) c_feat.push_back(t.require_column(f, ctx));
  std::vector<StationProfile> out;
  for (const auto& row : t.rows) {
    auto get = [&](std::size_t c) -> std::string { return c < row.size() ? row[c] : std::string{}; };
    StationProfile p;
    p.station_id = get(c_id);
    p.name = get(c_name);
    p.longitude = parse_number(get(c_lon)).value_or(0);
    p.latitude = parse_number(get(c_lat)).value_or(0);
    for (std::size_t v = 0; v < kVariableCount; ++v) {
      p.mean[v] = parse_number(get(c_feat[2 * v]));
      p.sd[v] = parse_number(get(c_feat[2 * v + 1]));
    }
    p.elevation = parse_number(get(c_feat[2 * kVariableCount]));
    p.distance_to_coast = parse_number(get(c_feat[2 * kVariableCount + 1]));
    out.push_back(std::move(p));
  }
  return out;
}

std::string write_zscores(const ZScoreTable& z) {
  std::vector<std::string> header{"station_id"};
  header.insert(header.end(), z.features.begin(), z.features.end());
  CsvWriter w(std::move(header));
  for (std::size_t i = 0; i < z.rows.size(); ++i) {
    std::vector<std::string> row{z.station_ids[i]};
    for (double v : z.rows[i]) row.push_back(format_number(v));
    w.add_row(std::move(row));
  }
  return w.str();
}

std::string write_dendrogram(const Dendrogram& d, std::span<const std::string> station_ids) {
  const std::size_t n = d.leaf_count;
  json merges = json::array();
  for (std::size_t s = 0; s < d.merges.size(); ++s) {
    const auto& m = d.merges[s];
    merges.push_back({{"node", n + s}, {"left", m.left}, {"right", m.right}, {"height", m.height}, {"size", m.size}});
  }
  // Nested form, built bottom-up so deep trees do not recurse.
  std::vector<json> nodes(2 * n - 1);
  for (std::size_t i = 0; i < n; ++i) nodes[i] = {{"leaf", i}, {"station_id", station_ids[i]}};
  for (std::size_t s = 0; s < d.merges.size(); ++s) {
    const auto& m = d.merges[s];
    nodes[n + s] = {{"node", n + s},
                    {"height", m.height},
                    {"size", m.size},
                    {"children", json::array({std::move(nodes[m.left]), std::move(nodes[m.right])})}};
  }
  json out = {{"schema_version", 1},
              {"method", "ward"},
              {"leaf_count", n},
              {"leaves", std::vector<std::string>(station_ids.begin(), station_ids.end())},
              {"merges", std::move(merges)},
              {"tree", n >= 2 ? std::move(nodes[2 * n - 2]) : std::move(nodes[0])}};
  return out.dump(1) + "\n";
}

std::string write_assignments(const RegionAssignment& a, std::span<const StationProfile> profiles) {
  std::map<std::string, const StationProfile*> by_id;
  for (const auto& p : profiles) by_id[p.station_id] = &p;
  CsvWriter w({"station_id", "name", "longitude", "latitude", "label", "region"});
  for (std::size_t i = 0; i < a.station_ids.size(); ++i) {
    auto it = by_id.find(a.station_ids[i]);
    const StationProfile* p = it != by_id.end() ? it->second : nullptr;
    w.add_row({a.station_ids[i], p ? p->name : std::string{}, p ? format_number(p->longitude) : "",
               p ? format_number(p->latitude) : "", std::to_string(a.labels[i]), a.name_of(a.labels[i])});
  }
  return w.str();
}

std::vector<AssignmentRow> read_assignments(const Table& t) {
  const auto ctx = "assignments";
  auto c_id = t.require_column("station_id", ctx), c_name = t.require_column("name", ctx),
       c_lon = t.require_column("longitude", ctx), c_lat = t.require_column("latitude", ctx),
       c_label = t.require_column("label", ctx), c_region = t.require_column("region", ctx);
  std::vector<AssignmentRow> out;
  for (const auto& row : t.rows) {
    auto get = [&](std::size_t c) -> std::string { return c < row.size() ? row[c] : std::string{}; };
    AssignmentRow r;
    r.station_id = get(c_id);
    r.name = get(c_name);
    r.longitude = parse_number(get(c_lon)).value_or(0);
    r.latitude = parse_number(get(c_lat)).value_or(0);
    auto label = parse_number(get(c_label));
    if (!label) throw Error(ErrorKind::Parse, "assignments: bad label for \"" + r.station_id + "\"");
    r.label = static_cast<int>(*label);
    r.region = get(c_region);
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace wxskill::regions
