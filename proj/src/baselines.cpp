#include "fairmap/baselines.hpp"

#include <algorithm>
#include <cmath>

#include "json.hpp"

namespace fairmap::baselines {

double empirical_cdf(const std::vector<double>& sorted_values, double v) {
  auto lo = std::lower_bound(sorted_values.begin(), sorted_values.end(), v);
  auto hi = std::upper_bound(sorted_values.begin(), sorted_values.end(), v);
  double below = static_cast<double>(lo - sorted_values.begin());
  double at_or_below = static_cast<double>(hi - sorted_values.begin());
  // Ties resolve to the midpoint rank.
  return 0.5 * (below + at_or_below) / static_cast<double>(sorted_values.size());
}

double empirical_quantile(const std::vector<double>& sorted_values, double u) {
  std::size_t n = sorted_values.size();
  if (n == 1) return sorted_values[0];
  double pos = std::clamp(u, 0.0, 1.0) * static_cast<double>(n - 1);
  std::size_t i = static_cast<std::size_t>(std::floor(pos));
  if (i + 1 >= n) return sorted_values[n - 1];
  double frac = pos - static_cast<double>(i);
  return sorted_values[i] * (1.0 - frac) + sorted_values[i + 1] * frac;
}

RepairMap fit_dirm(const Dataset& dataset, double repair_level) {
  if (repair_level < 0.0 || repair_level > 1.0) {
    throw std::invalid_argument("fit_dirm: repair level must lie in [0, 1]");
  }
  if (dataset.k != 2) {
    throw MultiGroupUnsupported("fit_dirm: the repair handles a single binary "
                                "sensitive attribute (k=2), got k=" +
                                std::to_string(dataset.k));
  }
  RepairMap map;
  map.repair_level = repair_level;
  std::vector<Index> g1 = dataset.rows_of_group(1);
  std::vector<Index> g2 = dataset.rows_of_group(2);
  for (std::size_t a = 0; a < dataset.schema.size(); ++a) {
    const AttributeSpec& spec = dataset.schema[a];
    if (spec.role == AttrRole::Decision || spec.role == AttrRole::Sensitive) continue;
    if (spec.is_categorical()) {
      map.warnings.push_back("categorical attribute '" + spec.name +
                             "' passed through unmodified");
      continue;
    }
    AttributeRepair rep;
    rep.name = spec.name;
    for (Index r : g1) rep.sorted_group1.push_back(dataset.columns[a].num[r]);
    for (Index r : g2) rep.sorted_group2.push_back(dataset.columns[a].num[r]);
    std::sort(rep.sorted_group1.begin(), rep.sorted_group1.end());
    std::sort(rep.sorted_group2.begin(), rep.sorted_group2.end());
    rep.median_quantiles.resize(static_cast<std::size_t>(map.grid_points));
    for (int i = 0; i < map.grid_points; ++i) {
      double u = static_cast<double>(i) / static_cast<double>(map.grid_points - 1);
      rep.median_quantiles[static_cast<std::size_t>(i)] =
          0.5 * (empirical_quantile(rep.sorted_group1, u) +
                 empirical_quantile(rep.sorted_group2, u));
    }
    map.attributes.push_back(std::move(rep));
  }
  if (map.attributes.empty()) {
    throw NoNumericAttributes("fit_dirm: no numeric non-decision attributes");
  }
  return map;
}

namespace {

double median_at(const AttributeRepair& rep, int grid_points, double u) {
  double pos = std::clamp(u, 0.0, 1.0) * static_cast<double>(grid_points - 1);
  std::size_t i = static_cast<std::size_t>(std::floor(pos));
  if (i + 1 >= rep.median_quantiles.size()) return rep.median_quantiles.back();
  double frac = pos - static_cast<double>(i);
  return rep.median_quantiles[i] * (1.0 - frac) + rep.median_quantiles[i + 1] * frac;
}

}  // namespace

Dataset apply_dirm(const RepairMap& map, const Dataset& dataset, bool om) {
  if (dataset.k != 2) {
    throw MultiGroupUnsupported("apply_dirm: k must be 2");
  }
  Dataset out = dataset;
  for (const AttributeRepair& rep : map.attributes) {
    Index a = dataset.attribute_index(rep.name);
    if (a < 0 || !dataset.schema[static_cast<std::size_t>(a)].is_numeric()) {
      throw SchemaMismatch("apply_dirm: dataset lacks numeric attribute '" + rep.name + "'");
    }
    for (Index r = 0; r < dataset.rows(); ++r) {
      if (om && dataset.groups[r] == Dataset::kPrivilegedIndex) continue;
      const std::vector<double>& own =
          dataset.groups[r] == 1 ? rep.sorted_group1 : rep.sorted_group2;
      double v = dataset.columns[static_cast<std::size_t>(a)].num[r];
      double u = empirical_cdf(own, v);
      double target = median_at(rep, map.grid_points, u);
      out.columns[static_cast<std::size_t>(a)].num[r] =
          (1.0 - map.repair_level) * v + map.repair_level * target;
    }
  }
  return out;
}

std::string RepairMap::to_json_string() const {
  nlohmann::json j;
  j["repair_level"] = repair_level;
  j["grid_points"] = grid_points;
  j["warnings"] = warnings;
  nlohmann::json attrs = nlohmann::json::array();
  for (const AttributeRepair& rep : attributes) {
    attrs.push_back({{"name", rep.name},
                     {"group1", rep.sorted_group1},
                     {"group2", rep.sorted_group2},
                     {"median_quantiles", rep.median_quantiles}});
  }
  j["attributes"] = attrs;
  return j.dump();
}

RepairMap RepairMap::from_json_string(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  RepairMap map;
  map.repair_level = j.at("repair_level").get<double>();
  map.grid_points = j.at("grid_points").get<int>();
  map.warnings = j.at("warnings").get<std::vector<std::string>>();
  for (const auto& aj : j.at("attributes")) {
    AttributeRepair rep;
    rep.name = aj.at("name").get<std::string>();
    rep.sorted_group1 = aj.at("group1").get<std::vector<double>>();
    rep.sorted_group2 = aj.at("group2").get<std::vector<double>>();
    rep.median_quantiles = aj.at("median_quantiles").get<std::vector<double>>();
    map.attributes.push_back(std::move(rep));
  }
  return map;
}

}  // namespace fairmap::baselines
