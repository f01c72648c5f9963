#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "fairmap/data.hpp"

namespace fairmap::baselines {

struct MultiGroupUnsupported : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NoNumericAttributes : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct SchemaMismatch : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Per-attribute quantile repair state for the two-group disparate impact
// remover: group-conditional empirical quantile functions plus the median
// distribution on a fixed grid.
struct AttributeRepair {
  std::string name;
  std::vector<double> sorted_group1;
  std::vector<double> sorted_group2;
  std::vector<double> median_quantiles;  // grid evaluation of the median distribution
};

struct RepairMap {
  double repair_level = 1.0;  // lambda in [0, 1]
  int grid_points = 1001;
  std::vector<AttributeRepair> attributes;
  std::vector<std::string> warnings;  // categorical pass-through notices

  std::string to_json_string() const;
  static RepairMap from_json_string(const std::string& text);
};

// Fits group-conditional CDFs and the median quantile function for every
// numeric non-decision attribute; k must be 2.
RepairMap fit_dirm(const Dataset& dataset, double repair_level);

// Moves numeric attributes lambda of the way toward the median distribution
// along quantiles; om restores privileged rows to their originals.
Dataset apply_dirm(const RepairMap& map, const Dataset& dataset, bool om);

// Midpoint-rank empirical CDF over a sorted sample.
double empirical_cdf(const std::vector<double>& sorted_values, double v);
// Linear-interpolation empirical quantile of a sorted sample, u in [0, 1].
double empirical_quantile(const std::vector<double>& sorted_values, double u);

}  // namespace fairmap::baselines
