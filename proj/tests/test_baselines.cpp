#include <algorithm>

#include "doctest.h"
#include "fairmap/baselines.hpp"
#include "fairmap/rng.hpp"

using namespace fairmap;
using namespace fairmap::baselines;

namespace {

// Two groups occupying the shifted ranges {0..9} and {10..19}.
Dataset shifted_groups(Index per_group) {
  Dataset d;
  d.schema = {
      {"s", AttrKind::Categorical, AttrRole::Sensitive, {"p", "q"}, {}},
      {"v", AttrKind::Numeric, AttrRole::Other, {}, {}},
      {"y", AttrKind::Categorical, AttrRole::Decision, {"no", "yes"}, {}},
  };
  d.columns.resize(3);
  Index n = 2 * per_group;
  d.columns[0].cat.resize(static_cast<std::size_t>(n));
  d.columns[1].num.resize(n);
  d.columns[2].cat.resize(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) {
    bool first = i < per_group;
    d.columns[0].cat[static_cast<std::size_t>(i)] = first ? 0 : 1;
    double step = 10.0 * static_cast<double>(i % per_group) /
                  static_cast<double>(per_group - 1);
    d.columns[1].num[i] = first ? step : 10.0 + step;
    d.columns[2].cat[static_cast<std::size_t>(i)] = i % 2;
  }
  d.rebuild_groups();
  return d;
}

std::vector<double> group_values(const Dataset& d, int group) {
  std::vector<double> out;
  for (Index r : d.rows_of_group(group)) out.push_back(d.columns[1].num[r]);
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

TEST_CASE("fit_dirm rejects multivalued sensitive attributes and all-categorical data") {
  Dataset d = shifted_groups(10);
  Dataset multi = d;
  multi.schema[0].categories = {"p", "q", "r"};
  multi.columns[0].cat[0] = 2;
  multi.rebuild_groups();
  CHECK_THROWS_AS(fit_dirm(multi, 1.0), MultiGroupUnsupported);

  Dataset no_numeric = d;
  no_numeric.schema[1] = {"v", AttrKind::Categorical, AttrRole::Other, {"l", "h"}, {}};
  no_numeric.columns[1].num.resize(0);
  no_numeric.columns[1].cat.assign(static_cast<std::size_t>(d.rows()), 0);
  CHECK_THROWS_AS(fit_dirm(no_numeric, 1.0), NoNumericAttributes);
}

TEST_CASE("dirm: lambda=0 is the identity") {
  Dataset d = shifted_groups(10);
  RepairMap map = fit_dirm(d, 0.0);
  Dataset repaired = apply_dirm(map, d, false);
  CHECK(repaired.columns[1].num == d.columns[1].num);
}

TEST_CASE("dirm: lambda=1 equalises per-group deciles on the toy construction") {
  Dataset d = shifted_groups(50);
  RepairMap map = fit_dirm(d, 1.0);
  Dataset repaired = apply_dirm(map, d, false);
  std::vector<double> g1 = group_values(repaired, 1);
  std::vector<double> g2 = group_values(repaired, 2);
  for (int dec = 0; dec <= 10; ++dec) {
    double u = dec / 10.0;
    double q1 = empirical_quantile(g1, u);
    double q2 = empirical_quantile(g2, u);
    CHECK(std::abs(q1 - q2) <= 1.0);
  }
  // Both land on the median distribution: decile d sits near 5 + d.
  CHECK(std::abs(empirical_quantile(g1, 0.5) - 10.0) <= 1.0);
}

TEST_CASE("dirm: om restores privileged rows bit-identically") {
  Dataset d = shifted_groups(20);
  RepairMap map = fit_dirm(d, 1.0);
  Dataset repaired = apply_dirm(map, d, true);
  for (Index r : d.rows_of_group(1)) {
    CHECK(repaired.columns[1].num[r] == d.columns[1].num[r]);
  }
  bool any_changed = false;
  for (Index r : d.rows_of_group(2)) {
    any_changed = any_changed || repaired.columns[1].num[r] != d.columns[1].num[r];
  }
  CHECK(any_changed);
}

TEST_CASE("dirm: lambda=0.5 lies pointwise between the extremes") {
  Dataset d = shifted_groups(20);
  Dataset r0 = apply_dirm(fit_dirm(d, 0.0), d, false);
  Dataset r5 = apply_dirm(fit_dirm(d, 0.5), d, false);
  Dataset r1 = apply_dirm(fit_dirm(d, 1.0), d, false);
  for (Index r = 0; r < d.rows(); ++r) {
    double lo = std::min(r0.columns[1].num[r], r1.columns[1].num[r]);
    double hi = std::max(r0.columns[1].num[r], r1.columns[1].num[r]);
    CHECK(r5.columns[1].num[r] >= lo - 1e-12);
    CHECK(r5.columns[1].num[r] <= hi + 1e-12);
    CHECK(r5.columns[1].num[r] ==
          doctest::Approx(0.5 * (r0.columns[1].num[r] + r1.columns[1].num[r])));
  }
}

TEST_CASE("dirm preserves within-group rank order") {
  Rng rng(21);
  Dataset d = shifted_groups(40);
  // Perturb to make values non-uniformly spaced.
  for (Index r = 0; r < d.rows(); ++r) d.columns[1].num[r] += 0.3 * rng.uniform();
  Dataset repaired = apply_dirm(fit_dirm(d, 0.7), d, false);
  for (int g = 1; g <= 2; ++g) {
    std::vector<Index> rows = d.rows_of_group(g);
    std::sort(rows.begin(), rows.end(), [&](Index a, Index b) {
      return d.columns[1].num[a] < d.columns[1].num[b];
    });
    for (std::size_t i = 0; i + 1 < rows.size(); ++i) {
      CHECK(repaired.columns[1].num[rows[i]] <=
            repaired.columns[1].num[rows[i + 1]] + 1e-12);
    }
  }
}

TEST_CASE("dirm passes categoricals through with a warning") {
  Dataset d = shifted_groups(10);
  d.schema.insert(d.schema.begin() + 2,
                  {"c", AttrKind::Categorical, AttrRole::Other, {"u", "w"}, {}});
  Column c;
  c.cat.assign(static_cast<std::size_t>(d.rows()), 0);
  d.columns.insert(d.columns.begin() + 2, c);
  RepairMap map = fit_dirm(d, 1.0);
  REQUIRE(!map.warnings.empty());
  CHECK(map.warnings[0].find("'c'") != std::string::npos);
  Dataset repaired = apply_dirm(map, d, false);
  CHECK(repaired.columns[2].cat == d.columns[2].cat);
}

TEST_CASE("RepairMap serialises to JSON and back") {
  Dataset d = shifted_groups(15);
  RepairMap map = fit_dirm(d, 0.8);
  RepairMap back = RepairMap::from_json_string(map.to_json_string());
  CHECK(back.repair_level == map.repair_level);
  CHECK(back.attributes.size() == map.attributes.size());
  CHECK(back.attributes[0].median_quantiles == map.attributes[0].median_quantiles);
  Dataset a = apply_dirm(map, d, false);
  Dataset b = apply_dirm(back, d, false);
  CHECK(a.columns[1].num == b.columns[1].num);
}

TEST_CASE("apply_dirm rejects schema mismatches") {
  Dataset d = shifted_groups(10);
  RepairMap map = fit_dirm(d, 1.0);
  Dataset renamed = d;
  renamed.schema[1].name = "other";
  CHECK_THROWS_AS(apply_dirm(map, renamed, false), SchemaMismatch);
}
