#include "fairmap/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <set>

#include "fairmap/csv.hpp"
#include "fairmap/rng.hpp"

namespace fairmap {

namespace {

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

int category_of(const AttributeSpec& spec, const std::string& value) {
  for (std::size_t i = 0; i < spec.categories.size(); ++i) {
    if (spec.categories[i] == value) return static_cast<int>(i);
  }
  return -1;
}

// Acklam's rational approximation of the standard normal quantile,
// |relative error| < 1.15e-9.
double normal_quantile(double p) {
  static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                             -2.759285104469687e+02, 1.383577518672690e+02,
                             -3.066479806614716e+01, 2.506628277459239e+00};
  static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                             -1.556989798598866e+02, 6.680131188771972e+01,
                             -1.328068155288572e+01};
  static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                             -2.400758277161838e+00, -2.549732539343734e+00,
                             4.374664141464968e+00,  2.938163982698783e+00};
  static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                             2.445134137142996e+00, 3.754408661907416e+00};
  const double p_low = 0.02425;
  if (p < p_low) {
    double q = std::sqrt(-2.0 * std::log(p));
    return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
           ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  if (p > 1.0 - p_low) {
    double q = std::sqrt(-2.0 * std::log(1.0 - p));
    return -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
           ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  double q = p - 0.5;
  double r = q * q;
  return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
         (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
}

// Stratified standard-normal sample of size m: one uniform draw per
// equal-probability stratum. Row order is shuffled by the caller, so each
// row's marginal is exactly N(0,1) while empirical quantiles track the
// distribution within one stratum.
Vector stratified_normal(Index m, Rng& rng) {
  Vector z(m);
  for (Index i = 0; i < m; ++i) {
    double u = (static_cast<double>(i) + rng.uniform()) / static_cast<double>(m);
    z[i] = normal_quantile(std::clamp(u, 1e-15, 1.0 - 1e-15));
  }
  return z;
}

}  // namespace

Index Dataset::rows() const {
  if (columns.empty()) return 0;
  const Column& c = columns.front();
  return schema.front().is_numeric() ? c.num.size()
                                     : static_cast<Index>(c.cat.size());
}

Index Dataset::attribute_index(const std::string& name) const {
  for (std::size_t i = 0; i < schema.size(); ++i) {
    if (schema[i].name == name) return static_cast<Index>(i);
  }
  return -1;
}

Index Dataset::sensitive_index() const {
  for (std::size_t i = 0; i < schema.size(); ++i) {
    if (schema[i].role == AttrRole::Sensitive) return static_cast<Index>(i);
  }
  return -1;
}

Index Dataset::decision_index() const {
  for (std::size_t i = 0; i < schema.size(); ++i) {
    if (schema[i].role == AttrRole::Decision) return static_cast<Index>(i);
  }
  return -1;
}

IntVector Dataset::decisions() const {
  Index d = decision_index();
  if (d < 0) throw MissingColumn("dataset has no decision attribute");
  const AttributeSpec& spec = schema[d];
  const Column& col = columns[d];
  IntVector y(rows());
  if (spec.is_categorical()) {
    for (Index i = 0; i < y.size(); ++i) y[i] = col.cat[i] == 1 ? 1 : 0;
  } else {
    for (Index i = 0; i < y.size(); ++i) y[i] = col.num[i] != 0.0 ? 1 : 0;
  }
  return y;
}

std::vector<Index> Dataset::group_sizes() const {
  std::vector<Index> sizes(k, 0);
  for (Index i = 0; i < groups.size(); ++i) ++sizes[groups[i] - 1];
  return sizes;
}

Vector Dataset::group_proportions() const {
  std::vector<Index> sizes = group_sizes();
  Vector p(k);
  for (int g = 0; g < k; ++g) p[g] = static_cast<double>(sizes[g]) / rows();
  return p;
}

std::vector<Index> Dataset::rows_of_group(int group) const {
  std::vector<Index> out;
  for (Index i = 0; i < groups.size(); ++i) {
    if (groups[i] == group) out.push_back(i);
  }
  return out;
}

Dataset Dataset::subset(const std::vector<Index>& row_ids) const {
  Dataset out;
  out.schema = schema;
  out.columns.resize(columns.size());
  for (std::size_t c = 0; c < columns.size(); ++c) {
    if (schema[c].is_numeric()) {
      out.columns[c].num.resize(row_ids.size());
      for (std::size_t i = 0; i < row_ids.size(); ++i) {
        out.columns[c].num[static_cast<Index>(i)] = columns[c].num[row_ids[i]];
      }
    } else {
      out.columns[c].cat.reserve(row_ids.size());
      for (Index r : row_ids) out.columns[c].cat.push_back(columns[c].cat[r]);
    }
  }
  out.rebuild_groups();
  return out;
}

void Dataset::rebuild_groups() {
  Index s = sensitive_index();
  if (s < 0) throw MissingColumn("dataset has no sensitive attribute");
  const AttributeSpec& spec = schema[s];
  k = static_cast<int>(spec.categories.size());
  const std::vector<int>& cat = columns[s].cat;
  groups.resize(static_cast<Index>(cat.size()));
  for (std::size_t i = 0; i < cat.size(); ++i) groups[static_cast<Index>(i)] = cat[i] + 1;
  std::vector<Index> sizes = group_sizes();
  for (int g = 0; g < k; ++g) {
    if (sizes[g] == 0) {
      warnings.push_back("EmptyGroup: group '" + spec.categories[g] +
                         "' has no rows");
    }
  }
}

void Dataset::validate() const {
  if (rows() == 0) throw MissingColumn("dataset has no rows");
  int sensitive_count = 0;
  int decision_count = 0;
  for (const AttributeSpec& a : schema) {
    if (a.role == AttrRole::Sensitive) ++sensitive_count;
    if (a.role == AttrRole::Decision) ++decision_count;
    if (a.is_categorical()) {
      std::set<std::string> unique(a.categories.begin(), a.categories.end());
      if (unique.size() != a.categories.size() || a.categories.empty()) {
        throw UnknownCategory("attribute '" + a.name +
                              "' has duplicate or empty categories");
      }
    }
  }
  if (sensitive_count != 1 || decision_count != 1) {
    throw MissingColumn("dataset needs exactly one sensitive and one decision attribute");
  }
  for (Index i = 0; i < groups.size(); ++i) {
    if (groups[i] < 1 || groups[i] > k) {
      throw UnknownCategory("row " + std::to_string(i) + ": group index out of range");
    }
  }
}

std::vector<Index> FoldPlan::fold_rows(int fold) const {
  std::vector<Index> out;
  for (Index i = 0; i < assignments.size(); ++i) {
    if (assignments[i] == fold) out.push_back(i);
  }
  return out;
}

std::vector<Index> FoldPlan::complement_rows(int fold) const {
  std::vector<Index> out;
  for (Index i = 0; i < assignments.size(); ++i) {
    if (assignments[i] != fold) out.push_back(i);
  }
  return out;
}

const Block& EncodedMatrix::block(const std::string& attribute) const {
  for (const Block& b : blocks) {
    if (b.attribute == attribute) return b;
  }
  throw BlockShapeMismatch("no block for attribute '" + attribute + "'");
}

Index EncodedMatrix::decision_column() const {
  return blocks.empty() ? -1 : blocks.back().offset;
}

Matrix EncodedMatrix::without_decision() const {
  Index y = decision_column();
  if (y < 0) return values;
  Matrix out(values.rows(), values.cols() - 1);
  Index c = 0;
  for (Index j = 0; j < values.cols(); ++j) {
    if (j == y) continue;
    out.col(c++) = values.col(j);
  }
  return out;
}

EncodedMatrix EncodedMatrix::take_rows(const std::vector<Index>& row_ids) const {
  EncodedMatrix out;
  out.blocks = blocks;
  out.values.resize(static_cast<Index>(row_ids.size()), values.cols());
  out.groups.resize(static_cast<Index>(row_ids.size()));
  for (std::size_t i = 0; i < row_ids.size(); ++i) {
    out.values.row(static_cast<Index>(i)) = values.row(row_ids[i]);
    out.groups[static_cast<Index>(i)] = groups[row_ids[i]];
  }
  return out;
}

Encoder Encoder::restore(std::vector<AttributeSpec> schema, std::vector<Block> blocks,
                         Index width) {
  Encoder e;
  e.schema_ = std::move(schema);
  e.blocks_ = std::move(blocks);
  e.width_ = width;
  e.fitted_ = true;
  return e;
}

void Encoder::fit(const Dataset& dataset) {
  std::vector<Index> all(dataset.rows());
  std::iota(all.begin(), all.end(), Index{0});
  fit(dataset, all);
}

void Encoder::fit(const Dataset& dataset, const std::vector<Index>& train_rows) {
  dataset.validate();
  schema_ = dataset.schema;
  blocks_.clear();
  width_ = 0;
  Index decision = dataset.decision_index();
  for (std::size_t a = 0; a < schema_.size(); ++a) {
    AttributeSpec& spec = schema_[a];
    if (spec.role == AttrRole::Sensitive) continue;  // models never see S
    if (static_cast<Index>(a) == decision) continue;  // appended last
    Block b{spec.name, width_, 0, spec.is_categorical()};
    if (spec.is_numeric()) {
      double lo = std::numeric_limits<double>::infinity();
      double hi = -lo;
      for (Index r : train_rows) {
        lo = std::min(lo, dataset.columns[a].num[r]);
        hi = std::max(hi, dataset.columns[a].num[r]);
      }
      spec.numeric_range = {lo, hi};
      b.width = 1;
    } else {
      b.width = static_cast<Index>(spec.categories.size());
    }
    width_ += b.width;
    blocks_.push_back(b);
  }
  // Decision attribute is always the final single column.
  blocks_.push_back({schema_[decision].name, width_, 1, false});
  width_ += 1;
  fitted_ = true;
}

EncodedMatrix Encoder::encode(const Dataset& dataset) const {
  if (!fitted_) throw UnfittedEncoder("encoder has not been fitted");
  EncodedMatrix out;
  out.blocks = blocks_;
  out.groups = dataset.groups;
  out.values = Matrix::Zero(dataset.rows(), width_);
  Index clamped = 0;
  for (const Block& b : blocks_) {
    Index a = dataset.attribute_index(b.attribute);
    if (a < 0) throw MissingColumn("dataset lacks attribute '" + b.attribute + "'");
    const AttributeSpec& spec = schema_[static_cast<std::size_t>(a)];
    const Column& col = dataset.columns[static_cast<std::size_t>(a)];
    if (spec.role == AttrRole::Decision) {
      IntVector y = dataset.decisions();
      for (Index r = 0; r < y.size(); ++r) out.values(r, b.offset) = y[r];
    } else if (spec.is_numeric()) {
      auto [lo, hi] = *spec.numeric_range;
      double span = hi - lo;
      for (Index r = 0; r < col.num.size(); ++r) {
        double v = span > 0 ? (col.num[r] - lo) / span : 0.0;
        if (v < 0.0 || v > 1.0) {
          v = std::clamp(v, 0.0, 1.0);
          ++clamped;
        }
        out.values(r, b.offset) = v;
      }
    } else {
      for (std::size_t r = 0; r < col.cat.size(); ++r) {
        out.values(static_cast<Index>(r), b.offset + col.cat[r]) = 1.0;
      }
    }
  }
  if (clamped > 0) {
    out.warnings.push_back("clamped " + std::to_string(clamped) +
                           " out-of-range numeric values to [0,1]");
  }
  return out;
}

Dataset Encoder::decode(const EncodedMatrix& matrix) const {
  if (!fitted_) throw UnfittedEncoder("encoder has not been fitted");
  if (matrix.values.cols() != width_) {
    throw BlockShapeMismatch("matrix has " + std::to_string(matrix.values.cols()) +
                             " columns, encoder expects " + std::to_string(width_));
  }
  Dataset out;
  out.schema = schema_;
  out.columns.resize(schema_.size());
  Index n = matrix.values.rows();
  for (std::size_t a = 0; a < schema_.size(); ++a) {
    const AttributeSpec& spec = schema_[a];
    if (spec.role == AttrRole::Sensitive) {
      if (matrix.groups.size() != n) {
        throw BlockShapeMismatch("matrix carries no group labels to decode S");
      }
      out.columns[a].cat.resize(static_cast<std::size_t>(n));
      for (Index r = 0; r < n; ++r) out.columns[a].cat[static_cast<std::size_t>(r)] = matrix.groups[r] - 1;
      continue;
    }
    const Block* b = nullptr;
    for (const Block& blk : blocks_) {
      if (blk.attribute == spec.name) b = &blk;
    }
    if (b == nullptr) throw BlockShapeMismatch("no block for '" + spec.name + "'");
    if (spec.role == AttrRole::Decision) {
      if (spec.is_categorical()) {
        out.columns[a].cat.resize(static_cast<std::size_t>(n));
        for (Index r = 0; r < n; ++r) {
          out.columns[a].cat[static_cast<std::size_t>(r)] =
              matrix.values(r, b->offset) >= 0.5 ? 1 : 0;
        }
      } else {
        out.columns[a].num.resize(n);
        for (Index r = 0; r < n; ++r) {
          out.columns[a].num[r] = matrix.values(r, b->offset) >= 0.5 ? 1.0 : 0.0;
        }
      }
    } else if (spec.is_numeric()) {
      auto [lo, hi] = *spec.numeric_range;
      out.columns[a].num.resize(n);
      for (Index r = 0; r < n; ++r) {
        out.columns[a].num[r] = matrix.values(r, b->offset) * (hi - lo) + lo;
      }
    } else {
      out.columns[a].cat.resize(static_cast<std::size_t>(n));
      for (Index r = 0; r < n; ++r) {
        Index best = 0;
        double best_v = matrix.values(r, b->offset);
        for (Index j = 1; j < b->width; ++j) {
          double v = matrix.values(r, b->offset + j);
          if (v > best_v) {  // ties keep the lowest category index
            best_v = v;
            best = j;
          }
        }
        out.columns[a].cat[static_cast<std::size_t>(r)] = static_cast<int>(best);
      }
    }
  }
  out.rebuild_groups();
  return out;
}

Dataset load_csv(const std::string& path, const std::vector<AttributeSpec>& schema) {
  std::vector<csv::Row> rows = csv::read_file(path);
  if (rows.empty()) throw MissingColumn(path + ": empty file, header row missing");
  const csv::Row& header = rows.front();
  if (header.size() != schema.size()) {
    throw MissingColumn(path + ": header has " + std::to_string(header.size()) +
                        " columns, schema declares " + std::to_string(schema.size()));
  }
  for (std::size_t i = 0; i < schema.size(); ++i) {
    if (header[i] != schema[i].name) {
      throw MissingColumn(path + ": header column " + std::to_string(i + 1) +
                          " is '" + header[i] + "', expected '" + schema[i].name + "'");
    }
  }
  Dataset out;
  out.schema = schema;
  out.columns.resize(schema.size());
  Index n = static_cast<Index>(rows.size()) - 1;
  if (n == 0) throw MissingColumn(path + ": no data rows");
  for (std::size_t a = 0; a < schema.size(); ++a) {
    if (schema[a].is_numeric()) out.columns[a].num.resize(n);
    else out.columns[a].cat.resize(static_cast<std::size_t>(n));
  }
  for (Index r = 0; r < n; ++r) {
    const csv::Row& row = rows[static_cast<std::size_t>(r) + 1];
    if (row.size() != schema.size()) {
      throw MissingColumn(path + ": row " + std::to_string(r + 2) + " has " +
                          std::to_string(row.size()) + " fields");
    }
    for (std::size_t a = 0; a < schema.size(); ++a) {
      const std::string& cell = row[a];
      if (schema[a].is_numeric()) {
        char* end = nullptr;
        double v = std::strtod(cell.c_str(), &end);
        if (cell.empty() || end != cell.c_str() + cell.size()) {
          throw NonNumericValue(path + ": row " + std::to_string(r + 2) +
                                ", column '" + schema[a].name + "': '" + cell + "'");
        }
        out.columns[a].num[r] = v;
      } else {
        int c = category_of(schema[a], cell);
        if (c < 0) {
          throw UnknownCategory(path + ": row " + std::to_string(r + 2) +
                                ", column '" + schema[a].name + "': '" + cell + "'");
        }
        out.columns[a].cat[static_cast<std::size_t>(r)] = c;
      }
    }
  }
  out.rebuild_groups();
  out.validate();
  return out;
}

void write_csv(const Dataset& dataset, const std::string& path) {
  std::vector<csv::Row> rows;
  csv::Row header;
  for (const AttributeSpec& a : dataset.schema) header.push_back(a.name);
  rows.push_back(header);
  Index n = dataset.rows();
  for (Index r = 0; r < n; ++r) {
    csv::Row row;
    for (std::size_t a = 0; a < dataset.schema.size(); ++a) {
      if (dataset.schema[a].is_numeric()) {
        row.push_back(format_double(dataset.columns[a].num[r]));
      } else {
        row.push_back(dataset.schema[a].categories[static_cast<std::size_t>(
            dataset.columns[a].cat[static_cast<std::size_t>(r)])]);
      }
    }
    rows.push_back(row);
  }
  csv::write_file(path, rows);
}

Dataset combine_sensitive(const Dataset& dataset,
                          const std::vector<std::string>& sensitive_names) {
  if (sensitive_names.empty()) {
    throw MissingColumn("combine_sensitive: no attributes named");
  }
  std::vector<Index> attrs;
  for (const std::string& name : sensitive_names) {
    Index a = dataset.attribute_index(name);
    if (a < 0) throw MissingColumn("combine_sensitive: no attribute '" + name + "'");
    const AttributeSpec& spec = dataset.schema[static_cast<std::size_t>(a)];
    if (spec.is_numeric()) {
      for (Index r = 0; r < dataset.columns[static_cast<std::size_t>(a)].num.size(); ++r) {
        double v = dataset.columns[static_cast<std::size_t>(a)].num[r];
        if (v != 0.0 && v != 1.0) {
          throw UnknownCategory("combine_sensitive: numeric attribute '" + name +
                                "' is not binary");
        }
      }
    }
    attrs.push_back(a);
  }

  Index n = dataset.rows();
  auto label_of = [&](Index a, Index r) -> std::string {
    const AttributeSpec& spec = dataset.schema[static_cast<std::size_t>(a)];
    const Column& col = dataset.columns[static_cast<std::size_t>(a)];
    if (spec.is_categorical()) {
      return spec.categories[static_cast<std::size_t>(col.cat[static_cast<std::size_t>(r)])];
    }
    return col.num[r] != 0.0 ? "1" : "0";
  };

  std::vector<std::string> combo(static_cast<std::size_t>(n));
  for (Index r = 0; r < n; ++r) {
    std::string label;
    for (Index a : attrs) {
      if (!label.empty()) label += "-";
      label += label_of(a, r);
    }
    combo[static_cast<std::size_t>(r)] = label;
  }

  // Absent Cartesian combinations are reported, not silently dropped.
  std::vector<std::vector<std::string>> values_per_attr;
  for (Index a : attrs) {
    const AttributeSpec& spec = dataset.schema[static_cast<std::size_t>(a)];
    if (spec.is_categorical()) values_per_attr.push_back(spec.categories);
    else values_per_attr.push_back({"0", "1"});
  }
  std::vector<std::string> cartesian{""};
  for (const std::vector<std::string>& vals : values_per_attr) {
    std::vector<std::string> next;
    for (const std::string& prefix : cartesian) {
      for (const std::string& v : vals) {
        next.push_back(prefix.empty() ? v : prefix + "-" + v);
      }
    }
    cartesian = next;
  }

  IntVector y = dataset.decisions();
  std::map<std::string, std::pair<Index, Index>> stats;  // label -> (count, positives)
  for (Index r = 0; r < n; ++r) {
    auto& s = stats[combo[static_cast<std::size_t>(r)]];
    ++s.first;
    s.second += y[r];
  }

  std::vector<std::string> empty_combos;
  for (const std::string& c : cartesian) {
    if (!stats.count(c)) empty_combos.push_back(c);
  }

  // Privileged group = highest positive-decision rate; remaining groups follow
  // by descending rate, ties by label.
  std::vector<std::string> order;
  for (const auto& [label, s] : stats) order.push_back(label);
  auto rate = [&](const std::string& label) {
    const auto& s = stats.at(label);
    return static_cast<double>(s.second) / static_cast<double>(s.first);
  };
  std::sort(order.begin(), order.end(), [&](const std::string& a, const std::string& b) {
    double ra = rate(a), rb = rate(b);
    if (ra != rb) return ra > rb;
    return a < b;
  });

  std::map<std::string, int> index_of;
  for (std::size_t i = 0; i < order.size(); ++i) index_of[order[i]] = static_cast<int>(i);

  std::string new_name;
  for (const std::string& nm : sensitive_names) {
    if (!new_name.empty()) new_name += "_";
    new_name += nm;
  }

  Dataset out;
  std::set<Index> removed(attrs.begin(), attrs.end());
  bool inserted = false;
  for (std::size_t a = 0; a < dataset.schema.size(); ++a) {
    if (removed.count(static_cast<Index>(a))) {
      if (!inserted) {
        AttributeSpec combined;
        combined.name = new_name;
        combined.kind = AttrKind::Categorical;
        combined.role = AttrRole::Sensitive;
        combined.categories = order;
        out.schema.push_back(combined);
        Column col;
        col.cat.resize(static_cast<std::size_t>(n));
        for (Index r = 0; r < n; ++r) {
          col.cat[static_cast<std::size_t>(r)] = index_of.at(combo[static_cast<std::size_t>(r)]);
        }
        out.columns.push_back(col);
        inserted = true;
      }
      continue;
    }
    AttributeSpec spec = dataset.schema[a];
    if (spec.role == AttrRole::Sensitive) spec.role = AttrRole::Other;
    out.schema.push_back(spec);
    out.columns.push_back(dataset.columns[a]);
  }
  for (const std::string& c : empty_combos) {
    out.warnings.push_back("EmptyGroup: combination '" + c + "' has no rows");
  }
  out.rebuild_groups();
  out.validate();
  return out;
}

EncodedMatrix encode(const Dataset& dataset) {
  Encoder enc;
  enc.fit(dataset);
  return enc.encode(dataset);
}

Dataset decode(const EncodedMatrix& matrix, const Encoder& encoder) {
  return encoder.decode(matrix);
}

Dataset generate_lipton(Index n, std::uint64_t seed) {
  if (n < 2 || n % 2 != 0) {
    throw std::invalid_argument("generate_lipton: n must be even and >= 2");
  }
  Rng root(seed);
  Rng hair_rng = root.substream("lipton.hair");
  Rng work_rng = root.substream("lipton.work");
  Rng order = root.substream("lipton.order");

  Index half = n / 2;
  std::vector<int> gender(static_cast<std::size_t>(n));
  Vector hair(n), work(n);
  // Work experience is a stratified Gaussian sample per group, so the
  // empirical positive rates track the calibrated targets within one
  // stratum at any size; the row shuffle below keeps per-row marginals
  // exactly Gaussian.
  auto fill_group = [&](Index begin, Index end, double hair_mean, double hair_std,
                        double work_mean) {
    Vector z = stratified_normal(end - begin, work_rng);
    for (Index i = begin; i < end; ++i) {
      hair[i] = hair_rng.normal(hair_mean, hair_std);
      work[i] = work_mean + lipton::kWorkStd * z[i - begin];
    }
  };
  for (Index i = 0; i < n; ++i) gender[static_cast<std::size_t>(i)] = i < half ? 0 : 1;
  fill_group(0, half, lipton::kPrivHairMean, lipton::kPrivHairStd, lipton::kPrivWorkMean);
  fill_group(half, n, lipton::kProtHairMean, lipton::kProtHairStd, lipton::kProtWorkMean);
  std::vector<Index> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), Index{0});
  order.shuffle(perm);

  Dataset out;
  out.schema = {
      {"gender", AttrKind::Categorical, AttrRole::Sensitive, {"male", "female"}, {}},
      {"hair_length", AttrKind::Numeric, AttrRole::Other, {}, {}},
      {"work_experience", AttrKind::Numeric, AttrRole::Other, {}, {}},
      {"hired", AttrKind::Categorical, AttrRole::Decision, {"no", "yes"}, {}},
  };
  out.columns.resize(4);
  out.columns[0].cat.resize(static_cast<std::size_t>(n));
  out.columns[1].num.resize(n);
  out.columns[2].num.resize(n);
  out.columns[3].cat.resize(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) {
    Index src = perm[static_cast<std::size_t>(i)];
    out.columns[0].cat[static_cast<std::size_t>(i)] = gender[static_cast<std::size_t>(src)];
    out.columns[1].num[i] = hair[src];
    out.columns[2].num[i] = work[src];
    out.columns[3].cat[static_cast<std::size_t>(i)] =
        work[src] >= lipton::kHireThreshold ? 1 : 0;
  }
  out.rebuild_groups();
  out.validate();
  return out;
}

FoldPlan split_kfold(const Dataset& dataset, int n_folds, std::uint64_t seed) {
  if (n_folds < 2) throw std::invalid_argument("split_kfold: n_folds must be >= 2");
  std::vector<Index> sizes = dataset.group_sizes();
  for (int g = 0; g < dataset.k; ++g) {
    if (sizes[g] < n_folds) {
      throw GroupTooSmall("group " + std::to_string(g + 1) + " has " +
                          std::to_string(sizes[g]) + " rows, need >= " +
                          std::to_string(n_folds));
    }
  }
  FoldPlan plan;
  plan.n_folds = n_folds;
  plan.seed = seed;
  plan.assignments.resize(dataset.rows());
  Rng root(seed);
  for (int g = 1; g <= dataset.k; ++g) {
    std::vector<Index> rows = dataset.rows_of_group(g);
    Rng r = root.substream("fold.group", static_cast<std::uint64_t>(g));
    r.shuffle(rows);
    // Rotating the deal start per group keeps total fold sizes balanced.
    int start = (g - 1) % n_folds;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      plan.assignments[rows[i]] = (start + static_cast<int>(i)) % n_folds;
    }
  }
  return plan;
}

}  // namespace fairmap
