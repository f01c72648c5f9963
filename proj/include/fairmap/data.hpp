#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace fairmap {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using IntVector = Eigen::VectorXi;
using Eigen::Index;

struct MissingColumn : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct UnknownCategory : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NonNumericValue : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct UnfittedEncoder : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct BlockShapeMismatch : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct GroupTooSmall : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class AttrKind { Numeric, Categorical };
enum class AttrRole { Sensitive, Decision, Other };

struct AttributeSpec {
  std::string name;
  AttrKind kind = AttrKind::Numeric;
  AttrRole role = AttrRole::Other;
  std::vector<std::string> categories;  // categorical only, unique and non-empty
  // Fitted on the training split; carried by the encoder once fitted.
  std::optional<std::pair<double, double>> numeric_range;

  bool is_numeric() const { return kind == AttrKind::Numeric; }
  bool is_categorical() const { return kind == AttrKind::Categorical; }
};

// One column of data, schema-tagged: numeric values or category indices.
struct Column {
  Vector num;             // numeric attributes
  std::vector<int> cat;   // categorical attributes, 0-based category index
};

// Schema-tagged table. Group indices live in [1, k]; group 1 is privileged.
struct Dataset {
  std::vector<AttributeSpec> schema;
  std::vector<Column> columns;  // parallel to schema
  IntVector groups;             // per-row group index, derived from the sensitive attribute
  int k = 0;
  std::vector<std::string> warnings;

  static constexpr int kPrivilegedIndex = 1;

  Index rows() const;
  Index attribute_index(const std::string& name) const;  // -1 when absent
  Index sensitive_index() const;
  Index decision_index() const;

  // Per-row binary decision (0/1).
  IntVector decisions() const;
  std::vector<Index> group_sizes() const;  // size k, 1-based groups at [g-1]
  Vector group_proportions() const;
  std::vector<Index> rows_of_group(int group) const;
  Dataset subset(const std::vector<Index>& row_ids) const;

  // Rederives `groups` and `k` from the sensitive categorical column.
  void rebuild_groups();
  void validate() const;
};

struct FoldPlan {
  int n_folds = 0;
  std::uint64_t seed = 0;
  IntVector assignments;  // per-row fold index in [0, n_folds)

  std::vector<Index> fold_rows(int fold) const;
  std::vector<Index> complement_rows(int fold) const;
};

// Column span of one attribute inside the encoded matrix.
struct Block {
  std::string attribute;
  Index offset = 0;
  Index width = 0;
  bool categorical = false;
};

class Encoder;

// Real-valued [0,1] matrix with the block map linking columns back to
// attributes. Group labels ride along for supervision and metrics; they are
// never part of the feature columns.
struct EncodedMatrix {
  Matrix values;
  IntVector groups;
  std::vector<Block> blocks;
  std::vector<std::string> warnings;

  Index rows() const { return values.rows(); }
  Index cols() const { return values.cols(); }

  const Block& block(const std::string& attribute) const;
  Index decision_column() const;  // column index of Y, -1 when absent
  // Feature view for decision-task classifiers: every column except Y.
  Matrix without_decision() const;
  EncodedMatrix take_rows(const std::vector<Index>& row_ids) const;
};

// Min-max / one-hot encoder fitted on a training split. The sensitive
// attribute never enters the feature matrix; the decision is one column.
class Encoder {
 public:
  Encoder() = default;

  void fit(const Dataset& dataset);
  void fit(const Dataset& dataset, const std::vector<Index>& train_rows);
  bool fitted() const { return fitted_; }

  EncodedMatrix encode(const Dataset& dataset) const;
  Dataset decode(const EncodedMatrix& matrix) const;

  const std::vector<Block>& blocks() const { return blocks_; }
  const std::vector<AttributeSpec>& fitted_schema() const { return schema_; }
  Index width() const { return width_; }

  // Rebuilds a fitted encoder from persisted state.
  static Encoder restore(std::vector<AttributeSpec> schema, std::vector<Block> blocks,
                         Index width);

 private:
  bool fitted_ = false;
  std::vector<AttributeSpec> schema_;  // full schema with fitted numeric ranges
  std::vector<Block> blocks_;          // sensitive attribute excluded
  Index width_ = 0;
};

Dataset load_csv(const std::string& path, const std::vector<AttributeSpec>& schema);
void write_csv(const Dataset& dataset, const std::string& path);

// Collapses the named sensitive attributes into a single one whose values are
// the combinations present in the data; the group with the highest positive
// decision rate becomes group 1. Absent combinations are reported in
// `warnings` as EmptyGroup records.
Dataset combine_sensitive(const Dataset& dataset,
                          const std::vector<std::string>& sensitive_names);

EncodedMatrix encode(const Dataset& dataset);  // fits on the dataset itself
Dataset decode(const EncodedMatrix& matrix, const Encoder& encoder);

// Synthetic hiring data: hair length and work experience are drawn from
// gender-conditional Gaussians and the decision thresholds work experience.
// Constants are frozen from tools/lipton_calibrate.
Dataset generate_lipton(Index n, std::uint64_t seed);

// Calibrated generator constants (see tools/lipton_calibrate.cpp).
namespace lipton {
inline constexpr double kPrivWorkMean = 10.0;
inline constexpr double kProtWorkMean = 12.0;
inline constexpr double kWorkStd = 5.0;
inline constexpr double kPrivHairMean = 4.0;
inline constexpr double kPrivHairStd = 1.5;
inline constexpr double kProtHairMean = 24.0;
inline constexpr double kProtHairStd = 6.0;
// P(work >= threshold | priv) = 0.27, giving P(Y=1) ~= 0.3429 overall.
inline constexpr double kHireThreshold = 13.064065;
}  // namespace lipton

FoldPlan split_kfold(const Dataset& dataset, int n_folds, std::uint64_t seed);

}  // namespace fairmap
