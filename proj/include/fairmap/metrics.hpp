#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "fairmap/classifiers.hpp"
#include "fairmap/data.hpp"

namespace fairmap::metrics {

struct MissingGroup : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class Scope { All, Priv, Prot };
const char* scope_name(Scope s);

// Balanced error rate of a sensitive-attribute predictor: one minus the mean
// per-group correct-class probability. Hard predictions count as one-hot.
double ber(const Matrix& probs, const IntVector& labels, int k);
double ber(const IntVector& predictions, const IntVector& labels, int k);

// ((k-1)/k, largest group proportion) — the protection optima.
std::pair<double, double> optimal_protection(int k, const Vector& group_proportions);

double sacc(const IntVector& predictions, const IntVector& labels);

// Plug-in mutual information over the empirical joint, natural log.
double mi_discrete(const IntVector& predictions, const IntVector& labels);

// Fid = 1 - mean squared difference over the scoped rows in encoded space.
double fidelity(const Matrix& original, const Matrix& transformed);
double fidelity(const Matrix& original, const Matrix& transformed,
                const IntVector& groups, Scope scope);

// Fraction of scoped transformed rows a classifier assigns to group 1.
double classification_pc(const classifiers::Classifier& clf, const Matrix& transformed);
double classification_pc(const classifiers::Classifier& clf, const Matrix& transformed,
                         const IntVector& groups, Scope scope);

// Mean pairwise distance over ordered pairs, normalised by sqrt(d).
double diversity(const Matrix& x);

struct CategoricalDamage {
  std::vector<std::pair<std::string, double>> per_column;
  double median = 0.0;
};
CategoricalDamage categorical_damage(const Dataset& original, const Dataset& transformed,
                                     Scope scope);

struct GroupRates {
  double pos_rate = 0.0;
  double tp_rate = 0.0;
  double fp_rate = 0.0;
  bool tp_defined = false;  // group had positive ground-truth rows
  bool fp_defined = false;  // group had negative ground-truth rows
  Index size = 0;
};

struct FairnessGaps {
  std::vector<GroupRates> per_group;
  double demo_parity = 0.0;
  double tp_gap = 0.0;
  double fp_gap = 0.0;
  double epsilon = 0.05;  // reporting threshold only
  bool degenerate = false;
};

FairnessGaps fairness_gaps(const IntVector& y_true, const IntVector& y_pred,
                           const IntVector& groups);

enum class Variant { OgPrv, RcPrv };
const char* variant_name(Variant v);

struct ClassifierOutcome {
  classifiers::Kind kind;
  double ber = 0.0;
  double sacc = 0.0;
  double mi = 0.0;
};

// Worst case over the classifier set: lowest BER, highest SAcc, highest MI.
struct ProtectionReport {
  double ber = 1.0;
  double sacc = 0.0;
  double mi = 0.0;
  Variant variant = Variant::RcPrv;
  std::vector<ClassifierOutcome> per_classifier;
};

// Trains each external classifier to infer S from the stacked
// (privileged-side, protected-side) rows using a held-out evaluation split.
ProtectionReport protection_report(const std::vector<classifiers::Kind>& kinds,
                                   const Matrix& priv_side, const Matrix& prot_side,
                                   const IntVector& prot_groups, int k, Variant variant,
                                   std::uint64_t seed);

// Flat report row: metric, scope, variant, value, classifier.
struct ReportRow {
  std::string metric;
  std::string scope;
  std::string variant;
  double value = 0.0;
  std::string classifier;
};

std::vector<ReportRow> flatten(const ProtectionReport& report);
void write_report_csv(const std::string& path, const std::vector<ReportRow>& rows);
std::string report_rows_json(const std::vector<ReportRow>& rows);

}  // namespace fairmap::metrics
