#pragma once

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "fairmap/classifiers.hpp"
#include "fairmap/data.hpp"
#include "fairmap/mapping.hpp"
#include "fairmap/metrics.hpp"
#include "fairmap/sinkhorn.hpp"

namespace fairmap::eval {

struct MissingMetric : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ParetoPoint {
  int model_id = 0;
  std::map<std::string, double> hyperparams;
  std::map<std::string, double> metrics;  // includes the divergence triple

  double metric(const std::string& name) const;
};

struct Objective {
  std::string metric;
  bool maximize = true;
};

struct Perspective {
  std::string name;
  std::vector<Objective> objectives;
};

// The four cross-comparison perspectives. The fairmapping one can swap its
// BER objective for minimising SAcc.
Perspective perspective_fairmapping(bool use_sacc = false);
Perspective perspective_wgan();
Perspective perspective_attgan();
Perspective perspective_gansan_dirm();
Perspective perspective_by_name(const std::string& name, bool use_sacc = false);

// Non-dominated subset: weakly better on all objectives, strictly on one.
// Duplicate metric vectors are kept once.
std::vector<ParetoPoint> pareto_front(const std::vector<ParetoPoint>& points,
                                      const Perspective& perspective);

using MetricEvaluator =
    std::function<std::map<std::string, double>(const ParetoPoint&)>;

// Rescores every front member under the new perspective then refilters.
std::vector<ParetoPoint> reevaluate_perspective(const std::vector<ParetoPoint>& front,
                                                const Perspective& new_perspective,
                                                const MetricEvaluator& evaluator);

struct SelectionCoefficients {
  double alpha = 1.0;
  double beta = 0.0;
  double gamma = 0.2;
  double delta = 1.0;

  static SelectionCoefficients defaults(int k) {
    return k > 2 ? SelectionCoefficients{1.0, 1.7, 0.2, 1.0}
                 : SelectionCoefficients{1.0, 0.0, 0.2, 1.0};
  }
};

double selection_score(const ParetoPoint& point, const SelectionCoefficients& coeffs,
                       int k);

struct Selection {
  ParetoPoint point;
  double score = 0.0;
};

// Distance to the ideal (BER=(k-1)/k, MI=0, Pc=1, Fid=1); ties break toward
// higher Fid_priv then lower model id.
Selection select_tradeoff(const std::vector<ParetoPoint>& front,
                          const SelectionCoefficients& coeffs, int k);

enum class Scenario { Baseline, DataPublishing, FairClassification, LocalSanitization };
const char* scenario_name(Scenario s);
Scenario scenario_from_name(const std::string& name);

struct ScenarioResult {
  Scenario scenario = Scenario::Baseline;
  classifiers::Kind task_classifier = classifiers::Kind::Mlp;
  double accuracy = 0.0;
  std::vector<double> group_accuracy;
  metrics::FairnessGaps gaps;
};

// Trains the task classifier on the scenario's training composition and
// evaluates on its test composition, always against the original decisions.
ScenarioResult run_scenario(Scenario scenario, const mapping::MappingEnsemble& ensemble,
                            const Dataset& dataset, const std::vector<Index>& train_rows,
                            const std::vector<Index>& test_rows,
                            classifiers::Kind task_kind, std::uint64_t seed);

struct SweepOptions {
  int budget = 100;
  std::uint64_t seed = 1;
  int workers = 1;
  double lambda_lo = 1e-2;
  double lambda_hi = 1e2;
  // Fraction of rows held out for metric evaluation.
  double eval_fraction = 0.3;
  std::vector<classifiers::Kind> protection_classifiers{classifiers::Kind::Gbc,
                                                        classifiers::Kind::SvmLinear};
  sinkhorn::SinkhornConfig sinkhorn;
  bool compute_divergences = true;
  mapping::TrainConfig base;  // epochs, mode, batch size, architecture
};

struct TrialResult {
  int trial = 0;
  bool failed = false;
  std::string error;
  ParetoPoint point;
};

// Metric bundle computed for one trained ensemble on held-out rows. The
// optional cache supplies pre-fitted original-data classifiers for Pc.
std::map<std::string, double> evaluate_model(
    const mapping::MappingEnsemble& ensemble, const EncodedMatrix& eval_encoded,
    const SweepOptions& options, std::uint64_t seed,
    const std::vector<std::shared_ptr<const classifiers::Classifier>>* pc_cache = nullptr);

// Seeded random-search over log-uniform loss weights; trials are independent
// and may run on worker threads. Failures are recorded, not fatal.
std::vector<TrialResult> sweep(const Dataset& dataset, const SweepOptions& options);

// Samples the weights for one trial; exposed so resumed runs can re-derive
// the identical configuration for any trial index.
mapping::TrainConfig trial_config(const SweepOptions& options, int trial);

// Shared per-sweep state: the stratified train/eval split, the encoder
// fitted on the training rows, and the transformation-metric classifiers
// (trained once on original data; fitted classifiers are read-only and
// shared across trials).
struct SweepData {
  Encoder encoder;
  EncodedMatrix train_encoded;
  EncodedMatrix eval_encoded;
  std::vector<std::shared_ptr<const classifiers::Classifier>> pc_classifiers;
};

SweepData prepare_sweep_data(const Dataset& dataset, const SweepOptions& options);
TrialResult run_trial(const SweepData& data, const SweepOptions& options, int trial);

struct CrossvalRow {
  std::string metric;
  double mean = 0.0;
  double stddev = 0.0;
  std::vector<double> per_fold;
};

// Per-metric mean and sample standard deviation over fold values.
CrossvalRow summarize_folds(const std::string& metric, const std::vector<double>& per_fold);

// Retrains with the selected configuration per fold; rows mirror the paper's
// cross-validation tables (BER/SAcc/MI x og/rc, Pc_prot, Fid_priv).
std::vector<CrossvalRow> crossval(const Dataset& dataset, const mapping::TrainConfig& config,
                                  const SweepOptions& options, int n_folds = 3);

// Cross-val CSV: metric, mean, std, then one column per fold.
void write_crossval_csv(const std::string& path, const std::vector<CrossvalRow>& rows);

}  // namespace fairmap::eval
