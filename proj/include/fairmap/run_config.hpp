#pragma once

#include <optional>
#include <string>
#include <vector>

#include "fairmap/classifiers.hpp"
#include "fairmap/data.hpp"
#include "fairmap/eval.hpp"
#include "fairmap/mapping.hpp"

namespace fairmap::config {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DatasetSection {
  std::string source = "lipton";  // "lipton" or "csv"
  std::string path;
  Index n = 2000;
  std::vector<AttributeSpec> schema;
  std::vector<std::string> combine;  // sensitive attributes to collapse
};

struct EvalSection {
  std::string perspective = "fairmapping";
  bool use_sacc = false;
  std::vector<classifiers::Kind> protection_classifiers{classifiers::Kind::Gbc,
                                                        classifiers::Kind::SvmLinear};
  std::vector<classifiers::Kind> fairness_classifiers{
      classifiers::Kind::Mlp, classifiers::Kind::DTree, classifiers::Kind::Logistic};
  std::optional<eval::SelectionCoefficients> selection;  // defaults(k) when unset
  double epsilon = 0.05;
  sinkhorn::SinkhornConfig sinkhorn;
  classifiers::Kind task_classifier = classifiers::Kind::Mlp;
  double scenario_test_fraction = 0.3;
  int crossval_folds = 3;
};

struct SweepSection {
  int budget = 100;
  double lambda_lo = 1e-2;
  double lambda_hi = 1e2;
  double eval_fraction = 0.3;
  bool compute_divergences = true;
};

struct RunConfig {
  DatasetSection dataset;
  mapping::TrainConfig train;
  SweepSection sweep;
  EvalSection eval;
  std::uint64_t seed = 1;
  std::string output_dir = "runs/out";
  int workers = 0;  // 0 means all available cores

  // The raw effective JSON, echoed into the run directory for provenance.
  std::string effective_json;
};

// Parses the config file, applies `--set section.key=value` overrides, and
// rejects unknown keys.
RunConfig load_run_config(const std::string& path,
                          const std::vector<std::string>& overrides,
                          std::optional<std::uint64_t> seed_override = {},
                          std::optional<int> workers_override = {});

// Builds (or loads) the dataset described by the config.
Dataset build_dataset(const RunConfig& config);

eval::SweepOptions sweep_options(const RunConfig& config, int workers);

int effective_workers(const RunConfig& config);

}  // namespace fairmap::config
