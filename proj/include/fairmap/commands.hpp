#pragma once

#include <string>
#include <vector>

#include "fairmap/run_config.hpp"

namespace fairmap::commands {

// Each command is deterministic given config + seed; outputs land under the
// configured output directory. Throws on failure; the CLI maps that to a
// non-zero exit.

// Writes dataset.csv, encoded.csv and fingerprint.json.
void cmd_prepare(const config::RunConfig& cfg);

// Trains one ensemble; writes checkpoint/ and history.csv.
void cmd_train(const config::RunConfig& cfg);

// Random-search sweep; writes trials/trial_NNNN.json, pareto.csv and
// failures.csv. With resume, completed trial files are skipped.
void cmd_sweep(const config::RunConfig& cfg, bool resume = false);

// Reads a Pareto CSV, builds the front and applies the selection formula;
// writes selected.json. Returns the selected model id.
int cmd_select(const config::RunConfig& cfg, const std::string& pareto_csv, int k);

// Runs the four deployment scenarios against a trained checkpoint; writes
// scenario.csv.
void cmd_scenario(const config::RunConfig& cfg, const std::string& checkpoint_dir);

// Consolidates a run directory into report.json (validated against the
// shipped schema) and a CSV bundle index.
void cmd_report(const std::string& run_dir);

// FNV-1a 64 content hash, hex-encoded; used for dataset fingerprints.
std::string content_fingerprint(const std::string& path);

// Minimal structural validation of report.json against the shipped schema.
void validate_report_json(const std::string& report_path);
std::string report_schema_text();

}  // namespace fairmap::commands
