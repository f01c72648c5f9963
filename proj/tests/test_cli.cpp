#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "fairmap/commands.hpp"
#include "fairmap/csv.hpp"

using namespace fairmap;
namespace fs = std::filesystem;

namespace {

std::string temp_dir(const std::string& name) {
  std::string path = (fs::temp_directory_path() / name).string();
  fs::remove_all(path);
  fs::create_directories(path);
  return path;
}

std::string write_config(const std::string& dir, const std::string& body) {
  std::string path = dir + "/config.json";
  std::ofstream out(path);
  out << body;
  return path;
}

std::string lipton_config(const std::string& out_dir, int n = 160) {
  return std::string(R"({
  "dataset": {"source": "lipton", "n": )") +
         std::to_string(n) + R"(},
  "train": {"epochs": 2, "batch_size": 40, "critic_steps": 1,
            "classifier_max_epochs": 4, "discriminator_hidden": 8},
  "sweep": {"budget": 2, "compute_divergences": false},
  "seed": 7,
  "output_dir": ")" +
         out_dir + R"("
})";
}

}  // namespace

TEST_CASE("run config: parsing, overrides, unknown keys, mode defaults") {
  std::string dir = temp_dir("fairmap_cfg");
  std::string path = write_config(dir, lipton_config(dir + "/run"));

  config::RunConfig cfg = config::load_run_config(path, {});
  CHECK(cfg.dataset.source == "lipton");
  CHECK(cfg.train.epochs == 2);
  CHECK(cfg.seed == 7);

  config::RunConfig with_set =
      config::load_run_config(path, {"train.epochs=9", "dataset.n=320"});
  CHECK(with_set.train.epochs == 9);
  CHECK(with_set.dataset.n == 320);

  config::RunConfig reseeded = config::load_run_config(path, {}, 99, 2);
  CHECK(reseeded.seed == 99);
  CHECK(reseeded.train.seed == 99);
  CHECK(reseeded.workers == 2);

  CHECK_THROWS_AS(config::load_run_config(path, {"train.bogus_key=1"}),
                  config::ConfigError);
  CHECK_THROWS_AS(config::load_run_config(dir + "/missing.json", {}),
                  config::ConfigError);

  // wgan mode defaults the pinned coefficients to zero...
  config::RunConfig wgan = config::load_run_config(path, {"train.mode=\"wgan\""});
  CHECK(wgan.train.weights.lambda_rec == 0.0);
  CHECK(wgan.train.weights.lambda_c == 0.0);
  CHECK(wgan.train.weights.lambda_d == 0.0);
  // ...but an explicit non-zero survives parsing and trips ModeConflict later.
  config::RunConfig bad = config::load_run_config(
      path, {"train.mode=\"wgan\"", "train.weights.lambda_rec=2.0"});
  CHECK_THROWS_AS(bad.train.validate(2), mapping::ModeConflict);

  // Notation-table weight aliases are accepted.
  config::RunConfig alias =
      config::load_run_config(path, {"train.weights.lambda_R=3.5"});
  CHECK(alias.train.weights.lambda_rec == 3.5);
}

TEST_CASE("cmd_prepare writes dataset, encoding and a stable fingerprint") {
  std::string dir = temp_dir("fairmap_prep");
  std::string out = dir + "/run";
  std::string path = write_config(dir, lipton_config(out));
  config::RunConfig cfg = config::load_run_config(path, {});
  commands::cmd_prepare(cfg);
  CHECK(fs::exists(out + "/dataset.csv"));
  CHECK(fs::exists(out + "/encoded.csv"));
  CHECK(fs::exists(out + "/fingerprint.json"));
  std::string fp1 = commands::content_fingerprint(out + "/dataset.csv");

  // Encoded values stay in [0,1] and carry the group column.
  std::vector<csv::Row> enc = csv::read_file(out + "/encoded.csv");
  CHECK(enc[0].back() == "group");
  for (std::size_t r = 1; r < std::min<std::size_t>(enc.size(), 20); ++r) {
    for (std::size_t c = 0; c + 1 < enc[r].size(); ++c) {
      double v = std::stod(enc[r][c]);
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
  }

  // Re-running produces the identical fingerprint.
  commands::cmd_prepare(cfg);
  CHECK(commands::content_fingerprint(out + "/dataset.csv") == fp1);

  // A bad schema is surfaced with the offending column named.
  std::string bad_csv = dir + "/bad.csv";
  std::ofstream(bad_csv) << "a,b\n1,2\n";
  std::string bad_cfg = write_config(dir, R"({
    "dataset": {"source": "csv", "path": ")" + bad_csv + R"(",
      "schema": [
        {"name": "s", "kind": "categorical", "role": "sensitive", "categories": ["x","y"]},
        {"name": "b", "kind": "numeric"},
        {"name": "y", "kind": "categorical", "role": "decision", "categories": ["no","yes"]}
      ]},
    "output_dir": ")" + out + R"("
  })");
  config::RunConfig bad = config::load_run_config(bad_cfg, {});
  CHECK_THROWS_AS(commands::cmd_prepare(bad), MissingColumn);
}

TEST_CASE("cmd_train writes a loadable checkpoint and history") {
  std::string dir = temp_dir("fairmap_train");
  std::string out = dir + "/run";
  config::RunConfig cfg = config::load_run_config(write_config(dir, lipton_config(out)), {});
  commands::cmd_train(cfg);
  CHECK(fs::exists(out + "/history.csv"));
  mapping::MappingEnsemble ens = mapping::load_ensemble(out + "/checkpoint");
  CHECK(ens.k == 2);
  std::vector<csv::Row> history = csv::read_file(out + "/history.csv");
  CHECK(history.size() == 3);  // header + 2 epochs
  CHECK(history[0][0] == "epoch");

  // The manifest records the mode.
  std::ifstream manifest(out + "/checkpoint/manifest.json");
  std::string text((std::istreambuf_iterator<char>(manifest)),
                   std::istreambuf_iterator<char>());
  CHECK(text.find("fairmapping") != std::string::npos);
}

TEST_CASE("cmd_sweep + cmd_select + cmd_report round trip with resume") {
  std::string dir = temp_dir("fairmap_sweep");
  std::string out = dir + "/run";
  config::RunConfig cfg = config::load_run_config(write_config(dir, lipton_config(out)), {});
  cfg.workers = 1;
  commands::cmd_sweep(cfg, false);
  CHECK(fs::exists(out + "/pareto.csv"));
  std::vector<csv::Row> pareto = csv::read_file(out + "/pareto.csv");
  CHECK(pareto.size() == 3);  // header + 2 trials

  // Resume: drop one trial file; only that trial is recomputed and the CSV
  // ends up identical.
  fs::remove(out + "/trials/trial_0001.json");
  commands::cmd_sweep(cfg, true);
  std::vector<csv::Row> pareto2 = csv::read_file(out + "/pareto.csv");
  CHECK(pareto2 == pareto);

  int selected = commands::cmd_select(cfg, out + "/pareto.csv", 2);
  CHECK(fs::exists(out + "/selected.json"));
  CHECK(selected >= 0);
  CHECK(selected < 2);

  commands::cmd_report(out);
  CHECK(fs::exists(out + "/report.json"));
  commands::validate_report_json(out + "/report.json");
  // Idempotent: a second run rewrites the same content.
  std::ifstream first(out + "/report.json");
  std::string text1((std::istreambuf_iterator<char>(first)), std::istreambuf_iterator<char>());
  commands::cmd_report(out);
  std::ifstream second(out + "/report.json");
  std::string text2((std::istreambuf_iterator<char>(second)), std::istreambuf_iterator<char>());
  CHECK(text1 == text2);

  CHECK_THROWS(commands::cmd_report(temp_dir("fairmap_empty_run")));
}

TEST_CASE("cmd_select reproduces the worked example through a file round trip") {
  std::string dir = temp_dir("fairmap_select");
  std::vector<csv::Row> rows{
      {"model_id", "lambda_rec", "BER_rc_prv", "MI_rc_prv", "Pc_prot", "Fid_priv",
       "BER_og_prv", "Pc_all", "Fid_all"},
      {"0", "1", "0.48", "0.01", "0.92", "0.996", "0.4", "0.9", "0.99"},
      {"1", "1", "0.30", "0.02", "1.0", "0.999", "0.3", "0.95", "0.995"},
  };
  csv::write_file(dir + "/pareto.csv", rows);
  std::string cfg_path = write_config(dir, lipton_config(dir + "/run"));
  config::RunConfig cfg = config::load_run_config(cfg_path, {});
  int id = commands::cmd_select(cfg, dir + "/pareto.csv", 2);
  CHECK(id == 0);
  std::ifstream sel(dir + "/run/selected.json");
  std::string text((std::istreambuf_iterator<char>(sel)), std::istreambuf_iterator<char>());
  auto score_pos = text.find("\"score\":");
  REQUIRE(score_pos != std::string::npos);
  double score = std::strtod(text.c_str() + score_pos + 8, nullptr);
  CHECK(score == doctest::Approx(0.001696).epsilon(1e-9));
}

TEST_CASE("cmd_scenario emits all four scenarios against a checkpoint") {
  std::string dir = temp_dir("fairmap_scen");
  std::string out = dir + "/run";
  config::RunConfig cfg = config::load_run_config(write_config(dir, lipton_config(out, 200)), {});
  cfg.eval.task_classifier = classifiers::Kind::Logistic;
  commands::cmd_train(cfg);
  commands::cmd_scenario(cfg, out + "/checkpoint");
  std::vector<csv::Row> rows = csv::read_file(out + "/scenario.csv");
  REQUIRE(rows.size() == 5);
  CHECK(rows[1][0] == "baseline");
  CHECK(rows[2][0] == "data_publishing");
  CHECK(rows[3][0] == "fair_classification");
  CHECK(rows[4][0] == "local_sanitization");
  CHECK_THROWS(commands::cmd_scenario(cfg, out + "/no_such_checkpoint"));
}
