#include "fairmap/commands.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <set>
#include <thread>

#include "fairmap/csv.hpp"
#include "json.hpp"

namespace fairmap::commands {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << text;
}

void echo_config(const config::RunConfig& cfg) {
  fs::create_directories(cfg.output_dir);
  write_text(cfg.output_dir + "/config.json", cfg.effective_json + "\n");
}

json trial_to_json(const eval::TrialResult& res) {
  json j;
  j["trial"] = res.trial;
  j["failed"] = res.failed;
  j["error"] = res.error;
  j["hyperparams"] = res.point.hyperparams;
  j["metrics"] = res.point.metrics;
  return j;
}

eval::TrialResult trial_from_json(const json& j) {
  eval::TrialResult res;
  res.trial = j.at("trial").get<int>();
  res.failed = j.at("failed").get<bool>();
  res.error = j.at("error").get<std::string>();
  res.point.model_id = res.trial;
  res.point.hyperparams = j.at("hyperparams").get<std::map<std::string, double>>();
  res.point.metrics = j.at("metrics").get<std::map<std::string, double>>();
  return res;
}

std::string trial_path(const std::string& dir, int trial) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "trial_%04d.json", trial);
  return dir + "/" + buf;
}

const std::vector<std::string> kHyperparamColumns = {
    "lambda_rec", "lambda_c", "lambda_gan", "lambda_d",
    "lambda_d_mi", "lambda_g_mi", "epochs", "seed"};

void write_pareto_csv(const std::string& path, const std::vector<eval::TrialResult>& results) {
  std::set<std::string> metric_names;
  for (const auto& r : results) {
    if (r.failed) continue;
    for (const auto& [name, v] : r.point.metrics) {
      (void)v;
      metric_names.insert(name);
    }
  }
  std::vector<csv::Row> rows;
  csv::Row header{"model_id"};
  for (const std::string& h : kHyperparamColumns) header.push_back(h);
  for (const std::string& m : metric_names) header.push_back(m);
  rows.push_back(header);
  for (const auto& r : results) {
    if (r.failed) continue;
    csv::Row row{std::to_string(r.point.model_id)};
    for (const std::string& h : kHyperparamColumns) {
      auto it = r.point.hyperparams.find(h);
      row.push_back(it == r.point.hyperparams.end() ? "0" : format_double(it->second));
    }
    for (const std::string& m : metric_names) {
      auto it = r.point.metrics.find(m);
      row.push_back(it == r.point.metrics.end() ? "nan" : format_double(it->second));
    }
    rows.push_back(row);
  }
  csv::write_file(path, rows);
}

}  // namespace

std::string content_fingerprint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  char c;
  while (in.get(c)) {
    h ^= static_cast<std::uint8_t>(c);
    h *= 0x100000001b3ULL;
  }
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

void cmd_prepare(const config::RunConfig& cfg) {
  echo_config(cfg);
  Dataset d = config::build_dataset(cfg);
  std::string dataset_path = cfg.output_dir + "/dataset.csv";
  write_csv(d, dataset_path);

  Encoder enc;
  enc.fit(d);
  EncodedMatrix em = enc.encode(d);
  std::vector<csv::Row> rows;
  csv::Row header;
  for (const Block& b : em.blocks) {
    if (b.categorical) {
      const AttributeSpec* spec = nullptr;
      for (const AttributeSpec& a : enc.fitted_schema()) {
        if (a.name == b.attribute) spec = &a;
      }
      for (Index j = 0; j < b.width; ++j) {
        header.push_back(b.attribute + "=" + spec->categories[static_cast<std::size_t>(j)]);
      }
    } else {
      header.push_back(b.attribute);
    }
  }
  header.push_back("group");
  rows.push_back(header);
  for (Index r = 0; r < em.rows(); ++r) {
    csv::Row row;
    for (Index c = 0; c < em.cols(); ++c) row.push_back(format_double(em.values(r, c)));
    row.push_back(std::to_string(em.groups[r]));
    rows.push_back(row);
  }
  csv::write_file(cfg.output_dir + "/encoded.csv", rows);

  json fp;
  fp["dataset_fingerprint"] = content_fingerprint(dataset_path);
  fp["rows"] = d.rows();
  fp["k"] = d.k;
  Vector props = d.group_proportions();
  fp["group_proportions"] = std::vector<double>(props.data(), props.data() + props.size());
  fp["warnings"] = d.warnings;
  write_text(cfg.output_dir + "/fingerprint.json", fp.dump(2) + "\n");
}

void cmd_train(const config::RunConfig& cfg) {
  echo_config(cfg);
  Dataset d = config::build_dataset(cfg);
  std::string dataset_path = cfg.output_dir + "/dataset.csv";
  write_csv(d, dataset_path);
  std::string fingerprint = content_fingerprint(dataset_path);

  mapping::MappingEnsemble ens;
  try {
    ens = mapping::train(d, cfg.train);
  } catch (const mapping::NonFiniteLoss& e) {
    if (e.last_checkpoint) {
      mapping::save_ensemble(*e.last_checkpoint, cfg.output_dir + "/checkpoint_lastgood",
                             fingerprint);
    }
    throw;
  }
  mapping::save_ensemble(ens, cfg.output_dir + "/checkpoint", fingerprint);

  std::vector<csv::Row> rows;
  rows.push_back({"epoch", "recons", "classif", "gan", "protection", "generator_total",
                  "disc", "critic", "disc_total"});
  for (const mapping::EpochStats& s : ens.history) {
    rows.push_back({std::to_string(s.epoch), format_double(s.recons),
                    format_double(s.classif), format_double(s.gan),
                    format_double(s.protection), format_double(s.generator_total),
                    format_double(s.disc), format_double(s.critic),
                    format_double(s.disc_total)});
  }
  csv::write_file(cfg.output_dir + "/history.csv", rows);
}

void cmd_sweep(const config::RunConfig& cfg, bool resume) {
  echo_config(cfg);
  Dataset d = config::build_dataset(cfg);
  eval::SweepOptions options = config::sweep_options(cfg, config::effective_workers(cfg));
  eval::SweepData data = eval::prepare_sweep_data(d, options);

  std::string trials_dir = cfg.output_dir + "/trials";
  fs::create_directories(trials_dir);

  std::vector<eval::TrialResult> results(static_cast<std::size_t>(options.budget));
  std::vector<bool> done(static_cast<std::size_t>(options.budget), false);
  if (resume) {
    for (int t = 0; t < options.budget; ++t) {
      std::string path = trial_path(trials_dir, t);
      std::ifstream in(path);
      if (!in) continue;
      results[static_cast<std::size_t>(t)] = trial_from_json(json::parse(in));
      done[static_cast<std::size_t>(t)] = true;
    }
  }

  std::atomic<int> next{0};
  std::mutex io_mutex;
  auto worker = [&] {
    while (true) {
      int trial = next.fetch_add(1);
      if (trial >= options.budget) break;
      if (done[static_cast<std::size_t>(trial)]) continue;
      eval::TrialResult res = eval::run_trial(data, options, trial);
      {
        std::lock_guard<std::mutex> lock(io_mutex);
        write_text(trial_path(trials_dir, trial), trial_to_json(res).dump(2) + "\n");
      }
      results[static_cast<std::size_t>(trial)] = std::move(res);
    }
  };
  int n_workers = std::max(1, options.workers);
  std::vector<std::thread> pool;
  for (int t = 0; t < n_workers; ++t) pool.emplace_back(worker);
  for (std::thread& t : pool) t.join();

  write_pareto_csv(cfg.output_dir + "/pareto.csv", results);
  std::vector<csv::Row> failures{{"trial", "error"}};
  for (const auto& r : results) {
    if (r.failed) failures.push_back({std::to_string(r.trial), r.error});
  }
  csv::write_file(cfg.output_dir + "/failures.csv", failures);
}

int cmd_select(const config::RunConfig& cfg, const std::string& pareto_csv, int k) {
  std::vector<csv::Row> rows = csv::read_file(pareto_csv);
  if (rows.size() < 2) throw std::runtime_error(pareto_csv + ": no data rows");
  const csv::Row& header = rows.front();
  std::set<std::string> hp(kHyperparamColumns.begin(), kHyperparamColumns.end());
  std::vector<eval::ParetoPoint> points;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    eval::ParetoPoint p;
    for (std::size_t c = 0; c < header.size(); ++c) {
      const std::string& name = header[c];
      const std::string& cell = rows[r][c];
      if (name == "model_id") {
        p.model_id = std::stoi(cell);
      } else if (hp.count(name)) {
        p.hyperparams[name] = std::strtod(cell.c_str(), nullptr);
      } else {
        p.metrics[name] = std::strtod(cell.c_str(), nullptr);
      }
    }
    points.push_back(std::move(p));
  }
  eval::Perspective persp = eval::perspective_by_name(cfg.eval.perspective, cfg.eval.use_sacc);
  std::vector<eval::ParetoPoint> front = eval::pareto_front(points, persp);
  eval::SelectionCoefficients coeffs =
      cfg.eval.selection.value_or(eval::SelectionCoefficients::defaults(k));
  eval::Selection sel = eval::select_tradeoff(front, coeffs, k);

  fs::create_directories(cfg.output_dir);
  json j;
  j["model_id"] = sel.point.model_id;
  j["score"] = sel.score;
  j["hyperparams"] = sel.point.hyperparams;
  j["metrics"] = sel.point.metrics;
  j["front_size"] = front.size();
  j["coefficients"] = {{"alpha", coeffs.alpha}, {"beta", coeffs.beta},
                       {"gamma", coeffs.gamma}, {"delta", coeffs.delta}};
  write_text(cfg.output_dir + "/selected.json", j.dump(2) + "\n");
  return sel.point.model_id;
}

void cmd_scenario(const config::RunConfig& cfg, const std::string& checkpoint_dir) {
  echo_config(cfg);
  Dataset d = config::build_dataset(cfg);
  mapping::MappingEnsemble ens = mapping::load_ensemble(checkpoint_dir);

  Rng split_rng = Rng(cfg.seed).substream("scenario.split");
  std::vector<Index> train_rows, test_rows;
  for (int g = 1; g <= d.k; ++g) {
    std::vector<Index> rows = d.rows_of_group(g);
    split_rng.shuffle(rows);
    std::size_t n_test = static_cast<std::size_t>(cfg.eval.scenario_test_fraction *
                                                  static_cast<double>(rows.size()));
    n_test = std::clamp<std::size_t>(n_test, 1, rows.size() - 1);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      (i < n_test ? test_rows : train_rows).push_back(rows[i]);
    }
  }
  std::sort(train_rows.begin(), train_rows.end());
  std::sort(test_rows.begin(), test_rows.end());

  std::vector<csv::Row> rows;
  csv::Row header{"scenario", "classifier", "accuracy"};
  for (int g = 1; g <= d.k; ++g) header.push_back("accuracy_group_" + std::to_string(g));
  header.insert(header.end(), {"pos_rate_gap", "tp_rate_gap", "fp_rate_gap", "degenerate"});
  rows.push_back(header);
  for (eval::Scenario s : {eval::Scenario::Baseline, eval::Scenario::DataPublishing,
                           eval::Scenario::FairClassification,
                           eval::Scenario::LocalSanitization}) {
    eval::ScenarioResult res =
        eval::run_scenario(s, ens, d, train_rows, test_rows, cfg.eval.task_classifier,
                           Rng(cfg.seed).substream("scenario.task").state());
    csv::Row row{eval::scenario_name(s), classifiers::kind_name(res.task_classifier),
                 format_double(res.accuracy)};
    for (double a : res.group_accuracy) row.push_back(format_double(a));
    row.push_back(format_double(res.gaps.demo_parity));
    row.push_back(format_double(res.gaps.tp_gap));
    row.push_back(format_double(res.gaps.fp_gap));
    row.push_back(res.gaps.degenerate ? "true" : "false");
    rows.push_back(row);
  }
  csv::write_file(cfg.output_dir + "/scenario.csv", rows);
}

std::string report_schema_text() {
  return R"({
  "type": "object",
  "required": ["version", "run_dir", "files"],
  "properties": {
    "version": {"type": "integer"},
    "run_dir": {"type": "string"},
    "dataset": {"type": "object"},
    "sweep": {
      "type": "object",
      "properties": {
        "trials": {"type": "integer"},
        "failures": {"type": "integer"}
      }
    },
    "selection": {"type": "object"},
    "scenarios": {"type": "array"},
    "files": {"type": "array", "items": {"type": "string"}}
  }
})";
}

namespace {

void validate_against(const json& schema, const json& value, const std::string& where) {
  std::string type = schema.value("type", "");
  auto fail = [&](const std::string& msg) {
    throw std::runtime_error("report schema violation at '" + where + "': " + msg);
  };
  if (type == "object") {
    if (!value.is_object()) fail("expected object");
    if (schema.contains("required")) {
      for (const auto& req : schema.at("required")) {
        if (!value.contains(req.get<std::string>())) {
          fail("missing required key '" + req.get<std::string>() + "'");
        }
      }
    }
    if (schema.contains("properties")) {
      for (const auto& [key, sub] : schema.at("properties").items()) {
        if (value.contains(key)) validate_against(sub, value.at(key), where + "." + key);
      }
    }
  } else if (type == "array") {
    if (!value.is_array()) fail("expected array");
    if (schema.contains("items")) {
      for (std::size_t i = 0; i < value.size(); ++i) {
        validate_against(schema.at("items"), value[i], where + "[" + std::to_string(i) + "]");
      }
    }
  } else if (type == "integer") {
    if (!value.is_number_integer()) fail("expected integer");
  } else if (type == "number") {
    if (!value.is_number()) fail("expected number");
  } else if (type == "string") {
    if (!value.is_string()) fail("expected string");
  } else if (type == "boolean") {
    if (!value.is_boolean()) fail("expected boolean");
  }
}

}  // namespace

void validate_report_json(const std::string& report_path) {
  std::ifstream in(report_path);
  if (!in) throw std::runtime_error("cannot open " + report_path);
  json report = json::parse(in);
  validate_against(json::parse(report_schema_text()), report, "$");
}

void cmd_report(const std::string& run_dir) {
  if (!fs::is_directory(run_dir)) {
    throw std::runtime_error("report: '" + run_dir + "' is not a directory");
  }
  json report;
  report["version"] = 1;
  report["run_dir"] = run_dir;
  std::vector<std::string> files;
  for (const auto& entry : fs::directory_iterator(run_dir)) {
    if (entry.is_regular_file()) files.push_back(entry.path().filename().string());
  }
  std::sort(files.begin(), files.end());
  std::erase(files, std::string("report.json"));
  if (files.empty()) throw std::runtime_error("report: run directory is empty");
  report["files"] = files;

  auto load_json_if = [&](const std::string& name) -> std::optional<json> {
    std::ifstream in(run_dir + "/" + name);
    if (!in) return std::nullopt;
    return json::parse(in);
  };
  if (auto fp = load_json_if("fingerprint.json")) report["dataset"] = *fp;
  if (auto sel = load_json_if("selected.json")) report["selection"] = *sel;

  std::ifstream pareto(run_dir + "/pareto.csv");
  if (pareto) {
    std::vector<csv::Row> rows = csv::read_stream(pareto);
    json sweep;
    sweep["trials"] = rows.empty() ? 0 : static_cast<int>(rows.size()) - 1;
    int failures = 0;
    std::ifstream fin(run_dir + "/failures.csv");
    if (fin) {
      std::vector<csv::Row> frows = csv::read_stream(fin);
      failures = frows.empty() ? 0 : static_cast<int>(frows.size()) - 1;
    }
    sweep["failures"] = failures;
    report["sweep"] = sweep;
  }
  std::ifstream scen(run_dir + "/scenario.csv");
  if (scen) {
    std::vector<csv::Row> rows = csv::read_stream(scen);
    json scenarios = json::array();
    for (std::size_t r = 1; r < rows.size(); ++r) {
      json row;
      for (std::size_t c = 0; c < rows[0].size() && c < rows[r].size(); ++c) {
        row[rows[0][c]] = rows[r][c];
      }
      scenarios.push_back(row);
    }
    report["scenarios"] = scenarios;
  }
  write_text(run_dir + "/report.json", report.dump(2) + "\n");
  validate_report_json(run_dir + "/report.json");
}

}  // namespace fairmap::commands
