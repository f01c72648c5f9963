#include "fairmap/run_config.hpp"

#include <fstream>
#include <set>
#include <thread>

#include "fairmap/rng.hpp"
#include "json.hpp"

namespace fairmap::config {

namespace {

using nlohmann::json;

void reject_unknown(const json& obj, const std::string& where,
                    const std::set<std::string>& allowed) {
  for (const auto& [key, value] : obj.items()) {
    (void)value;
    if (!allowed.count(key)) {
      throw ConfigError("unknown key '" + where + key + "'");
    }
  }
}

AttributeSpec attribute_from_json(const json& aj) {
  AttributeSpec a;
  reject_unknown(aj, "dataset.schema[].", {"name", "kind", "role", "categories"});
  a.name = aj.at("name").get<std::string>();
  std::string kind = aj.at("kind").get<std::string>();
  if (kind == "numeric") a.kind = AttrKind::Numeric;
  else if (kind == "categorical") a.kind = AttrKind::Categorical;
  else throw ConfigError("attribute '" + a.name + "': unknown kind '" + kind + "'");
  std::string role = aj.value("role", "other");
  if (role == "sensitive") a.role = AttrRole::Sensitive;
  else if (role == "decision") a.role = AttrRole::Decision;
  else if (role == "other") a.role = AttrRole::Other;
  else throw ConfigError("attribute '" + a.name + "': unknown role '" + role + "'");
  if (aj.contains("categories")) {
    a.categories = aj.at("categories").get<std::vector<std::string>>();
  }
  return a;
}

std::vector<classifiers::Kind> kinds_from_json(const json& j) {
  std::vector<classifiers::Kind> out;
  for (const auto& name : j) {
    out.push_back(classifiers::kind_from_name(name.get<std::string>()));
  }
  return out;
}

void parse_dataset(const json& j, DatasetSection& out) {
  reject_unknown(j, "dataset.", {"source", "path", "n", "schema", "combine_sensitive"});
  out.source = j.value("source", out.source);
  if (out.source != "lipton" && out.source != "csv") {
    throw ConfigError("dataset.source must be 'lipton' or 'csv'");
  }
  out.path = j.value("path", out.path);
  out.n = j.value("n", out.n);
  if (j.contains("schema")) {
    out.schema.clear();
    for (const auto& aj : j.at("schema")) out.schema.push_back(attribute_from_json(aj));
  }
  if (j.contains("combine_sensitive")) {
    out.combine = j.at("combine_sensitive").get<std::vector<std::string>>();
  }
}

void parse_weights(const json& j, mapping::LossWeights& w) {
  reject_unknown(j, "train.weights.",
                 {"lambda_rec", "lambda_c", "lambda_gan", "lambda_d", "lambda_d_mi",
                  "lambda_g_mi", "lambda_dstd_gan",
                  // Aliases from the notation table.
                  "lambda_R", "lambda_C", "lambda_D_std", "lambda_D"});
  w.lambda_rec = j.value("lambda_rec", j.value("lambda_R", w.lambda_rec));
  w.lambda_c = j.value("lambda_c", j.value("lambda_C", w.lambda_c));
  w.lambda_gan = j.value("lambda_gan", j.value("lambda_D_std", w.lambda_gan));
  w.lambda_d = j.value("lambda_d", j.value("lambda_D", w.lambda_d));
  w.lambda_d_mi = j.value("lambda_d_mi", w.lambda_d_mi);
  w.lambda_g_mi = j.value("lambda_g_mi", w.lambda_g_mi);
  w.lambda_dstd_gan = j.value("lambda_dstd_gan", w.lambda_dstd_gan);
}

void parse_train(const json& j, mapping::TrainConfig& t) {
  reject_unknown(j, "train.",
                 {"mode", "epochs", "batch_size", "critic_steps", "clip_c",
                  "protection_loss", "use_mi", "weights", "generator_hidden",
                  "discriminator_hidden", "generator_lr", "critic_lr",
                  "discriminator_head_lr", "classifier_lr", "classifier_max_epochs"});
  if (j.contains("mode")) t.mode = mapping::mode_from_name(j.at("mode").get<std::string>());
  t.epochs = j.value("epochs", t.epochs);
  t.batch_size = j.value("batch_size", t.batch_size);
  t.critic_steps = j.value("critic_steps", t.critic_steps);
  t.clip_c = j.value("clip_c", t.clip_c);
  if (j.contains("protection_loss")) {
    t.protection_loss =
        mapping::protection_from_name(j.at("protection_loss").get<std::string>());
  }
  if (j.contains("use_mi") && !j.at("use_mi").is_null()) {
    t.use_mi = j.at("use_mi").get<bool>();
  }
  if (j.contains("weights")) parse_weights(j.at("weights"), t.weights);
  // Mode-pinned coefficients default to zero so only an explicit non-zero
  // raises ModeConflict later.
  if (t.mode == mapping::Mode::Wgan) {
    if (!j.contains("weights") || !j.at("weights").contains("lambda_rec")) t.weights.lambda_rec = 0.0;
    if (!j.contains("weights") || !j.at("weights").contains("lambda_c")) t.weights.lambda_c = 0.0;
    if (!j.contains("weights") || !j.at("weights").contains("lambda_d")) t.weights.lambda_d = 0.0;
  }
  if (t.mode == mapping::Mode::GanSan || t.mode == mapping::Mode::GanSanOm) {
    if (!j.contains("weights") || !j.at("weights").contains("lambda_c")) t.weights.lambda_c = 0.0;
    if (!j.contains("weights") || !j.at("weights").contains("lambda_gan")) t.weights.lambda_gan = 0.0;
  }
  t.generator_hidden = j.value("generator_hidden", t.generator_hidden);
  t.discriminator_hidden = j.value("discriminator_hidden", t.discriminator_hidden);
  t.generator_lr = j.value("generator_lr", t.generator_lr);
  t.critic_lr = j.value("critic_lr", t.critic_lr);
  t.discriminator_head_lr = j.value("discriminator_head_lr", t.discriminator_head_lr);
  t.classifier_lr = j.value("classifier_lr", t.classifier_lr);
  t.classifier_max_epochs = j.value("classifier_max_epochs", t.classifier_max_epochs);
}

void parse_sweep(const json& j, SweepSection& s) {
  reject_unknown(j, "sweep.",
                 {"budget", "lambda_lo", "lambda_hi", "eval_fraction",
                  "compute_divergences"});
  s.budget = j.value("budget", s.budget);
  s.lambda_lo = j.value("lambda_lo", s.lambda_lo);
  s.lambda_hi = j.value("lambda_hi", s.lambda_hi);
  s.eval_fraction = j.value("eval_fraction", s.eval_fraction);
  s.compute_divergences = j.value("compute_divergences", s.compute_divergences);
}

void parse_sinkhorn(const json& j, sinkhorn::SinkhornConfig& s) {
  reject_unknown(j, "eval.sinkhorn.",
                 {"epsilon", "max_iters", "tolerance", "debiased", "subsample", "seed"});
  s.epsilon = j.value("epsilon", s.epsilon);
  s.max_iters = j.value("max_iters", s.max_iters);
  s.tolerance = j.value("tolerance", s.tolerance);
  s.debiased = j.value("debiased", s.debiased);
  s.subsample = j.value("subsample", s.subsample);
  s.seed = j.value("seed", s.seed);
}

void parse_eval(const json& j, EvalSection& e) {
  reject_unknown(j, "eval.",
                 {"perspective", "use_sacc", "protection_classifiers",
                  "fairness_classifiers", "selection", "epsilon", "sinkhorn",
                  "task_classifier", "scenario_test_fraction", "crossval_folds"});
  e.perspective = j.value("perspective", e.perspective);
  e.use_sacc = j.value("use_sacc", e.use_sacc);
  if (j.contains("protection_classifiers")) {
    e.protection_classifiers = kinds_from_json(j.at("protection_classifiers"));
  }
  if (j.contains("fairness_classifiers")) {
    e.fairness_classifiers = kinds_from_json(j.at("fairness_classifiers"));
  }
  if (j.contains("selection") && !j.at("selection").is_null()) {
    const json& sj = j.at("selection");
    reject_unknown(sj, "eval.selection.", {"alpha", "beta", "gamma", "delta"});
    eval::SelectionCoefficients c;
    c.alpha = sj.value("alpha", c.alpha);
    c.beta = sj.value("beta", c.beta);
    c.gamma = sj.value("gamma", c.gamma);
    c.delta = sj.value("delta", c.delta);
    e.selection = c;
  }
  e.epsilon = j.value("epsilon", e.epsilon);
  if (j.contains("sinkhorn")) parse_sinkhorn(j.at("sinkhorn"), e.sinkhorn);
  if (j.contains("task_classifier")) {
    e.task_classifier =
        classifiers::kind_from_name(j.at("task_classifier").get<std::string>());
  }
  e.scenario_test_fraction = j.value("scenario_test_fraction", e.scenario_test_fraction);
  e.crossval_folds = j.value("crossval_folds", e.crossval_folds);
}

// Applies one `--set section.key=value` override to the JSON tree. Values
// parse as JSON when possible, otherwise as strings.
void apply_override(json& root, const std::string& spec) {
  auto eq = spec.find('=');
  if (eq == std::string::npos) {
    throw ConfigError("--set expects section.key=value, got '" + spec + "'");
  }
  std::string path = spec.substr(0, eq);
  std::string value = spec.substr(eq + 1);
  json parsed;
  try {
    parsed = json::parse(value);
  } catch (const json::parse_error&) {
    parsed = value;
  }
  json* node = &root;
  std::size_t start = 0;
  while (true) {
    std::size_t dot = path.find('.', start);
    std::string key = path.substr(start, dot == std::string::npos ? dot : dot - start);
    if (key.empty()) throw ConfigError("--set: empty key in '" + spec + "'");
    if (dot == std::string::npos) {
      (*node)[key] = parsed;
      break;
    }
    node = &(*node)[key];
    start = dot + 1;
  }
}

}  // namespace

RunConfig load_run_config(const std::string& path,
                          const std::vector<std::string>& overrides,
                          std::optional<std::uint64_t> seed_override,
                          std::optional<int> workers_override) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  json root;
  try {
    root = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path + ": " + e.what());
  }
  for (const std::string& o : overrides) apply_override(root, o);
  if (seed_override) root["seed"] = *seed_override;
  if (workers_override) root["workers"] = *workers_override;

  reject_unknown(root, "", {"dataset", "train", "sweep", "eval", "seed", "output_dir", "workers"});
  RunConfig cfg;
  if (root.contains("dataset")) parse_dataset(root.at("dataset"), cfg.dataset);
  if (root.contains("train")) parse_train(root.at("train"), cfg.train);
  if (root.contains("sweep")) parse_sweep(root.at("sweep"), cfg.sweep);
  if (root.contains("eval")) parse_eval(root.at("eval"), cfg.eval);
  cfg.seed = root.value("seed", cfg.seed);
  cfg.train.seed = cfg.seed;
  cfg.output_dir = root.value("output_dir", cfg.output_dir);
  if (cfg.dataset.source == "csv" && cfg.dataset.path.empty()) {
    throw ConfigError("dataset.source=csv requires dataset.path");
  }
  if (cfg.dataset.source == "csv" && cfg.dataset.schema.empty()) {
    throw ConfigError("dataset.source=csv requires dataset.schema");
  }
  cfg.workers = root.value("workers", 0);
  cfg.effective_json = root.dump(2);
  return cfg;
}

Dataset build_dataset(const RunConfig& config) {
  Dataset d;
  if (config.dataset.source == "lipton") {
    d = generate_lipton(config.dataset.n, Rng(config.seed).substream("dataset").state());
  } else {
    d = load_csv(config.dataset.path, config.dataset.schema);
  }
  if (!config.dataset.combine.empty()) {
    d = combine_sensitive(d, config.dataset.combine);
  }
  return d;
}

eval::SweepOptions sweep_options(const RunConfig& config, int workers) {
  eval::SweepOptions opts;
  opts.budget = config.sweep.budget;
  opts.seed = config.seed;
  opts.workers = workers;
  opts.lambda_lo = config.sweep.lambda_lo;
  opts.lambda_hi = config.sweep.lambda_hi;
  opts.eval_fraction = config.sweep.eval_fraction;
  opts.protection_classifiers = config.eval.protection_classifiers;
  opts.sinkhorn = config.eval.sinkhorn;
  opts.compute_divergences = config.sweep.compute_divergences;
  opts.base = config.train;
  return opts;
}

int effective_workers(const RunConfig& config) {
  int w = config.workers;
  if (w <= 0) w = static_cast<int>(std::thread::hardware_concurrency());
  return std::max(1, w);
}

}  // namespace fairmap::config
