#include "fairmap/eval.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <thread>

#include "fairmap/csv.hpp"

namespace fairmap::eval {

double ParetoPoint::metric(const std::string& name) const {
  auto it = metrics.find(name);
  if (it == metrics.end()) {
    throw MissingMetric("point " + std::to_string(model_id) + " lacks metric '" +
                        name + "'");
  }
  return it->second;
}

Perspective perspective_fairmapping(bool use_sacc) {
  Perspective p;
  p.name = "fairmapping";
  p.objectives = {{"Fid_priv", true},
                  use_sacc ? Objective{"SAcc_og_prv", false} : Objective{"BER_og_prv", true},
                  {"Pc_prot", true}};
  return p;
}

Perspective perspective_wgan() { return {"wgan", {{"Pc_all", true}}}; }

Perspective perspective_attgan() {
  return {"attgan", {{"Fid_all", true}, {"Pc_all", true}}};
}

Perspective perspective_gansan_dirm() {
  return {"gansan_dirm", {{"Fid_all", true}, {"BER_rc_prv", true}}};
}

Perspective perspective_by_name(const std::string& name, bool use_sacc) {
  if (name == "fairmapping") return perspective_fairmapping(use_sacc);
  if (name == "wgan") return perspective_wgan();
  if (name == "attgan") return perspective_attgan();
  if (name == "gansan_dirm") return perspective_gansan_dirm();
  throw std::invalid_argument("unknown perspective '" + name + "'");
}

namespace {

std::vector<double> objective_vector(const ParetoPoint& p, const Perspective& persp) {
  std::vector<double> v;
  v.reserve(persp.objectives.size());
  for (const Objective& o : persp.objectives) {
    double m = p.metric(o.metric);
    if (!std::isfinite(m)) {
      throw MissingMetric("point " + std::to_string(p.model_id) + ": metric '" +
                          o.metric + "' is not finite");
    }
    v.push_back(o.maximize ? m : -m);  // normalised to maximise
  }
  return v;
}

bool dominates(const std::vector<double>& a, const std::vector<double>& b) {
  bool strict = false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] < b[i]) return false;
    if (a[i] > b[i]) strict = true;
  }
  return strict;
}

}  // namespace

std::vector<ParetoPoint> pareto_front(const std::vector<ParetoPoint>& points,
                                      const Perspective& perspective) {
  if (points.empty()) throw std::invalid_argument("pareto_front: no points");
  std::vector<std::vector<double>> objs;
  objs.reserve(points.size());
  for (const ParetoPoint& p : points) objs.push_back(objective_vector(p, perspective));

  // Incremental front maintenance; the test oracle is an all-pairs scan.
  std::vector<std::size_t> front;
  for (std::size_t i = 0; i < points.size(); ++i) {
    bool keep = true;
    for (std::size_t f : front) {
      if (objs[f] == objs[i] || dominates(objs[f], objs[i])) {
        keep = false;
        break;
      }
    }
    if (!keep) continue;
    std::erase_if(front, [&](std::size_t f) { return dominates(objs[i], objs[f]); });
    front.push_back(i);
  }
  std::sort(front.begin(), front.end());
  std::vector<ParetoPoint> out;
  out.reserve(front.size());
  for (std::size_t f : front) out.push_back(points[f]);
  return out;
}

std::vector<ParetoPoint> reevaluate_perspective(const std::vector<ParetoPoint>& front,
                                                const Perspective& new_perspective,
                                                const MetricEvaluator& evaluator) {
  std::vector<ParetoPoint> rescored;
  rescored.reserve(front.size());
  for (const ParetoPoint& p : front) {
    ParetoPoint q = p;
    for (const auto& [name, value] : evaluator(p)) q.metrics[name] = value;
    rescored.push_back(std::move(q));
  }
  return pareto_front(rescored, new_perspective);
}

double selection_score(const ParetoPoint& point, const SelectionCoefficients& coeffs,
                       int k) {
  double optimal_ber = static_cast<double>(k - 1) / k;
  double d_ber = point.metric("BER_rc_prv") - optimal_ber;
  double mi = point.metric("MI_rc_prv");
  double d_pc = point.metric("Pc_prot") - 1.0;
  double d_fid = point.metric("Fid_priv") - 1.0;
  return coeffs.alpha * d_ber * d_ber + coeffs.beta * mi * mi +
         coeffs.gamma * d_pc * d_pc + coeffs.delta * d_fid * d_fid;
}

Selection select_tradeoff(const std::vector<ParetoPoint>& front,
                          const SelectionCoefficients& coeffs, int k) {
  if (front.empty()) throw std::invalid_argument("select_tradeoff: empty front");
  const ParetoPoint* best = nullptr;
  double best_score = std::numeric_limits<double>::infinity();
  for (const ParetoPoint& p : front) {
    double score = selection_score(p, coeffs, k);
    bool better = score < best_score;
    if (!better && score == best_score && best != nullptr) {
      double fid = p.metric("Fid_priv");
      double best_fid = best->metric("Fid_priv");
      better = fid > best_fid || (fid == best_fid && p.model_id < best->model_id);
    }
    if (better) {
      best = &p;
      best_score = score;
    }
  }
  return {*best, best_score};
}

const char* scenario_name(Scenario s) {
  switch (s) {
    case Scenario::Baseline: return "baseline";
    case Scenario::DataPublishing: return "data_publishing";
    case Scenario::FairClassification: return "fair_classification";
    case Scenario::LocalSanitization: return "local_sanitization";
  }
  return "baseline";
}

Scenario scenario_from_name(const std::string& name) {
  if (name == "baseline") return Scenario::Baseline;
  if (name == "data_publishing") return Scenario::DataPublishing;
  if (name == "fair_classification") return Scenario::FairClassification;
  if (name == "local_sanitization") return Scenario::LocalSanitization;
  throw std::invalid_argument("unknown scenario '" + name + "'");
}

ScenarioResult run_scenario(Scenario scenario, const mapping::MappingEnsemble& ensemble,
                            const Dataset& dataset, const std::vector<Index>& train_rows,
                            const std::vector<Index>& test_rows,
                            classifiers::Kind task_kind, std::uint64_t seed) {
  EncodedMatrix original = ensemble.encoder.encode(dataset);
  EncodedMatrix mapped = mapping::transform(ensemble.generator, original);
  // Scenarios consume the materialised transformed table.
  mapped.values = ensemble.encoder.encode(ensemble.encoder.decode(mapped)).values;

  // A is original or transformed per the scenario; Y is always original.
  bool train_transformed = scenario == Scenario::DataPublishing ||
                           scenario == Scenario::FairClassification;
  bool test_transformed = scenario == Scenario::DataPublishing ||
                          scenario == Scenario::LocalSanitization;

  Matrix features_orig = original.without_decision();
  Matrix features_mapped = mapped.without_decision();
  IntVector y = dataset.decisions();

  auto slice = [](const Matrix& m, const std::vector<Index>& rows) {
    Matrix out(static_cast<Index>(rows.size()), m.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      out.row(static_cast<Index>(i)) = m.row(rows[i]);
    }
    return out;
  };
  Matrix x_train = slice(train_transformed ? features_mapped : features_orig, train_rows);
  Matrix x_test = slice(test_transformed ? features_mapped : features_orig, test_rows);
  IntVector y_train(static_cast<Index>(train_rows.size()));
  for (std::size_t i = 0; i < train_rows.size(); ++i) {
    y_train[static_cast<Index>(i)] = y[train_rows[i]] + 1;  // classes 1 (neg) / 2 (pos)
  }

  auto clf = classifiers::make_classifier(task_kind);
  clf->fit(x_train, y_train, seed);
  IntVector pred = clf->predict(x_test);

  ScenarioResult out;
  out.scenario = scenario;
  out.task_classifier = task_kind;
  IntVector y_true(static_cast<Index>(test_rows.size()));
  IntVector y_pred01(static_cast<Index>(test_rows.size()));
  IntVector groups(static_cast<Index>(test_rows.size()));
  Index correct = 0;
  std::vector<Index> group_n(static_cast<std::size_t>(dataset.k), 0);
  std::vector<Index> group_correct(static_cast<std::size_t>(dataset.k), 0);
  for (std::size_t i = 0; i < test_rows.size(); ++i) {
    Index r = test_rows[i];
    int truth = y[r];
    int hat = pred[static_cast<Index>(i)] - 1;
    y_true[static_cast<Index>(i)] = truth;
    y_pred01[static_cast<Index>(i)] = hat;
    groups[static_cast<Index>(i)] = dataset.groups[r];
    bool ok = truth == hat;
    correct += ok;
    ++group_n[static_cast<std::size_t>(dataset.groups[r] - 1)];
    group_correct[static_cast<std::size_t>(dataset.groups[r] - 1)] += ok;
  }
  out.accuracy = static_cast<double>(correct) / static_cast<double>(test_rows.size());
  out.group_accuracy.resize(static_cast<std::size_t>(dataset.k), 0.0);
  for (int g = 0; g < dataset.k; ++g) {
    if (group_n[static_cast<std::size_t>(g)] > 0) {
      out.group_accuracy[static_cast<std::size_t>(g)] =
          static_cast<double>(group_correct[static_cast<std::size_t>(g)]) /
          static_cast<double>(group_n[static_cast<std::size_t>(g)]);
    }
  }
  out.gaps = metrics::fairness_gaps(y_true, y_pred01, groups);
  return out;
}

std::map<std::string, double> evaluate_model(
    const mapping::MappingEnsemble& ensemble, const EncodedMatrix& eval_encoded,
    const SweepOptions& options, std::uint64_t seed,
    const std::vector<std::shared_ptr<const classifiers::Classifier>>* pc_cache) {
  const Matrix& x = eval_encoded.values;
  const IntVector& groups = eval_encoded.groups;
  int k = ensemble.k;
  // Metrics are computed on the materialised transformed dataset: the raw
  // generator output is decoded to a table and re-encoded, exactly what the
  // pipeline delivers (one-hot blocks and the decision column snap to valid
  // values; numeric columns round-trip unchanged).
  EncodedMatrix mapped_enc = mapping::transform(ensemble.generator, eval_encoded);
  Matrix mapped =
      ensemble.encoder.encode(ensemble.encoder.decode(mapped_enc)).values;

  std::vector<Index> priv_rows, prot_rows;
  for (Index r = 0; r < groups.size(); ++r) {
    (groups[r] == Dataset::kPrivilegedIndex ? priv_rows : prot_rows).push_back(r);
  }
  auto slice = [](const Matrix& m, const std::vector<Index>& rows) {
    Matrix out(static_cast<Index>(rows.size()), m.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      out.row(static_cast<Index>(i)) = m.row(rows[i]);
    }
    return out;
  };
  Matrix x_priv = slice(x, priv_rows);
  Matrix x_prot = slice(x, prot_rows);
  Matrix mapped_priv = slice(mapped, priv_rows);
  Matrix mapped_prot = slice(mapped, prot_rows);
  IntVector prot_groups(static_cast<Index>(prot_rows.size()));
  for (std::size_t i = 0; i < prot_rows.size(); ++i) {
    prot_groups[static_cast<Index>(i)] = groups[prot_rows[i]];
  }

  std::map<std::string, double> out;
  out["Fid_all"] = metrics::fidelity(x, mapped);
  out["Fid_priv"] = metrics::fidelity(x_priv, mapped_priv);
  out["Fid_prot"] = metrics::fidelity(x_prot, mapped_prot);

  Rng rng(seed);
  metrics::ProtectionReport rc = metrics::protection_report(
      options.protection_classifiers, mapped_priv, mapped_prot, prot_groups, k,
      metrics::Variant::RcPrv, rng.substream("protection.rc").state());
  metrics::ProtectionReport og = metrics::protection_report(
      options.protection_classifiers, x_priv, mapped_prot, prot_groups, k,
      metrics::Variant::OgPrv, rng.substream("protection.og").state());
  out["BER_rc_prv"] = rc.ber;
  out["SAcc_rc_prv"] = rc.sacc;
  out["MI_rc_prv"] = rc.mi;
  out["BER_og_prv"] = og.ber;
  out["SAcc_og_prv"] = og.sacc;
  out["MI_og_prv"] = og.mi;

  // Transformation: classifiers trained on the original data; the reported
  // value is the worst (highest) over the set.
  double pc_prot = 0.0;
  double pc_all = 0.0;
  auto score_pc = [&](const classifiers::Classifier& clf) {
    pc_prot = std::max(pc_prot, metrics::classification_pc(clf, mapped_prot));
    pc_all = std::max(pc_all, metrics::classification_pc(clf, mapped));
  };
  if (pc_cache != nullptr && !pc_cache->empty()) {
    for (const auto& clf : *pc_cache) score_pc(*clf);
  } else {
    for (classifiers::Kind kind : options.protection_classifiers) {
      auto clf = classifiers::make_classifier(kind);
      clf->fit(x, groups, rng.substream("pc", static_cast<std::uint64_t>(kind)).state());
      score_pc(*clf);
    }
  }
  out["Pc_prot"] = pc_prot;
  out["Pc_all"] = pc_all;

  out["diversity_all"] = metrics::diversity(mapped);
  out["diversity_priv"] = metrics::diversity(mapped_priv);
  out["diversity_prot"] = metrics::diversity(mapped_prot);
  out["diversity_baseline"] = metrics::diversity(x);

  if (options.compute_divergences) {
    sinkhorn::SinkhornConfig cfg = options.sinkhorn;
    out["div_prot_mapped"] = sinkhorn::sinkhorn_divergence(x_prot, mapped_prot, cfg).value;
    out["div_recpriv_mapped"] =
        sinkhorn::sinkhorn_divergence(mapped_priv, mapped_prot, cfg).value;
    out["div_origpriv_mapped"] =
        sinkhorn::sinkhorn_divergence(x_priv, mapped_prot, cfg).value;
  }
  return out;
}

mapping::TrainConfig trial_config(const SweepOptions& options, int trial) {
  mapping::TrainConfig cfg = options.base;
  Rng root(options.seed);
  Rng lambda_rng = root.substream("sweep.lambda", static_cast<std::uint64_t>(trial));
  cfg.seed = root.substream("sweep.trial", static_cast<std::uint64_t>(trial)).state();

  auto sample = [&] { return lambda_rng.log_uniform(options.lambda_lo, options.lambda_hi); };
  mapping::LossWeights w = cfg.weights;
  switch (cfg.mode) {
    case mapping::Mode::FairMapping:
    case mapping::Mode::AttGan:
      w.lambda_rec = sample();
      w.lambda_c = sample();
      w.lambda_gan = sample();
      w.lambda_d = sample();
      break;
    case mapping::Mode::Wgan:
      w.lambda_rec = w.lambda_c = w.lambda_d = 0.0;
      w.lambda_gan = sample();
      break;
    case mapping::Mode::GanSan:
    case mapping::Mode::GanSanOm:
      w.lambda_c = w.lambda_gan = 0.0;
      w.lambda_rec = sample();
      w.lambda_d = sample();
      break;
  }
  cfg.weights = w;
  return cfg;
}

SweepData prepare_sweep_data(const Dataset& dataset, const SweepOptions& options) {
  Rng root(options.seed);
  // Stratified hold-out split for metric evaluation.
  Rng split_rng = root.substream("sweep.split");
  std::vector<Index> train_rows, eval_rows;
  for (int g = 1; g <= dataset.k; ++g) {
    std::vector<Index> rows = dataset.rows_of_group(g);
    split_rng.shuffle(rows);
    std::size_t n_eval =
        static_cast<std::size_t>(options.eval_fraction * static_cast<double>(rows.size()));
    n_eval = std::clamp<std::size_t>(n_eval, 1, rows.size() - 1);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      (i < n_eval ? eval_rows : train_rows).push_back(rows[i]);
    }
  }
  std::sort(train_rows.begin(), train_rows.end());
  std::sort(eval_rows.begin(), eval_rows.end());

  SweepData data;
  data.encoder.fit(dataset, train_rows);
  EncodedMatrix all = data.encoder.encode(dataset);
  data.train_encoded = all.take_rows(train_rows);
  data.eval_encoded = all.take_rows(eval_rows);
  // Transformation-metric classifiers depend only on the original data:
  // fitted once here and shared read-only across trials.
  Rng pc_rng = root.substream("sweep.pc");
  for (classifiers::Kind kind : options.protection_classifiers) {
    auto clf = classifiers::make_classifier(kind);
    clf->fit(data.eval_encoded.values, data.eval_encoded.groups,
             pc_rng.substream(classifiers::kind_name(kind)).state());
    data.pc_classifiers.emplace_back(std::move(clf));
  }
  return data;
}

TrialResult run_trial(const SweepData& data, const SweepOptions& options, int trial) {
  TrialResult res;
  res.trial = trial;
  try {
    mapping::TrainConfig cfg = trial_config(options, trial);
    mapping::MappingEnsemble ens = mapping::train(data.train_encoded, data.encoder, cfg);
    res.point.model_id = trial;
    res.point.hyperparams = {{"lambda_rec", cfg.weights.lambda_rec},
                             {"lambda_c", cfg.weights.lambda_c},
                             {"lambda_gan", cfg.weights.lambda_gan},
                             {"lambda_d", cfg.weights.lambda_d},
                             {"lambda_d_mi", cfg.weights.lambda_d_mi},
                             {"lambda_g_mi", cfg.weights.lambda_g_mi},
                             {"epochs", static_cast<double>(cfg.epochs)},
                             {"seed", static_cast<double>(cfg.seed)}};
    res.point.metrics = evaluate_model(
        ens, data.eval_encoded, options,
        Rng(options.seed).substream("sweep.eval", static_cast<std::uint64_t>(trial)).state(),
        &data.pc_classifiers);
  } catch (const std::exception& e) {
    res.failed = true;
    res.error = e.what();
  }
  return res;
}

std::vector<TrialResult> sweep(const Dataset& dataset, const SweepOptions& options) {
  SweepData data = prepare_sweep_data(dataset, options);
  std::vector<TrialResult> results(static_cast<std::size_t>(options.budget));
  std::atomic<int> next{0};
  auto worker = [&] {
    while (true) {
      int trial = next.fetch_add(1);
      if (trial >= options.budget) break;
      results[static_cast<std::size_t>(trial)] = run_trial(data, options, trial);
    }
  };
  int n_workers = std::max(1, options.workers);
  if (n_workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < n_workers; ++t) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
  }
  return results;
}

std::vector<CrossvalRow> crossval(const Dataset& dataset, const mapping::TrainConfig& config,
                                  const SweepOptions& options, int n_folds) {
  FoldPlan plan = split_kfold(dataset, n_folds, Rng(config.seed).substream("crossval").state());
  static const std::vector<std::string> kRows = {
      "BER_rc_prv", "BER_og_prv", "SAcc_rc_prv", "SAcc_og_prv",
      "MI_rc_prv",  "MI_og_prv",  "Pc_prot",     "Fid_priv"};
  std::map<std::string, std::vector<double>> per_metric;
  for (int fold = 0; fold < n_folds; ++fold) {
    std::vector<Index> train_rows = plan.complement_rows(fold);
    std::vector<Index> test_rows = plan.fold_rows(fold);
    Encoder encoder;
    encoder.fit(dataset, train_rows);
    EncodedMatrix all = encoder.encode(dataset);
    mapping::TrainConfig cfg = config;
    cfg.seed = Rng(config.seed).substream("crossval.fold", static_cast<std::uint64_t>(fold)).state();
    mapping::MappingEnsemble ens = mapping::train(all.take_rows(train_rows), encoder, cfg);
    SweepOptions eval_opts = options;
    eval_opts.compute_divergences = false;
    std::map<std::string, double> m = evaluate_model(
        ens, all.take_rows(test_rows), eval_opts,
        Rng(config.seed).substream("crossval.eval", static_cast<std::uint64_t>(fold)).state());
    for (const std::string& name : kRows) per_metric[name].push_back(m.at(name));
  }
  std::vector<CrossvalRow> out;
  for (const std::string& name : kRows) out.push_back(summarize_folds(name, per_metric[name]));
  return out;
}

void write_crossval_csv(const std::string& path, const std::vector<CrossvalRow>& rows) {
  std::vector<csv::Row> out;
  std::size_t n_folds = rows.empty() ? 0 : rows.front().per_fold.size();
  csv::Row header{"metric", "mean", "std"};
  for (std::size_t f = 0; f < n_folds; ++f) header.push_back("fold_" + std::to_string(f));
  out.push_back(header);
  char buf[40];
  auto fmt = [&buf](double v) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return std::string(buf);
  };
  for (const CrossvalRow& r : rows) {
    csv::Row row{r.metric, fmt(r.mean), fmt(r.stddev)};
    for (double v : r.per_fold) row.push_back(fmt(v));
    out.push_back(row);
  }
  csv::write_file(path, out);
}

CrossvalRow summarize_folds(const std::string& metric, const std::vector<double>& per_fold) {
  CrossvalRow row;
  row.metric = metric;
  row.per_fold = per_fold;
  double sum = std::accumulate(per_fold.begin(), per_fold.end(), 0.0);
  row.mean = sum / static_cast<double>(per_fold.size());
  double ss = 0.0;
  for (double v : per_fold) ss += (v - row.mean) * (v - row.mean);
  row.stddev = per_fold.size() > 1
                   ? std::sqrt(ss / static_cast<double>(per_fold.size() - 1))
                   : 0.0;
  return row;
}

}  // namespace fairmap::eval
