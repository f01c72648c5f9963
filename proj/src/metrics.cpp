#include "fairmap/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "fairmap/csv.hpp"
#include "fairmap/nn.hpp"
#include "fairmap/rng.hpp"

namespace fairmap::metrics {

namespace {

std::vector<Index> scoped_rows(const IntVector& groups, Scope scope) {
  std::vector<Index> rows;
  for (Index r = 0; r < groups.size(); ++r) {
    bool priv = groups[r] == Dataset::kPrivilegedIndex;
    if (scope == Scope::All || (scope == Scope::Priv && priv) ||
        (scope == Scope::Prot && !priv)) {
      rows.push_back(r);
    }
  }
  return rows;
}

}  // namespace

const char* scope_name(Scope s) {
  switch (s) {
    case Scope::All: return "all";
    case Scope::Priv: return "priv";
    case Scope::Prot: return "prot";
  }
  return "all";
}

const char* variant_name(Variant v) {
  return v == Variant::OgPrv ? "og_prv" : "rc_prv";
}

double ber(const Matrix& probs, const IntVector& labels, int k) {
  if (probs.rows() != labels.size() || probs.cols() != k) {
    throw std::invalid_argument("ber: shape mismatch");
  }
  Vector sums = Vector::Zero(k);
  Vector counts = Vector::Zero(k);
  for (Index r = 0; r < labels.size(); ++r) {
    sums[labels[r] - 1] += probs(r, labels[r] - 1);
    counts[labels[r] - 1] += 1.0;
  }
  double mean_correct = 0.0;
  for (int g = 0; g < k; ++g) {
    if (counts[g] == 0.0) {
      throw MissingGroup("ber: group " + std::to_string(g + 1) + " has no rows");
    }
    mean_correct += sums[g] / counts[g];
  }
  return 1.0 - mean_correct / k;
}

double ber(const IntVector& predictions, const IntVector& labels, int k) {
  Matrix probs = Matrix::Zero(labels.size(), k);
  for (Index r = 0; r < predictions.size(); ++r) probs(r, predictions[r] - 1) = 1.0;
  return ber(probs, labels, k);
}

std::pair<double, double> optimal_protection(int k, const Vector& group_proportions) {
  if (k < 2) throw std::invalid_argument("optimal_protection: k must be >= 2");
  if (group_proportions.size() != k) {
    throw std::invalid_argument("optimal_protection: proportions size mismatch");
  }
  return {static_cast<double>(k - 1) / k, group_proportions.maxCoeff()};
}

double sacc(const IntVector& predictions, const IntVector& labels) {
  if (predictions.size() != labels.size() || labels.size() == 0) {
    throw std::invalid_argument("sacc: shape mismatch");
  }
  Index correct = 0;
  for (Index r = 0; r < labels.size(); ++r) correct += predictions[r] == labels[r];
  return static_cast<double>(correct) / static_cast<double>(labels.size());
}

double mi_discrete(const IntVector& predictions, const IntVector& labels) {
  if (predictions.size() != labels.size() || labels.size() == 0) {
    throw std::invalid_argument("mi_discrete: shape mismatch");
  }
  int ka = labels.maxCoeff();
  int kb = predictions.maxCoeff();
  Matrix joint = Matrix::Zero(ka, kb);
  for (Index r = 0; r < labels.size(); ++r) {
    joint(labels[r] - 1, predictions[r] - 1) += 1.0;
  }
  joint /= static_cast<double>(labels.size());
  Vector pa = joint.rowwise().sum();
  Vector pb = joint.colwise().sum();
  double mi = 0.0;
  for (int i = 0; i < ka; ++i) {
    for (int j = 0; j < kb; ++j) {
      double p = joint(i, j);
      if (p <= 0.0) continue;
      mi += p * std::log(p / (pa[i] * pb[j]));
    }
  }
  return mi;
}

double fidelity(const Matrix& original, const Matrix& transformed) {
  if (original.rows() != transformed.rows() || original.cols() != transformed.cols()) {
    throw nn::ShapeMismatch("fidelity: shape mismatch");
  }
  if (original.size() == 0) return 1.0;
  return 1.0 - (original - transformed).array().square().mean();
}

double fidelity(const Matrix& original, const Matrix& transformed,
                const IntVector& groups, Scope scope) {
  std::vector<Index> rows = scoped_rows(groups, scope);
  Matrix a(static_cast<Index>(rows.size()), original.cols());
  Matrix b(static_cast<Index>(rows.size()), original.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    a.row(static_cast<Index>(i)) = original.row(rows[i]);
    b.row(static_cast<Index>(i)) = transformed.row(rows[i]);
  }
  return fidelity(a, b);
}

double classification_pc(const classifiers::Classifier& clf, const Matrix& transformed) {
  if (transformed.rows() == 0) return 0.0;
  IntVector pred = clf.predict(transformed);
  Index hits = 0;
  for (Index r = 0; r < pred.size(); ++r) hits += pred[r] == Dataset::kPrivilegedIndex;
  return static_cast<double>(hits) / static_cast<double>(pred.size());
}

double classification_pc(const classifiers::Classifier& clf, const Matrix& transformed,
                         const IntVector& groups, Scope scope) {
  std::vector<Index> rows = scoped_rows(groups, scope);
  Matrix sub(static_cast<Index>(rows.size()), transformed.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    sub.row(static_cast<Index>(i)) = transformed.row(rows[i]);
  }
  return classification_pc(clf, sub);
}

double diversity(const Matrix& x) {
  Index n = x.rows();
  if (n < 2) return 0.0;
  double total = 0.0;
  for (Index i = 0; i < n; ++i) {
    for (Index j = i + 1; j < n; ++j) {
      total += (x.row(i) - x.row(j)).norm();
    }
  }
  // Ordered pairs: each unordered pair counts twice.
  double d = static_cast<double>(x.cols());
  return 2.0 * total /
         (static_cast<double>(n) * static_cast<double>(n - 1) * std::sqrt(d));
}

CategoricalDamage categorical_damage(const Dataset& original, const Dataset& transformed,
                                     Scope scope) {
  if (original.rows() != transformed.rows()) {
    throw nn::ShapeMismatch("categorical_damage: row count mismatch");
  }
  std::vector<Index> rows = scoped_rows(original.groups, scope);
  CategoricalDamage out;
  std::vector<double> rates;
  for (std::size_t a = 0; a < original.schema.size(); ++a) {
    const AttributeSpec& spec = original.schema[a];
    if (!spec.is_categorical() || spec.role != AttrRole::Other) continue;
    Index ta = transformed.attribute_index(spec.name);
    if (ta < 0) throw BlockShapeMismatch("categorical_damage: missing '" + spec.name + "'");
    Index changed = 0;
    for (Index r : rows) {
      if (original.columns[a].cat[static_cast<std::size_t>(r)] !=
          transformed.columns[static_cast<std::size_t>(ta)].cat[static_cast<std::size_t>(r)]) {
        ++changed;
      }
    }
    double rate = rows.empty() ? 0.0
                               : static_cast<double>(changed) / static_cast<double>(rows.size());
    out.per_column.push_back({spec.name, rate});
    rates.push_back(rate);
  }
  if (!rates.empty()) {
    std::sort(rates.begin(), rates.end());
    std::size_t mid = rates.size() / 2;
    out.median = rates.size() % 2 ? rates[mid] : 0.5 * (rates[mid - 1] + rates[mid]);
  }
  return out;
}

FairnessGaps fairness_gaps(const IntVector& y_true, const IntVector& y_pred,
                           const IntVector& groups) {
  if (y_true.size() != y_pred.size() || y_true.size() != groups.size()) {
    throw std::invalid_argument("fairness_gaps: shape mismatch");
  }
  int k = groups.maxCoeff();
  FairnessGaps out;
  out.per_group.resize(static_cast<std::size_t>(k));
  for (int g = 1; g <= k; ++g) {
    Index n = 0, pos_pred = 0, tp = 0, fp = 0, pos_true = 0, neg_true = 0;
    for (Index r = 0; r < groups.size(); ++r) {
      if (groups[r] != g) continue;
      ++n;
      pos_pred += y_pred[r] == 1;
      if (y_true[r] == 1) {
        ++pos_true;
        tp += y_pred[r] == 1;
      } else {
        ++neg_true;
        fp += y_pred[r] == 1;
      }
    }
    if (n == 0) throw MissingGroup("fairness_gaps: group " + std::to_string(g) + " empty");
    GroupRates& gr = out.per_group[static_cast<std::size_t>(g - 1)];
    gr.size = n;
    gr.pos_rate = static_cast<double>(pos_pred) / static_cast<double>(n);
    gr.tp_defined = pos_true > 0;
    gr.fp_defined = neg_true > 0;
    // Undefined rates are flagged rather than silently reported as zero.
    if (gr.tp_defined) gr.tp_rate = static_cast<double>(tp) / static_cast<double>(pos_true);
    if (gr.fp_defined) gr.fp_rate = static_cast<double>(fp) / static_cast<double>(neg_true);
    if (!gr.tp_defined || !gr.fp_defined) out.degenerate = true;
  }
  for (int a = 0; a < k; ++a) {
    for (int b = a + 1; b < k; ++b) {
      const GroupRates& ga = out.per_group[static_cast<std::size_t>(a)];
      const GroupRates& gb = out.per_group[static_cast<std::size_t>(b)];
      out.demo_parity = std::max(out.demo_parity, std::abs(ga.pos_rate - gb.pos_rate));
      if (ga.tp_defined && gb.tp_defined) {
        out.tp_gap = std::max(out.tp_gap, std::abs(ga.tp_rate - gb.tp_rate));
      }
      if (ga.fp_defined && gb.fp_defined) {
        out.fp_gap = std::max(out.fp_gap, std::abs(ga.fp_rate - gb.fp_rate));
      }
    }
  }
  return out;
}

std::vector<ReportRow> flatten(const ProtectionReport& report) {
  std::vector<ReportRow> rows;
  const char* variant = variant_name(report.variant);
  rows.push_back({"BER", "all", variant, report.ber, "worst_case"});
  rows.push_back({"SAcc", "all", variant, report.sacc, "worst_case"});
  rows.push_back({"MI", "all", variant, report.mi, "worst_case"});
  for (const ClassifierOutcome& o : report.per_classifier) {
    const char* name = classifiers::kind_name(o.kind);
    rows.push_back({"BER", "all", variant, o.ber, name});
    rows.push_back({"SAcc", "all", variant, o.sacc, name});
    rows.push_back({"MI", "all", variant, o.mi, name});
  }
  return rows;
}

void write_report_csv(const std::string& path, const std::vector<ReportRow>& rows) {
  std::vector<csv::Row> out;
  out.push_back({"metric", "scope", "variant", "value", "classifier"});
  char buf[40];
  for (const ReportRow& r : rows) {
    std::snprintf(buf, sizeof buf, "%.17g", r.value);
    out.push_back({r.metric, r.scope, r.variant, buf, r.classifier});
  }
  csv::write_file(path, out);
}

std::string report_rows_json(const std::vector<ReportRow>& rows) {
  std::string out = "[";
  char buf[40];
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (i) out += ",";
    std::snprintf(buf, sizeof buf, "%.17g", rows[i].value);
    out += "{\"metric\":\"" + rows[i].metric + "\",\"scope\":\"" + rows[i].scope +
           "\",\"variant\":\"" + rows[i].variant + "\",\"value\":" + buf +
           ",\"classifier\":\"" + rows[i].classifier + "\"}";
  }
  return out + "]";
}

ProtectionReport protection_report(const std::vector<classifiers::Kind>& kinds,
                                   const Matrix& priv_side, const Matrix& prot_side,
                                   const IntVector& prot_groups, int k, Variant variant,
                                   std::uint64_t seed) {
  Index n = priv_side.rows() + prot_side.rows();
  Matrix x(n, priv_side.cols());
  IntVector y(n);
  x.topRows(priv_side.rows()) = priv_side;
  x.bottomRows(prot_side.rows()) = prot_side;
  y.head(priv_side.rows()).setConstant(1);
  y.tail(prot_groups.size()) = prot_groups;

  // Stratified 70/30 train/eval split; a memorising classifier must not be
  // allowed to report BER 0 on its own training rows.
  Rng rng(seed);
  std::vector<Index> train_rows, eval_rows;
  for (int g = 1; g <= k; ++g) {
    std::vector<Index> rows;
    for (Index r = 0; r < n; ++r) {
      if (y[r] == g) rows.push_back(r);
    }
    rng.shuffle(rows);
    std::size_t n_train = (rows.size() * 7 + 9) / 10;
    n_train = std::min(n_train, rows.size() > 1 ? rows.size() - 1 : rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      (i < n_train ? train_rows : eval_rows).push_back(rows[i]);
    }
  }
  auto take = [&](const std::vector<Index>& rows, Matrix& xs, IntVector& ys) {
    xs.resize(static_cast<Index>(rows.size()), x.cols());
    ys.resize(static_cast<Index>(rows.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
      xs.row(static_cast<Index>(i)) = x.row(rows[i]);
      ys[static_cast<Index>(i)] = y[rows[i]];
    }
  };
  Matrix x_train, x_eval;
  IntVector y_train, y_eval;
  take(train_rows, x_train, y_train);
  take(eval_rows, x_eval, y_eval);

  ProtectionReport report;
  report.variant = variant;
  bool first = true;
  for (classifiers::Kind kind : kinds) {
    auto clf = classifiers::make_classifier(kind);
    clf->fit(x_train, y_train, rng.substream(classifiers::kind_name(kind)).state());
    Matrix probs = clf->predict_proba(x_eval);
    IntVector pred = clf->predict(x_eval);
    ClassifierOutcome outcome;
    outcome.kind = kind;
    outcome.ber = ber(probs, y_eval, k);
    outcome.sacc = sacc(pred, y_eval);
    outcome.mi = mi_discrete(pred, y_eval);
    report.per_classifier.push_back(outcome);
    if (first) {
      report.ber = outcome.ber;
      report.sacc = outcome.sacc;
      report.mi = outcome.mi;
      first = false;
    } else {
      report.ber = std::min(report.ber, outcome.ber);
      report.sacc = std::max(report.sacc, outcome.sacc);
      report.mi = std::max(report.mi, outcome.mi);
    }
  }
  return report;
}

}  // namespace fairmap::metrics
