#include "fairmap/classifiers.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "fairmap/nn.hpp"
#include "json.hpp"

namespace fairmap::classifiers {

namespace {

double stable_sigmoid(double z) {
  return z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
}

int count_classes(const IntVector& y) {
  int k = 0;
  for (Index i = 0; i < y.size(); ++i) k = std::max(k, y[i]);
  std::vector<bool> seen(static_cast<std::size_t>(k), false);
  for (Index i = 0; i < y.size(); ++i) seen[static_cast<std::size_t>(y[i] - 1)] = true;
  int present = 0;
  for (bool s : seen) present += s;
  if (present < 2) throw SingleClass("fit: fewer than two classes present");
  return k;
}

// ---- CART trees -------------------------------------------------------

struct TreeNode {
  int feature = -1;
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  Vector leaf;  // class distribution (classification) or scalar (regression)
};

int descend(const std::vector<TreeNode>& nodes, const Eigen::RowVectorXd& x) {
  int node = 0;
  while (nodes[static_cast<std::size_t>(node)].feature >= 0) {
    const TreeNode& nd = nodes[static_cast<std::size_t>(node)];
    node = x[nd.feature] <= nd.threshold ? nd.left : nd.right;
  }
  return node;
}

struct SplitChoice {
  int feature = -1;
  double threshold = 0.0;
  double score = std::numeric_limits<double>::infinity();
};

// Weighted gini impurity of the best axis split; deterministic: features in
// order, first strict improvement wins.
SplitChoice best_gini_split(const Matrix& x, const IntVector& y, int k,
                            const std::vector<Index>& rows) {
  SplitChoice best;
  Index n = static_cast<Index>(rows.size());
  for (int f = 0; f < x.cols(); ++f) {
    std::vector<std::pair<double, int>> vals;
    vals.reserve(rows.size());
    for (Index r : rows) vals.push_back({x(r, f), y[r]});
    std::sort(vals.begin(), vals.end());
    if (vals.front().first == vals.back().first) continue;
    Vector left = Vector::Zero(k);
    Vector right = Vector::Zero(k);
    for (const auto& [v, c] : vals) right[c - 1] += 1.0;
    for (Index i = 0; i + 1 < n; ++i) {
      int c = vals[static_cast<std::size_t>(i)].second - 1;
      left[c] += 1.0;
      right[c] -= 1.0;
      double v = vals[static_cast<std::size_t>(i)].first;
      double next = vals[static_cast<std::size_t>(i) + 1].first;
      if (v == next) continue;
      double nl = static_cast<double>(i + 1);
      double nr = static_cast<double>(n - i - 1);
      double gl = 1.0 - left.squaredNorm() / (nl * nl);
      double gr = 1.0 - right.squaredNorm() / (nr * nr);
      double score = (nl * gl + nr * gr) / static_cast<double>(n);
      if (score < best.score - 1e-12) {
        best = {f, 0.5 * (v + next), score};
      }
    }
  }
  return best;
}

int build_gini_tree(std::vector<TreeNode>& nodes, const Matrix& x, const IntVector& y,
                    int k, const std::vector<Index>& rows) {
  Vector counts = Vector::Zero(k);
  for (Index r : rows) counts[y[r] - 1] += 1.0;
  double n = static_cast<double>(rows.size());
  double gini = 1.0 - counts.squaredNorm() / (n * n);

  int id = static_cast<int>(nodes.size());
  nodes.push_back({});
  if (gini <= 0.0 || rows.size() < 2) {
    nodes[static_cast<std::size_t>(id)].leaf = counts / n;
    return id;
  }
  // Zero-gain splits are taken (axis splits solve XOR); recursion still
  // terminates because both children are non-empty.
  SplitChoice split = best_gini_split(x, y, k, rows);
  if (split.feature < 0 || split.score > gini + 1e-12) {
    nodes[static_cast<std::size_t>(id)].leaf = counts / n;
    return id;
  }
  std::vector<Index> lrows, rrows;
  for (Index r : rows) {
    (x(r, split.feature) <= split.threshold ? lrows : rrows).push_back(r);
  }
  nodes[static_cast<std::size_t>(id)].feature = split.feature;
  nodes[static_cast<std::size_t>(id)].threshold = split.threshold;
  int left = build_gini_tree(nodes, x, y, k, lrows);
  int right = build_gini_tree(nodes, x, y, k, rrows);
  nodes[static_cast<std::size_t>(id)].left = left;
  nodes[static_cast<std::size_t>(id)].right = right;
  return id;
}

// Least-squares regression tree on gradient residuals with Newton leaf
// values (sum residual / sum hessian), depth-limited.
int build_regression_tree(std::vector<TreeNode>& nodes, const Matrix& x,
                          const Vector& residual, const Vector& hessian,
                          const std::vector<Index>& rows, int depth) {
  int id = static_cast<int>(nodes.size());
  nodes.push_back({});
  auto make_leaf = [&] {
    double num = 0.0, den = 0.0;
    for (Index r : rows) {
      num += residual[r];
      den += hessian[r];
    }
    nodes[static_cast<std::size_t>(id)].leaf = Vector::Constant(1, num / std::max(den, 1e-12));
  };
  if (depth == 0 || rows.size() < 2) {
    make_leaf();
    return id;
  }
  double sum = 0.0;
  for (Index r : rows) sum += residual[r];
  double n = static_cast<double>(rows.size());
  double base = -sum * sum / n;

  int best_f = -1;
  double best_thr = 0.0;
  double best_obj = base;
  for (int f = 0; f < x.cols(); ++f) {
    std::vector<std::pair<double, double>> vals;
    vals.reserve(rows.size());
    for (Index r : rows) vals.push_back({x(r, f), residual[r]});
    std::sort(vals.begin(), vals.end());
    if (vals.front().first == vals.back().first) continue;
    double left_sum = 0.0;
    for (std::size_t i = 0; i + 1 < vals.size(); ++i) {
      left_sum += vals[i].second;
      if (vals[i].first == vals[i + 1].first) continue;
      double nl = static_cast<double>(i + 1);
      double nr = n - nl;
      double obj = -left_sum * left_sum / nl - (sum - left_sum) * (sum - left_sum) / nr;
      if (obj < best_obj - 1e-12) {
        best_obj = obj;
        best_f = f;
        best_thr = 0.5 * (vals[i].first + vals[i + 1].first);
      }
    }
  }
  if (best_f < 0) {
    make_leaf();
    return id;
  }
  std::vector<Index> lrows, rrows;
  for (Index r : rows) (x(r, best_f) <= best_thr ? lrows : rrows).push_back(r);
  nodes[static_cast<std::size_t>(id)].feature = best_f;
  nodes[static_cast<std::size_t>(id)].threshold = best_thr;
  int left = build_regression_tree(nodes, x, residual, hessian, lrows, depth - 1);
  int right = build_regression_tree(nodes, x, residual, hessian, rrows, depth - 1);
  nodes[static_cast<std::size_t>(id)].left = left;
  nodes[static_cast<std::size_t>(id)].right = right;
  return id;
}

nlohmann::json nodes_to_json(const std::vector<TreeNode>& nodes) {
  nlohmann::json out = nlohmann::json::array();
  for (const TreeNode& nd : nodes) {
    nlohmann::json nj;
    nj["feature"] = nd.feature;
    nj["threshold"] = nd.threshold;
    nj["left"] = nd.left;
    nj["right"] = nd.right;
    nj["leaf"] = std::vector<double>(nd.leaf.data(), nd.leaf.data() + nd.leaf.size());
    out.push_back(nj);
  }
  return out;
}

std::vector<TreeNode> nodes_from_json(const nlohmann::json& j) {
  std::vector<TreeNode> nodes;
  for (const auto& nj : j) {
    TreeNode nd;
    nd.feature = nj.at("feature").get<int>();
    nd.threshold = nj.at("threshold").get<double>();
    nd.left = nj.at("left").get<int>();
    nd.right = nj.at("right").get<int>();
    std::vector<double> leaf = nj.at("leaf").get<std::vector<double>>();
    nd.leaf = Eigen::Map<Vector>(leaf.data(), static_cast<Index>(leaf.size()));
    nodes.push_back(nd);
  }
  return nodes;
}

// ---- Concrete classifiers ---------------------------------------------

class DecisionTree final : public Classifier {
 public:
  void fit(const Matrix& x, const IntVector& y, std::uint64_t) override {
    k_ = count_classes(y);
    nodes_.clear();
    std::vector<Index> rows(static_cast<std::size_t>(x.rows()));
    std::iota(rows.begin(), rows.end(), Index{0});
    build_gini_tree(nodes_, x, y, k_, rows);
  }

  Matrix predict_proba(const Matrix& x) const override {
    require_fitted();
    Matrix out(x.rows(), k_);
    for (Index r = 0; r < x.rows(); ++r) {
      out.row(r) = nodes_[static_cast<std::size_t>(descend(nodes_, x.row(r)))].leaf;
    }
    return out;
  }

  Kind kind() const override { return Kind::DTree; }

  void save(const std::string& stem) const override {
    nlohmann::json j{{"kind", "dtree"}, {"k", k_}, {"nodes", nodes_to_json(nodes_)}};
    std::ofstream out(stem + ".json");
    out << j.dump() << "\n";
  }

  void restore(const nlohmann::json& j) {
    k_ = j.at("k").get<int>();
    nodes_ = nodes_from_json(j.at("nodes"));
  }

 private:
  std::vector<TreeNode> nodes_;
};

// One-vs-rest gradient boosting: 100 depth-3 regression trees per class on
// the binary log-loss, learning rate 0.1.
class GradientBoosting final : public Classifier {
 public:
  static constexpr int kRounds = 100;
  static constexpr int kDepth = 3;
  static constexpr double kLearningRate = 0.1;

  void fit(const Matrix& x, const IntVector& y, std::uint64_t) override {
    k_ = count_classes(y);
    Index n = x.rows();
    machines_.assign(static_cast<std::size_t>(k_), {});
    diagnostics_.staged_train_logloss.assign(kRounds, 0.0);

    std::vector<Index> all(static_cast<std::size_t>(n));
    std::iota(all.begin(), all.end(), Index{0});
    Matrix scores(n, k_);
    for (int c = 0; c < k_; ++c) {
      double pos = 0.0;
      for (Index r = 0; r < n; ++r) pos += y[r] == c + 1 ? 1.0 : 0.0;
      double p = std::clamp(pos / static_cast<double>(n), 1e-6, 1.0 - 1e-6);
      machines_[static_cast<std::size_t>(c)].prior = std::log(p / (1.0 - p));
      scores.col(c).setConstant(machines_[static_cast<std::size_t>(c)].prior);
    }
    for (int round = 0; round < kRounds; ++round) {
      for (int c = 0; c < k_; ++c) {
        Vector residual(n), hessian(n);
        for (Index r = 0; r < n; ++r) {
          double target = y[r] == c + 1 ? 1.0 : 0.0;
          double p = stable_sigmoid(scores(r, c));
          residual[r] = target - p;
          hessian[r] = std::max(p * (1.0 - p), 1e-12);
        }
        std::vector<TreeNode> tree;
        build_regression_tree(tree, x, residual, hessian, all, kDepth);
        for (Index r = 0; r < n; ++r) {
          scores(r, c) += kLearningRate *
                          tree[static_cast<std::size_t>(descend(tree, x.row(r)))].leaf[0];
        }
        machines_[static_cast<std::size_t>(c)].trees.push_back(std::move(tree));
      }
      double loss = 0.0;
      for (int c = 0; c < k_; ++c) {
        for (Index r = 0; r < n; ++r) {
          double target = y[r] == c + 1 ? 1.0 : 0.0;
          double p = std::clamp(stable_sigmoid(scores(r, c)), 1e-12, 1.0 - 1e-12);
          loss -= target * std::log(p) + (1.0 - target) * std::log(1.0 - p);
        }
      }
      diagnostics_.staged_train_logloss[static_cast<std::size_t>(round)] =
          loss / static_cast<double>(n);
    }
  }

  Matrix predict_proba(const Matrix& x) const override {
    require_fitted();
    Matrix out(x.rows(), k_);
    for (Index r = 0; r < x.rows(); ++r) {
      double total = 0.0;
      for (int c = 0; c < k_; ++c) {
        const auto& m = machines_[static_cast<std::size_t>(c)];
        double f = m.prior;
        for (const auto& tree : m.trees) {
          f += kLearningRate * tree[static_cast<std::size_t>(descend(tree, x.row(r)))].leaf[0];
        }
        out(r, c) = stable_sigmoid(f);
        total += out(r, c);
      }
      if (total > 0.0) out.row(r) /= total;
      else out.row(r).setConstant(1.0 / k_);
    }
    return out;
  }

  Kind kind() const override { return Kind::Gbc; }

  void save(const std::string& stem) const override {
    nlohmann::json mj = nlohmann::json::array();
    for (const auto& m : machines_) {
      nlohmann::json trees = nlohmann::json::array();
      for (const auto& t : m.trees) trees.push_back(nodes_to_json(t));
      mj.push_back({{"prior", m.prior}, {"trees", trees}});
    }
    nlohmann::json j{{"kind", "gbc"}, {"k", k_}, {"machines", mj}};
    std::ofstream out(stem + ".json");
    out << j.dump() << "\n";
  }

  void restore(const nlohmann::json& j) {
    k_ = j.at("k").get<int>();
    machines_.clear();
    for (const auto& mj : j.at("machines")) {
      Machine m;
      m.prior = mj.at("prior").get<double>();
      for (const auto& tj : mj.at("trees")) m.trees.push_back(nodes_from_json(tj));
      machines_.push_back(std::move(m));
    }
  }

  const GbcDiagnostics& diagnostics() const { return diagnostics_; }

 private:
  struct Machine {
    double prior = 0.0;
    std::vector<std::vector<TreeNode>> trees;
  };
  std::vector<Machine> machines_;
  GbcDiagnostics diagnostics_;
};

// One-vs-rest hinge loss via the projected stochastic subgradient method
// (damped step schedule, bias as an augmented regularised coordinate),
// probabilities through a per-class Platt link fitted on training margins.
class LinearSvm final : public Classifier {
 public:
  static constexpr double kLambda = 1e-3;
  static constexpr int kEpochs = 30;

  void fit(const Matrix& x, const IntVector& y, std::uint64_t seed) override {
    k_ = count_classes(y);
    Index n = x.rows();
    Index m = x.cols();
    w_ = Matrix::Zero(m, k_);
    b_ = Vector::Zero(k_);
    platt_a_ = Vector::Zero(k_);
    platt_b_ = Vector::Zero(k_);

    Rng rng(seed);
    double radius = 1.0 / std::sqrt(kLambda);
    double t0 = 1.0 / kLambda;  // damps the first steps
    for (int c = 0; c < k_; ++c) {
      Vector w = Vector::Zero(m + 1);  // bias rides as the last coordinate
      std::vector<Index> order(static_cast<std::size_t>(n));
      std::iota(order.begin(), order.end(), Index{0});
      long t = 0;
      for (int epoch = 0; epoch < kEpochs; ++epoch) {
        rng.shuffle(order);
        for (Index r : order) {
          ++t;
          double eta = 1.0 / (kLambda * (static_cast<double>(t) + t0));
          double label = y[r] == c + 1 ? 1.0 : -1.0;
          double margin = label * (x.row(r).dot(w.head(m)) + w[m]);
          w *= 1.0 - eta * kLambda;
          if (margin < 1.0) {
            w.head(m) += eta * label * x.row(r).transpose();
            w[m] += eta * label;
          }
          double norm = w.norm();
          if (norm > radius) w *= radius / norm;
        }
      }
      w_.col(c) = w.head(m);
      b_[c] = w[m];
      fit_platt(x, y, c);
    }
  }

  Matrix predict_proba(const Matrix& x) const override {
    require_fitted();
    Matrix out(x.rows(), k_);
    for (Index r = 0; r < x.rows(); ++r) {
      double total = 0.0;
      for (int c = 0; c < k_; ++c) {
        double margin = x.row(r).dot(w_.col(c)) + b_[c];
        out(r, c) = stable_sigmoid(platt_a_[c] * margin + platt_b_[c]);
        total += out(r, c);
      }
      if (total > 0.0) out.row(r) /= total;
      else out.row(r).setConstant(1.0 / k_);
    }
    return out;
  }

  Kind kind() const override { return Kind::SvmLinear; }

  void save(const std::string& stem) const override {
    nlohmann::json j;
    j["kind"] = "svm_linear";
    j["k"] = k_;
    j["bias"] = std::vector<double>(b_.data(), b_.data() + b_.size());
    j["platt_a"] = std::vector<double>(platt_a_.data(), platt_a_.data() + platt_a_.size());
    j["platt_b"] = std::vector<double>(platt_b_.data(), platt_b_.data() + platt_b_.size());
    nlohmann::json wj = nlohmann::json::array();
    for (int c = 0; c < k_; ++c) {
      wj.push_back(std::vector<double>(w_.col(c).data(), w_.col(c).data() + w_.rows()));
    }
    j["weights"] = wj;
    std::ofstream out(stem + ".json");
    out << j.dump() << "\n";
  }

  void restore(const nlohmann::json& j) {
    k_ = j.at("k").get<int>();
    std::vector<double> b = j.at("bias").get<std::vector<double>>();
    b_ = Eigen::Map<Vector>(b.data(), static_cast<Index>(b.size()));
    std::vector<double> pa = j.at("platt_a").get<std::vector<double>>();
    platt_a_ = Eigen::Map<Vector>(pa.data(), static_cast<Index>(pa.size()));
    std::vector<double> pb = j.at("platt_b").get<std::vector<double>>();
    platt_b_ = Eigen::Map<Vector>(pb.data(), static_cast<Index>(pb.size()));
    const auto& wj = j.at("weights");
    Index m = static_cast<Index>(wj[0].size());
    w_.resize(m, k_);
    for (int c = 0; c < k_; ++c) {
      std::vector<double> col = wj[static_cast<std::size_t>(c)].get<std::vector<double>>();
      w_.col(c) = Eigen::Map<Vector>(col.data(), m);
    }
  }

 private:
  // Newton iterations on the two-parameter sigmoid with Platt's smoothed
  // targets.
  void fit_platt(const Matrix& x, const IntVector& y, int c) {
    Index n = x.rows();
    Vector margins(n);
    for (Index r = 0; r < n; ++r) margins[r] = x.row(r).dot(w_.col(c)) + b_[c];
    double n_pos = 0.0;
    for (Index r = 0; r < n; ++r) n_pos += y[r] == c + 1 ? 1.0 : 0.0;
    double n_neg = static_cast<double>(n) - n_pos;
    double t_pos = (n_pos + 1.0) / (n_pos + 2.0);
    double t_neg = 1.0 / (n_neg + 2.0);

    double a = 1.0;
    double bb = std::log((n_neg + 1.0) / (n_pos + 1.0));
    for (int it = 0; it < 50; ++it) {
      double g_a = 0.0, g_b = 0.0, h_aa = 1e-12, h_ab = 0.0, h_bb = 1e-12;
      for (Index r = 0; r < n; ++r) {
        double t = y[r] == c + 1 ? t_pos : t_neg;
        double p = stable_sigmoid(a * margins[r] + bb);
        double d = p - t;
        double wgt = std::max(p * (1.0 - p), 1e-12);
        g_a += d * margins[r];
        g_b += d;
        h_aa += wgt * margins[r] * margins[r];
        h_ab += wgt * margins[r];
        h_bb += wgt;
      }
      double det = h_aa * h_bb - h_ab * h_ab;
      if (std::abs(det) < 1e-18) break;
      double da = (h_bb * g_a - h_ab * g_b) / det;
      double db = (h_aa * g_b - h_ab * g_a) / det;
      a -= da;
      bb -= db;
      if (std::abs(da) + std::abs(db) < 1e-10) break;
    }
    platt_a_[c] = a;
    platt_b_[c] = bb;
  }

  Matrix w_;
  Vector b_, platt_a_, platt_b_;
};

// Softmax regression by full-batch gradient descent.
class Logistic final : public Classifier {
 public:
  static constexpr int kMaxIters = 2000;
  static constexpr double kLearningRate = 0.5;

  void fit(const Matrix& x, const IntVector& y, std::uint64_t seed) override {
    k_ = count_classes(y);
    Rng rng(seed);
    net_ = nn::make_net(x.cols(), {{static_cast<Index>(k_), nn::Activation::Softmax}}, rng);
    nn::OptimizerState opt =
        nn::make_optimizer(net_, nn::OptimizerState::Kind::Sgd, kLearningRate);
    Index n = x.rows();
    for (int it = 0; it < kMaxIters; ++it) {
      nn::ForwardTrace trace = nn::forward_trace(net_, x);
      // Cross-entropy gradient at the softmax output.
      Matrix d = Matrix::Zero(n, k_);
      const Matrix& p = trace.final();
      for (Index r = 0; r < n; ++r) {
        d(r, y[r] - 1) = -1.0 / (std::max(p(r, y[r] - 1), 1e-12) * static_cast<double>(n));
      }
      nn::BackwardResult back = nn::backward(net_, trace, d);
      if (back.grads.max_abs() < 1e-7) break;
      nn::step(net_, back.grads, opt);
    }
  }

  Matrix predict_proba(const Matrix& x) const override {
    require_fitted();
    return nn::forward(net_, x);
  }

  Kind kind() const override { return Kind::Logistic; }

  void save(const std::string& stem) const override {
    nn::save_checkpoint(net_, stem + ".net.json");
    nlohmann::json j{{"kind", "logistic"}, {"k", k_}, {"net", stem + ".net.json"}};
    std::ofstream out(stem + ".json");
    out << j.dump() << "\n";
  }

  void restore(const nlohmann::json& j, const std::string& stem) {
    k_ = j.at("k").get<int>();
    net_ = nn::load_checkpoint(stem + ".net.json");
  }

 private:
  nn::DenseNet net_;
};

// One hidden layer of width 100, relu, adaptive-moment minibatch training.
class Mlp final : public Classifier {
 public:
  static constexpr Index kHidden = 100;
  static constexpr int kMaxEpochs = 200;
  static constexpr Index kBatch = 32;

  void fit(const Matrix& x, const IntVector& y, std::uint64_t seed) override {
    k_ = count_classes(y);
    Rng root(seed);
    Rng init = root.substream("mlp.init");
    net_ = nn::make_net(x.cols(),
                        {{kHidden, nn::Activation::Relu},
                         {static_cast<Index>(k_), nn::Activation::Softmax}},
                        init);
    nn::OptimizerState opt = nn::make_optimizer(net_, nn::OptimizerState::Kind::Adam, 1e-3);
    Rng shuffle_rng = root.substream("mlp.batch");
    Index n = x.rows();
    Index nb = std::min<Index>(kBatch, n);
    double best = std::numeric_limits<double>::infinity();
    int stale = 0;
    for (int epoch = 0; epoch < kMaxEpochs; ++epoch) {
      std::vector<Index> order(static_cast<std::size_t>(n));
      std::iota(order.begin(), order.end(), Index{0});
      shuffle_rng.shuffle(order);
      double epoch_loss = 0.0;
      Index batches = 0;
      for (Index start = 0; start < n; start += nb) {
        Index len = std::min(nb, n - start);
        Matrix xb(len, x.cols());
        IntVector yb(len);
        for (Index i = 0; i < len; ++i) {
          xb.row(i) = x.row(order[static_cast<std::size_t>(start + i)]);
          yb[i] = y[order[static_cast<std::size_t>(start + i)]];
        }
        nn::ForwardTrace trace = nn::forward_trace(net_, xb);
        const Matrix& p = trace.final();
        Matrix d = Matrix::Zero(len, k_);
        double loss = 0.0;
        for (Index r = 0; r < len; ++r) {
          double pr = std::max(p(r, yb[r] - 1), 1e-12);
          loss -= std::log(pr) / static_cast<double>(len);
          d(r, yb[r] - 1) = -1.0 / (pr * static_cast<double>(len));
        }
        nn::step(net_, nn::backward(net_, trace, d).grads, opt);
        epoch_loss += loss;
        ++batches;
      }
      epoch_loss /= static_cast<double>(batches);
      if (epoch_loss < best - 1e-5) {
        best = epoch_loss;
        stale = 0;
      } else if (++stale >= 10) {
        break;
      }
    }
  }

  Matrix predict_proba(const Matrix& x) const override {
    require_fitted();
    return nn::forward(net_, x);
  }

  Kind kind() const override { return Kind::Mlp; }

  void save(const std::string& stem) const override {
    nn::save_checkpoint(net_, stem + ".net.json");
    nlohmann::json j{{"kind", "mlp"}, {"k", k_}, {"net", stem + ".net.json"}};
    std::ofstream out(stem + ".json");
    out << j.dump() << "\n";
  }

  void restore(const nlohmann::json& j, const std::string& stem) {
    k_ = j.at("k").get<int>();
    net_ = nn::load_checkpoint(stem + ".net.json");
  }

 private:
  nn::DenseNet net_;
};

}  // namespace

const char* kind_name(Kind k) {
  switch (k) {
    case Kind::Gbc: return "gbc";
    case Kind::SvmLinear: return "svm_linear";
    case Kind::DTree: return "dtree";
    case Kind::Logistic: return "logistic";
    case Kind::Mlp: return "mlp";
  }
  return "gbc";
}

Kind kind_from_name(const std::string& name) {
  if (name == "gbc") return Kind::Gbc;
  if (name == "svm_linear") return Kind::SvmLinear;
  if (name == "dtree") return Kind::DTree;
  if (name == "logistic") return Kind::Logistic;
  if (name == "mlp") return Kind::Mlp;
  throw std::invalid_argument("unknown classifier kind '" + name + "'");
}

IntVector Classifier::predict(const Matrix& x) const {
  Matrix p = predict_proba(x);
  IntVector out(p.rows());
  for (Index r = 0; r < p.rows(); ++r) {
    int best = 0;
    for (int c = 1; c < p.cols(); ++c) {
      if (p(r, c) > p(r, best)) best = c;
    }
    out[r] = best + 1;
  }
  return out;
}

std::unique_ptr<Classifier> make_classifier(Kind kind) {
  switch (kind) {
    case Kind::Gbc: return std::make_unique<GradientBoosting>();
    case Kind::SvmLinear: return std::make_unique<LinearSvm>();
    case Kind::DTree: return std::make_unique<DecisionTree>();
    case Kind::Logistic: return std::make_unique<Logistic>();
    case Kind::Mlp: return std::make_unique<Mlp>();
  }
  throw std::invalid_argument("unknown classifier kind");
}

std::unique_ptr<Classifier> load_classifier(const std::string& stem) {
  std::ifstream in(stem + ".json");
  if (!in) throw std::runtime_error("cannot open " + stem + ".json");
  nlohmann::json j = nlohmann::json::parse(in);
  std::string kind = j.at("kind").get<std::string>();
  if (kind == "dtree") {
    auto c = std::make_unique<DecisionTree>();
    c->restore(j);
    return c;
  }
  if (kind == "gbc") {
    auto c = std::make_unique<GradientBoosting>();
    c->restore(j);
    return c;
  }
  if (kind == "svm_linear") {
    auto c = std::make_unique<LinearSvm>();
    c->restore(j);
    return c;
  }
  if (kind == "logistic") {
    auto c = std::make_unique<Logistic>();
    c->restore(j, stem);
    return c;
  }
  if (kind == "mlp") {
    auto c = std::make_unique<Mlp>();
    c->restore(j, stem);
    return c;
  }
  throw std::runtime_error("unknown classifier kind '" + kind + "' in " + stem);
}

const GbcDiagnostics& gbc_diagnostics(const Classifier& clf) {
  return dynamic_cast<const GradientBoosting&>(clf).diagnostics();
}

}  // namespace fairmap::classifiers
