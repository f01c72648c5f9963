#include "fairmap/mapping.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "json.hpp"

namespace fairmap::mapping {

namespace {
constexpr double kTiny = 1e-12;
}

const char* mode_name(Mode m) {
  switch (m) {
    case Mode::FairMapping: return "fairmapping";
    case Mode::Wgan: return "wgan";
    case Mode::AttGan: return "attgan";
    case Mode::GanSan: return "gansan";
    case Mode::GanSanOm: return "gansan_om";
  }
  return "fairmapping";
}

Mode mode_from_name(const std::string& name) {
  if (name == "fairmapping") return Mode::FairMapping;
  if (name == "wgan") return Mode::Wgan;
  if (name == "attgan") return Mode::AttGan;
  if (name == "gansan") return Mode::GanSan;
  if (name == "gansan_om") return Mode::GanSanOm;
  throw ModeConflict("unknown mode '" + name + "'");
}

const char* protection_name(ProtectionKind k) {
  return k == ProtectionKind::Ber ? "ber" : "acc";
}

ProtectionKind protection_from_name(const std::string& name) {
  if (name == "ber") return ProtectionKind::Ber;
  if (name == "acc") return ProtectionKind::Acc;
  throw ModeConflict("unknown protection loss '" + name + "'");
}

void LossWeights::validate() const {
  auto finite_nonneg = [](double v) { return std::isfinite(v) && v >= 0.0; };
  for (double v : {lambda_rec, lambda_c, lambda_gan, lambda_d, lambda_d_mi,
                   lambda_g_mi, lambda_dstd_gan}) {
    if (!finite_nonneg(v)) {
      throw std::invalid_argument("loss weights must be finite and >= 0");
    }
  }
}

void TrainConfig::validate(int k) const {
  weights.validate();
  if (epochs < 1 || batch_size < 2 || critic_steps < 1 || clip_c <= 0.0) {
    throw std::invalid_argument("invalid training configuration");
  }
  if (mode == Mode::Wgan &&
      (weights.lambda_rec != 0.0 || weights.lambda_c != 0.0 || weights.lambda_d != 0.0)) {
    throw ModeConflict("mode=wgan requires lambda_rec = lambda_c = lambda_d = 0");
  }
  if ((mode == Mode::GanSan || mode == Mode::GanSanOm) &&
      (weights.lambda_c != 0.0 || weights.lambda_gan != 0.0)) {
    throw ModeConflict("gansan modes require lambda_c = lambda_gan = 0");
  }
  if (protection_loss == ProtectionKind::Acc && k == 2 && !mi_enabled(k)) {
    // Accuracy 0 on a binary attribute is just a reversed prediction.
    throw ModeConflict("protection_loss=acc with k=2 requires use_mi=true");
  }
}

Matrix Discriminator::class_probs(const Matrix& batch) const {
  return nn::forward(class_head, nn::forward(trunk, batch));
}

Vector Discriminator::critic_scores(const Matrix& batch) const {
  return nn::forward(critic_head, nn::forward(trunk, batch)).col(0);
}

// ---- Pure loss kernels ----

double l1_reconstruction(const Matrix& original, const Matrix& mapped) {
  if (original.rows() != mapped.rows() || original.cols() != mapped.cols()) {
    throw nn::ShapeMismatch("l1_reconstruction: shape mismatch");
  }
  if (original.size() == 0) return 0.0;
  return (original - mapped).cwiseAbs().mean();
}

Matrix l1_reconstruction_grad(const Matrix& original, const Matrix& mapped) {
  double scale = 1.0 / static_cast<double>(original.size());
  return (mapped - original).unaryExpr([scale](double v) {
    return v > 0.0 ? scale : (v < 0.0 ? -scale : 0.0);
  });
}

namespace {

// Per-group mean of the correct-class probability; groups absent from the
// batch contribute zero.
Vector group_correct_means(const Matrix& probs, const IntVector& labels, int k) {
  Vector sums = Vector::Zero(k);
  Vector counts = Vector::Zero(k);
  for (Index r = 0; r < probs.rows(); ++r) {
    int g = labels[r];
    sums[g - 1] += probs(r, g - 1);
    counts[g - 1] += 1.0;
  }
  for (int g = 0; g < k; ++g) {
    if (counts[g] > 0) sums[g] /= counts[g];
  }
  return sums;
}

Vector group_counts(const IntVector& labels, int k) {
  Vector counts = Vector::Zero(k);
  for (Index r = 0; r < labels.size(); ++r) counts[labels[r] - 1] += 1.0;
  return counts;
}

}  // namespace

double discriminator_loss_value(const Matrix& probs, const IntVector& labels,
                                int k, ProtectionKind kind) {
  if (kind == ProtectionKind::Acc) {
    double correct = 0.0;
    for (Index r = 0; r < probs.rows(); ++r) correct += probs(r, labels[r] - 1);
    return 1.0 - correct / static_cast<double>(probs.rows());
  }
  return 1.0 - group_correct_means(probs, labels, k).sum() / k;
}

Matrix discriminator_loss_grad(const Matrix& probs, const IntVector& labels,
                               int k, ProtectionKind kind) {
  Matrix g = Matrix::Zero(probs.rows(), probs.cols());
  if (kind == ProtectionKind::Acc) {
    double scale = -1.0 / static_cast<double>(probs.rows());
    for (Index r = 0; r < probs.rows(); ++r) g(r, labels[r] - 1) = scale;
    return g;
  }
  Vector counts = group_counts(labels, k);
  for (Index r = 0; r < probs.rows(); ++r) {
    int gi = labels[r] - 1;
    g(r, gi) = -1.0 / (k * counts[gi]);
  }
  return g;
}

double protection_loss_value(const Matrix& probs, const IntVector& labels,
                             int k, ProtectionKind kind) {
  if (kind == ProtectionKind::Acc) {
    double correct = 0.0;
    for (Index r = 0; r < probs.rows(); ++r) correct += probs(r, labels[r] - 1);
    return correct / static_cast<double>(probs.rows());
  }
  // Zero exactly when the per-group correct-rate means sum to one.
  return -1.0 / k + group_correct_means(probs, labels, k).sum() / k;
}

Matrix protection_loss_grad(const Matrix& probs, const IntVector& labels,
                            int k, ProtectionKind kind) {
  return -discriminator_loss_grad(probs, labels, k, kind);
}

double mi_soft(const Matrix& probs, const IntVector& labels, const Vector& priors) {
  int k = static_cast<int>(probs.cols());
  Index n = probs.rows();
  for (Index r = 0; r < n; ++r) {
    if (std::abs(probs.row(r).sum() - 1.0) > 1e-6) {
      throw RowNotNormalized("mi_soft: probability row " + std::to_string(r) +
                             " does not sum to 1");
    }
  }
  Vector counts = group_counts(labels, k);
  Vector p_s(k);
  if (priors.size() == k) {
    p_s = priors;
  } else {
    p_s = counts / static_cast<double>(n);
  }
  // Joint from predicted probabilities, marginal by averaging over all rows.
  Matrix joint = Matrix::Zero(k, k);
  for (Index r = 0; r < n; ++r) {
    joint.row(labels[r] - 1) += probs.row(r);
  }
  for (int i = 0; i < k; ++i) {
    if (counts[i] > 0) joint.row(i) *= p_s[i] / counts[i];
  }
  Vector p_hat = joint.colwise().sum();
  double mi = 0.0;
  for (int i = 0; i < k; ++i) {
    for (int j = 0; j < k; ++j) {
      double jij = joint(i, j);
      if (jij <= kTiny) continue;  // 0 log 0 == 0
      mi += jij * std::log(jij / std::max(p_s[i] * p_hat[j], kTiny));
    }
  }
  return mi;
}

Matrix mi_soft_grad(const Matrix& probs, const IntVector& labels) {
  int k = static_cast<int>(probs.cols());
  Index n = probs.rows();
  Vector counts = group_counts(labels, k);
  Vector p_s = counts / static_cast<double>(n);
  Matrix joint = Matrix::Zero(k, k);
  for (Index r = 0; r < n; ++r) joint.row(labels[r] - 1) += probs.row(r);
  joint /= static_cast<double>(n);  // empirical priors make J_ij = sum/N
  Vector p_hat = joint.colwise().sum();
  // dMI/dP(r,j) = ln(J_ij / (p_i * phat_j)) / N for r in group i.
  Matrix g(n, k);
  for (Index r = 0; r < n; ++r) {
    int i = labels[r] - 1;
    for (int j = 0; j < k; ++j) {
      double jij = std::max(joint(i, j), kTiny);
      double denom = std::max(p_s[i] * p_hat[j], kTiny);
      g(r, j) = std::log(jij / denom) / static_cast<double>(n);
    }
  }
  return g;
}

// ---- Network-level wrappers ----

nn::DenseNet pretrain_classifier(const Matrix& features, const IntVector& groups,
                                 const TrainConfig& config, double* accuracy) {
  int k = groups.size() ? groups.maxCoeff() : 0;
  if (k < 2) throw std::invalid_argument("pretrain_classifier: needs k >= 2 groups");
  Index n = features.rows();
  Rng root(config.seed);
  Rng init = root.substream("classifier.init");
  nn::DenseNet net = nn::make_net(
      features.cols(),
      {{config.discriminator_hidden, nn::Activation::Relu},
       {config.discriminator_hidden, nn::Activation::Relu},
       {static_cast<Index>(k), nn::Activation::Softmax}},
      init);

  Rng split = root.substream("classifier.split");
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  split.shuffle(order);
  Index n_val = std::max<Index>(1, n / 5);
  std::vector<Index> val_rows(order.begin(), order.begin() + n_val);
  std::vector<Index> train_rows(order.begin() + n_val, order.end());

  auto take = [&](const std::vector<Index>& rows, Matrix& xs, IntVector& ys) {
    xs.resize(static_cast<Index>(rows.size()), features.cols());
    ys.resize(static_cast<Index>(rows.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
      xs.row(static_cast<Index>(i)) = features.row(rows[i]);
      ys[static_cast<Index>(i)] = groups[rows[i]];
    }
  };
  Matrix x_train, x_val;
  IntVector y_train, y_val;
  take(train_rows, x_train, y_train);
  take(val_rows, x_val, y_val);

  auto hard_accuracy = [&](const Matrix& xs, const IntVector& ys) {
    Matrix p = nn::forward(net, xs);
    Index correct = 0;
    for (Index r = 0; r < p.rows(); ++r) {
      Index best;
      p.row(r).maxCoeff(&best);
      if (static_cast<int>(best) + 1 == ys[r]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(p.rows());
  };

  nn::OptimizerState opt =
      nn::make_optimizer(net, nn::OptimizerState::Kind::Adam, config.classifier_lr);
  Rng batch_rng = root.substream("classifier.batch");
  Index nb = std::min<Index>(config.classifier_batch, x_train.rows());
  double best_val = -1.0;
  int stale = 0;
  for (int epoch = 0; epoch < config.classifier_max_epochs; ++epoch) {
    std::vector<Index> idx(static_cast<std::size_t>(x_train.rows()));
    std::iota(idx.begin(), idx.end(), Index{0});
    batch_rng.shuffle(idx);
    for (Index start = 0; start < x_train.rows(); start += nb) {
      Index len = std::min(nb, x_train.rows() - start);
      Matrix xb(len, features.cols());
      IntVector yb(len);
      for (Index i = 0; i < len; ++i) {
        xb.row(i) = x_train.row(idx[static_cast<std::size_t>(start + i)]);
        yb[i] = y_train[idx[static_cast<std::size_t>(start + i)]];
      }
      nn::ForwardTrace trace = nn::forward_trace(net, xb);
      // L = 1 - mean correct-class probability.
      Matrix d = Matrix::Zero(len, k);
      for (Index r = 0; r < len; ++r) d(r, yb[r] - 1) = -1.0 / static_cast<double>(len);
      nn::BackwardResult back = nn::backward(net, trace, d);
      if (!back.grads.all_finite()) throw NonFiniteLoss("classifier gradients non-finite");
      nn::step(net, back.grads, opt);
    }
    double val = hard_accuracy(x_val, y_val);
    if (val > best_val + 1e-4) {
      best_val = val;
      stale = 0;
    } else if (++stale >= 10) {
      break;
    }
  }
  if (accuracy != nullptr) *accuracy = hard_accuracy(x_train, y_train);
  return net;
}

double loss_recons(const nn::DenseNet& generator, const Matrix& x_priv) {
  if (x_priv.rows() == 0) return 0.0;
  return l1_reconstruction(x_priv, nn::forward(generator, x_priv));
}

double loss_c(const nn::DenseNet& classifier, const nn::DenseNet& generator,
              const Matrix& x_prot) {
  if (x_prot.rows() == 0) return 0.0;
  Matrix probs = nn::forward(classifier, nn::forward(generator, x_prot));
  return probs.col(0).mean();
}

double loss_gan(const Discriminator& d, const nn::DenseNet& generator,
                const Matrix& x_prot) {
  if (x_prot.rows() == 0) return 0.0;
  return -d.critic_scores(nn::forward(generator, x_prot)).mean();
}

double critic_gap(const Discriminator& d, const Matrix& x_priv,
                  const Matrix& mapped_prot) {
  double a = x_priv.rows() ? d.critic_scores(x_priv).mean() : 0.0;
  double b = mapped_prot.rows() ? d.critic_scores(mapped_prot).mean() : 0.0;
  return a - b;
}

namespace {

// Stacks the privileged-side rows above the mapped protected rows and builds
// the matching group-label vector.
void stack_disc_inputs(const Matrix& priv_side, const Matrix& mapped_prot,
                       const IntVector& prot_groups, Matrix& x, IntVector& labels) {
  x.resize(priv_side.rows() + mapped_prot.rows(), priv_side.cols());
  labels.resize(x.rows());
  x.topRows(priv_side.rows()) = priv_side;
  x.bottomRows(mapped_prot.rows()) = mapped_prot;
  labels.head(priv_side.rows()).setConstant(1);
  labels.tail(prot_groups.size()) = prot_groups;
}

}  // namespace

double loss_discriminator(const Discriminator& d, const Matrix& x_priv_side,
                          const Matrix& mapped_prot, const IntVector& prot_groups,
                          int k, ProtectionKind kind) {
  Matrix x;
  IntVector labels;
  stack_disc_inputs(x_priv_side, mapped_prot, prot_groups, x, labels);
  return discriminator_loss_value(d.class_probs(x), labels, k, kind);
}

double loss_protection(const Discriminator& d, const Matrix& x_priv_side,
                       const Matrix& mapped_prot, const IntVector& prot_groups,
                       int k, ProtectionKind kind) {
  Matrix x;
  IntVector labels;
  stack_disc_inputs(x_priv_side, mapped_prot, prot_groups, x, labels);
  return protection_loss_value(d.class_probs(x), labels, k, kind);
}

// ---- Training ----

namespace {

// Draws batches with the dataset's group proportions; per-group queues are
// reshuffled on exhaustion.
class StratifiedBatcher {
 public:
  StratifiedBatcher(const IntVector& groups, int k, Index batch_size, Rng rng)
      : groups_(groups), k_(k), rng_(rng) {
    queues_.resize(static_cast<std::size_t>(k));
    cursors_.assign(static_cast<std::size_t>(k), 0);
    for (Index r = 0; r < groups.size(); ++r) {
      queues_[static_cast<std::size_t>(groups[r] - 1)].push_back(r);
    }
    Index n = groups.size();
    counts_.resize(static_cast<std::size_t>(k));
    Index assigned = 0;
    std::vector<std::pair<double, int>> fractional;
    for (int g = 0; g < k; ++g) {
      double want = static_cast<double>(batch_size) *
                    static_cast<double>(queues_[static_cast<std::size_t>(g)].size()) /
                    static_cast<double>(n);
      Index base = std::max<Index>(1, static_cast<Index>(std::floor(want)));
      counts_[static_cast<std::size_t>(g)] = base;
      assigned += base;
      fractional.push_back({want - std::floor(want), g});
    }
    std::sort(fractional.begin(), fractional.end(), [](const auto& a, const auto& b) {
      if (a.first != b.first) return a.first > b.first;
      return a.second < b.second;
    });
    for (std::size_t i = 0; assigned < batch_size && i < fractional.size(); ++i, ++assigned) {
      ++counts_[static_cast<std::size_t>(fractional[i].second)];
    }
    for (auto& q : queues_) rng_.shuffle(q);
  }

  struct Batch {
    std::vector<Index> rows;  // group 1 first, then groups 2..k
    Index n_priv = 0;
    IntVector labels;
  };

  Batch next() {
    Batch b;
    for (int g = 0; g < k_; ++g) {
      auto& q = queues_[static_cast<std::size_t>(g)];
      for (Index i = 0; i < counts_[static_cast<std::size_t>(g)]; ++i) {
        if (cursors_[static_cast<std::size_t>(g)] >= q.size()) {
          rng_.shuffle(q);
          cursors_[static_cast<std::size_t>(g)] = 0;
        }
        b.rows.push_back(q[cursors_[static_cast<std::size_t>(g)]++]);
      }
      if (g == 0) b.n_priv = static_cast<Index>(b.rows.size());
    }
    b.labels.resize(static_cast<Index>(b.rows.size()));
    for (std::size_t i = 0; i < b.rows.size(); ++i) {
      b.labels[static_cast<Index>(i)] = groups_[b.rows[i]];
    }
    return b;
  }

 private:
  IntVector groups_;
  int k_;
  Rng rng_;
  std::vector<std::vector<Index>> queues_;
  std::vector<std::size_t> cursors_;
  std::vector<Index> counts_;
};

Matrix take_rows(const Matrix& m, const std::vector<Index>& rows) {
  Matrix out(static_cast<Index>(rows.size()), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.row(static_cast<Index>(i)) = m.row(rows[i]);
  }
  return out;
}

}  // namespace

DiscriminatorPass discriminator_objective(const Discriminator& disc, int k,
                                          const TrainConfig& cfg,
                                          const Matrix& x_priv_side,
                                          const Matrix& mapped_prot,
                                          const IntVector& prot_groups) {
  Matrix x;
  IntVector labels;
  stack_disc_inputs(x_priv_side, mapped_prot, prot_groups, x, labels);
  Index n_priv = x_priv_side.rows();
  Index n_prot = mapped_prot.rows();
  bool use_mi = cfg.mi_enabled(k);

  nn::ForwardTrace trunk_trace = nn::forward_trace(disc.trunk, x);
  const Matrix& h = trunk_trace.final();
  nn::ForwardTrace class_trace = nn::forward_trace(disc.class_head, h);
  nn::ForwardTrace critic_trace = nn::forward_trace(disc.critic_head, h);

  const Matrix& probs = class_trace.final();
  Vector scores = critic_trace.final().col(0);

  DiscriminatorPass out;
  out.loss_d = discriminator_loss_value(probs, labels, k, cfg.protection_loss);
  out.gap = scores.head(n_priv).mean() - scores.tail(n_prot).mean();
  out.mi = use_mi ? mi_soft(probs, labels) : 0.0;
  out.total = out.loss_d - cfg.weights.lambda_d_mi * out.mi -
              cfg.weights.lambda_dstd_gan * out.gap;

  Matrix d_probs = discriminator_loss_grad(probs, labels, k, cfg.protection_loss);
  if (use_mi) {
    d_probs -= cfg.weights.lambda_d_mi * mi_soft_grad(probs, labels);
  }
  Matrix d_scores = Matrix::Zero(scores.size(), 1);
  double lg = cfg.weights.lambda_dstd_gan;
  d_scores.topRows(n_priv).setConstant(-lg / static_cast<double>(n_priv));
  d_scores.bottomRows(n_prot).setConstant(lg / static_cast<double>(n_prot));

  nn::BackwardResult back_class = nn::backward(disc.class_head, class_trace, d_probs);
  nn::BackwardResult back_critic = nn::backward(disc.critic_head, critic_trace, d_scores);
  Matrix d_h = back_class.input_grad + back_critic.input_grad;
  nn::BackwardResult back_trunk = nn::backward(disc.trunk, trunk_trace, d_h);

  out.trunk_grads = std::move(back_trunk.grads);
  out.class_grads = std::move(back_class.grads);
  out.critic_grads = std::move(back_critic.grads);
  return out;
}

namespace {

// One critic/discriminator update on a batch; the generator is fixed.
DiscriminatorPass critic_update(MappingEnsemble& ens, const TrainConfig& cfg,
                                const Matrix& x_priv_in, const Matrix& mapped_prot,
                                const IntVector& prot_groups,
                                nn::OptimizerState& opt_trunk, nn::OptimizerState& opt_class,
                                nn::OptimizerState& opt_critic) {
  DiscriminatorPass pass = discriminator_objective(ens.discriminator, ens.k, cfg,
                                                   x_priv_in, mapped_prot, prot_groups);
  if (!std::isfinite(pass.total) || !pass.trunk_grads.all_finite()) {
    throw NonFiniteLoss("discriminator loss became non-finite");
  }
  nn::step(ens.discriminator.trunk, pass.trunk_grads, opt_trunk);
  nn::step(ens.discriminator.class_head, pass.class_grads, opt_class);
  nn::step(ens.discriminator.critic_head, pass.critic_grads, opt_critic);
  // Lipschitz constraint on the critic path.
  nn::clip_weights(ens.discriminator.trunk, cfg.clip_c);
  nn::clip_weights(ens.discriminator.critic_head, cfg.clip_c);
  return pass;
}

struct GenStep {
  GeneratorLossBreakdown losses;
  nn::GradientBuffer grads;
  bool has_grads = false;
};

// Evaluates the combined generator objective on one stratified batch and,
// when requested, its gradient w.r.t. the generator parameters.
GenStep generator_pass(const MappingEnsemble& ens, const TrainConfig& cfg,
                       const Matrix& x_batch, Index n_priv, const IntVector& labels,
                       bool want_grads) {
  const LossWeights& w = cfg.weights;
  bool use_mi = cfg.mi_enabled(ens.k);
  Index n = x_batch.rows();
  Index n_prot = n - n_priv;
  Matrix x_priv = x_batch.topRows(n_priv);
  Matrix x_prot = x_batch.bottomRows(n_prot);
  IntVector prot_groups = labels.tail(n_prot);

  nn::ForwardTrace gen_trace = nn::forward_trace(ens.generator, x_batch);
  const Matrix& mapped = gen_trace.final();
  Matrix mapped_priv = mapped.topRows(n_priv);
  Matrix mapped_prot = mapped.bottomRows(n_prot);

  GenStep step;
  Matrix d_mapped = Matrix::Zero(n, x_batch.cols());

  // Reconstruction scope depends on the instantiation mode.
  if (w.lambda_rec > 0.0) {
    switch (cfg.mode) {
      case Mode::FairMapping:
      case Mode::Wgan:
        step.losses.recons = l1_reconstruction(x_priv, mapped_priv);
        d_mapped.topRows(n_priv) +=
            w.lambda_rec * l1_reconstruction_grad(x_priv, mapped_priv);
        break;
      case Mode::AttGan:
      case Mode::GanSan:
        step.losses.recons = l1_reconstruction(x_batch, mapped);
        d_mapped += w.lambda_rec * l1_reconstruction_grad(x_batch, mapped);
        break;
      case Mode::GanSanOm:
        step.losses.recons = l1_reconstruction(x_prot, mapped_prot);
        d_mapped.bottomRows(n_prot) +=
            w.lambda_rec * l1_reconstruction_grad(x_prot, mapped_prot);
        break;
    }
  }

  if (w.lambda_c > 0.0 && n_prot > 0) {
    nn::ForwardTrace c_trace = nn::forward_trace(ens.classifier, mapped_prot);
    step.losses.classif = c_trace.final().col(0).mean();
    Matrix d_probs = Matrix::Zero(n_prot, ens.k);
    d_probs.col(0).setConstant(-w.lambda_c / static_cast<double>(n_prot));
    d_mapped.bottomRows(n_prot) +=
        nn::backward(ens.classifier, c_trace, d_probs).input_grad;
  }

  if (w.lambda_gan > 0.0 && n_prot > 0) {
    nn::ForwardTrace t_trace = nn::forward_trace(ens.discriminator.trunk, mapped_prot);
    nn::ForwardTrace s_trace =
        nn::forward_trace(ens.discriminator.critic_head, t_trace.final());
    step.losses.gan = -s_trace.final().col(0).mean();
    Matrix d_scores(n_prot, 1);
    d_scores.setConstant(-w.lambda_gan / static_cast<double>(n_prot));
    Matrix d_h =
        nn::backward(ens.discriminator.critic_head, s_trace, d_scores).input_grad;
    d_mapped.bottomRows(n_prot) +=
        nn::backward(ens.discriminator.trunk, t_trace, d_h).input_grad;
  }

  if (w.lambda_d > 0.0) {
    // gansan feeds the reconstructed privileged rows to D; every other mode
    // uses the original ones.
    bool priv_through_gen = cfg.mode == Mode::GanSan;
    Matrix priv_side = priv_through_gen ? mapped_priv : x_priv;
    Matrix x_d;
    IntVector d_labels;
    stack_disc_inputs(priv_side, mapped_prot, prot_groups, x_d, d_labels);
    nn::ForwardTrace t_trace = nn::forward_trace(ens.discriminator.trunk, x_d);
    nn::ForwardTrace p_trace =
        nn::forward_trace(ens.discriminator.class_head, t_trace.final());
    const Matrix& probs = p_trace.final();
    double l_s = protection_loss_value(probs, d_labels, ens.k, cfg.protection_loss);
    if (use_mi) l_s += w.lambda_g_mi * mi_soft(probs, d_labels);
    step.losses.protection = l_s;
    // AttGan maximizes the prediction of S instead of minimizing it.
    double sign = cfg.mode == Mode::AttGan ? -1.0 : 1.0;
    Matrix d_probs =
        protection_loss_grad(probs, d_labels, ens.k, cfg.protection_loss);
    if (use_mi) d_probs += w.lambda_g_mi * mi_soft_grad(probs, d_labels);
    d_probs *= sign * w.lambda_d;
    Matrix d_h = nn::backward(ens.discriminator.class_head, p_trace, d_probs).input_grad;
    Matrix d_xd = nn::backward(ens.discriminator.trunk, t_trace, d_h).input_grad;
    d_mapped.bottomRows(n_prot) += d_xd.bottomRows(n_prot);
    if (priv_through_gen) d_mapped.topRows(n_priv) += d_xd.topRows(n_priv);
  }

  double sign_d = cfg.mode == Mode::AttGan ? -1.0 : 1.0;
  step.losses.total = w.lambda_rec * step.losses.recons - w.lambda_c * step.losses.classif +
                      w.lambda_gan * step.losses.gan +
                      sign_d * w.lambda_d * step.losses.protection;

  if (want_grads) {
    step.grads = nn::backward(ens.generator, gen_trace, d_mapped).grads;
    step.has_grads = true;
  }
  return step;
}

}  // namespace

namespace {

Index leading_privileged(const IntVector& groups) {
  Index n_priv = 0;
  for (Index r = 0; r < groups.size(); ++r) {
    if (groups[r] == 1) ++n_priv;
  }
  // Rows must arrive privileged-first, matching the training batch layout.
  for (Index r = 0; r < n_priv; ++r) {
    if (groups[r] != 1) throw std::invalid_argument("batch rows are not grouped");
  }
  return n_priv;
}

}  // namespace

GeneratorLossBreakdown generator_loss(const MappingEnsemble& ensemble,
                                      const Matrix& batch, const IntVector& groups,
                                      const TrainConfig& config) {
  return generator_pass(ensemble, config, batch, leading_privileged(groups), groups, false)
      .losses;
}

nn::GradientBuffer generator_gradients(const MappingEnsemble& ensemble,
                                       const Matrix& batch, const IntVector& groups,
                                       const TrainConfig& config) {
  return generator_pass(ensemble, config, batch, leading_privileged(groups), groups, true)
      .grads;
}

MappingEnsemble train(const EncodedMatrix& encoded, const Encoder& encoder,
                      const TrainConfig& config) {
  int k = encoded.groups.size() ? encoded.groups.maxCoeff() : 0;
  config.validate(k);
  if (k < 2) throw std::invalid_argument("train: needs k >= 2 groups");
  Index m = encoded.cols();
  Index n = encoded.rows();

  MappingEnsemble ens;
  ens.k = k;
  ens.encoder = encoder;
  ens.config = config;

  Rng root(config.seed);
  ens.classifier =
      pretrain_classifier(encoded.values, encoded.groups, config, &ens.classifier_accuracy);

  Rng gi = root.substream("init.generator");
  Index gh = config.generator_hidden > 0 ? config.generator_hidden : 2 * m;
  ens.generator = nn::make_net(m,
                               {{gh, nn::Activation::Relu},
                                {gh, nn::Activation::Relu},
                                {m, nn::Activation::Sigmoid}},
                               gi);
  // The trunk is shared by both heads and sits on the clipped critic path,
  // so it stays shallow; the class head keeps its own unclipped hidden layer
  // to retain discrimination power.
  Rng ti = root.substream("init.trunk");
  ens.discriminator.trunk = nn::make_net(
      m, {{config.discriminator_hidden, nn::Activation::Relu}}, ti);
  Rng ci = root.substream("init.class_head");
  ens.discriminator.class_head =
      nn::make_net(config.discriminator_hidden,
                   {{config.discriminator_hidden, nn::Activation::Relu},
                    {static_cast<Index>(k), nn::Activation::Softmax}},
                   ci);
  Rng si = root.substream("init.critic_head");
  ens.discriminator.critic_head =
      nn::make_net(config.discriminator_hidden,
                   {{config.discriminator_hidden, nn::Activation::Relu},
                    {1, nn::Activation::Linear}},
                   si);

  nn::OptimizerState opt_gen = nn::make_optimizer(
      ens.generator, nn::OptimizerState::Kind::Adam, config.generator_lr);
  nn::OptimizerState opt_trunk = nn::make_optimizer(
      ens.discriminator.trunk, nn::OptimizerState::Kind::Adam, config.critic_lr);
  nn::OptimizerState opt_class =
      nn::make_optimizer(ens.discriminator.class_head, nn::OptimizerState::Kind::Adam,
                         config.discriminator_head_lr);
  nn::OptimizerState opt_critic = nn::make_optimizer(
      ens.discriminator.critic_head, nn::OptimizerState::Kind::Adam, config.critic_lr);

  StratifiedBatcher batcher(encoded.groups, k, config.batch_size,
                            root.substream("batching"));
  Index steps = std::max<Index>(1, (n + config.batch_size - 1) / config.batch_size);

  std::shared_ptr<MappingEnsemble> last_good;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    EpochStats stats;
    stats.epoch = epoch;
    try {
      for (Index s = 0; s < steps; ++s) {
        for (int cstep = 0; cstep < config.critic_steps; ++cstep) {
          auto b = batcher.next();
          Matrix xb = take_rows(encoded.values, b.rows);
          Matrix x_priv = xb.topRows(b.n_priv);
          Matrix x_prot = xb.bottomRows(xb.rows() - b.n_priv);
          Matrix mapped_prot = nn::forward(ens.generator, x_prot);
          Matrix priv_in =
              config.mode == Mode::GanSan ? nn::forward(ens.generator, x_priv) : x_priv;
          DiscriminatorPass d =
              critic_update(ens, config, priv_in, mapped_prot,
                            b.labels.tail(b.labels.size() - b.n_priv),
                            opt_trunk, opt_class, opt_critic);
          stats.disc += d.loss_d;
          stats.critic += d.gap;
          stats.disc_total += d.total;
        }
        auto b = batcher.next();
        Matrix xb = take_rows(encoded.values, b.rows);
        GenStep g = generator_pass(ens, config, xb, b.n_priv, b.labels, true);
        if (!std::isfinite(g.losses.total) || !g.grads.all_finite()) {
          throw NonFiniteLoss("generator loss became non-finite");
        }
        nn::step(ens.generator, g.grads, opt_gen);
        stats.recons += g.losses.recons;
        stats.classif += g.losses.classif;
        stats.gan += g.losses.gan;
        stats.protection += g.losses.protection;
        stats.generator_total += g.losses.total;
      }
    } catch (const NonFiniteLoss& e) {
      throw NonFiniteLoss(std::string(e.what()) + " at epoch " + std::to_string(epoch),
                          last_good);
    }
    double inv_steps = 1.0 / static_cast<double>(steps);
    stats.recons *= inv_steps;
    stats.classif *= inv_steps;
    stats.gan *= inv_steps;
    stats.protection *= inv_steps;
    stats.generator_total *= inv_steps;
    double inv_c = inv_steps / config.critic_steps;
    stats.disc *= inv_c;
    stats.critic *= inv_c;
    stats.disc_total *= inv_c;
    ens.history.push_back(stats);
    last_good = std::make_shared<MappingEnsemble>(ens);
  }
  return ens;
}

MappingEnsemble train(const Dataset& dataset, const TrainConfig& config) {
  Encoder enc;
  enc.fit(dataset);
  return train(enc.encode(dataset), enc, config);
}

Matrix transform(const nn::DenseNet& generator, const Matrix& rows) {
  if (rows.rows() == 0) return Matrix(0, generator.input_width());
  if (rows.cols() != generator.input_width()) {
    throw EncoderMismatch("transform: row width does not match the generator");
  }
  return nn::forward(generator, rows);
}

EncodedMatrix transform(const nn::DenseNet& generator, const EncodedMatrix& matrix) {
  EncodedMatrix out = matrix;
  out.values = transform(generator, matrix.values);
  return out;
}

Dataset transform(const MappingEnsemble& ensemble, const Dataset& dataset) {
  EncodedMatrix enc = ensemble.encoder.encode(dataset);
  EncodedMatrix mapped = transform(ensemble.generator, enc);
  return ensemble.encoder.decode(mapped);
}

// ---- Checkpoints ----

namespace {

nlohmann::json weights_to_json(const LossWeights& w) {
  return {{"lambda_rec", w.lambda_rec},     {"lambda_c", w.lambda_c},
          {"lambda_gan", w.lambda_gan},     {"lambda_d", w.lambda_d},
          {"lambda_d_mi", w.lambda_d_mi},   {"lambda_g_mi", w.lambda_g_mi},
          {"lambda_dstd_gan", w.lambda_dstd_gan}};
}

LossWeights weights_from_json(const nlohmann::json& j) {
  LossWeights w;
  w.lambda_rec = j.at("lambda_rec").get<double>();
  w.lambda_c = j.at("lambda_c").get<double>();
  w.lambda_gan = j.at("lambda_gan").get<double>();
  w.lambda_d = j.at("lambda_d").get<double>();
  w.lambda_d_mi = j.at("lambda_d_mi").get<double>();
  w.lambda_g_mi = j.at("lambda_g_mi").get<double>();
  w.lambda_dstd_gan = j.at("lambda_dstd_gan").get<double>();
  return w;
}

nlohmann::json encoder_to_json(const Encoder& enc) {
  nlohmann::json schema = nlohmann::json::array();
  for (const AttributeSpec& a : enc.fitted_schema()) {
    nlohmann::json aj;
    aj["name"] = a.name;
    aj["kind"] = a.is_numeric() ? "numeric" : "categorical";
    aj["role"] = a.role == AttrRole::Sensitive ? "sensitive"
                 : a.role == AttrRole::Decision ? "decision" : "other";
    aj["categories"] = a.categories;
    if (a.numeric_range) {
      aj["range"] = {a.numeric_range->first, a.numeric_range->second};
    }
    schema.push_back(aj);
  }
  nlohmann::json blocks = nlohmann::json::array();
  for (const Block& b : enc.blocks()) {
    blocks.push_back({{"attribute", b.attribute},
                      {"offset", b.offset},
                      {"width", b.width},
                      {"categorical", b.categorical}});
  }
  return {{"schema", schema}, {"blocks", blocks}, {"width", enc.width()}};
}

Encoder encoder_from_json(const nlohmann::json& j) {
  std::vector<AttributeSpec> schema;
  for (const auto& aj : j.at("schema")) {
    AttributeSpec a;
    a.name = aj.at("name").get<std::string>();
    a.kind = aj.at("kind") == "numeric" ? AttrKind::Numeric : AttrKind::Categorical;
    std::string role = aj.at("role").get<std::string>();
    a.role = role == "sensitive" ? AttrRole::Sensitive
             : role == "decision" ? AttrRole::Decision : AttrRole::Other;
    a.categories = aj.at("categories").get<std::vector<std::string>>();
    if (aj.contains("range")) {
      a.numeric_range = {aj["range"][0].get<double>(), aj["range"][1].get<double>()};
    }
    schema.push_back(a);
  }
  std::vector<Block> blocks;
  for (const auto& bj : j.at("blocks")) {
    blocks.push_back({bj.at("attribute").get<std::string>(), bj.at("offset").get<Index>(),
                      bj.at("width").get<Index>(), bj.at("categorical").get<bool>()});
  }
  return Encoder::restore(std::move(schema), std::move(blocks), j.at("width").get<Index>());
}

}  // namespace

void save_ensemble(const MappingEnsemble& ensemble, const std::string& dir,
                   const std::string& dataset_fingerprint) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  nn::save_checkpoint(ensemble.generator, dir + "/generator.json");
  nn::save_checkpoint(ensemble.discriminator.trunk, dir + "/trunk.json");
  nn::save_checkpoint(ensemble.discriminator.class_head, dir + "/class_head.json");
  nn::save_checkpoint(ensemble.discriminator.critic_head, dir + "/critic_head.json");
  nn::save_checkpoint(ensemble.classifier, dir + "/classifier.json");

  nlohmann::json manifest;
  manifest["mode"] = mode_name(ensemble.config.mode);
  manifest["protection_loss"] = protection_name(ensemble.config.protection_loss);
  manifest["weights"] = weights_to_json(ensemble.config.weights);
  manifest["seed"] = ensemble.config.seed;
  manifest["epochs"] = ensemble.config.epochs;
  manifest["batch_size"] = ensemble.config.batch_size;
  manifest["critic_steps"] = ensemble.config.critic_steps;
  manifest["clip_c"] = ensemble.config.clip_c;
  manifest["use_mi"] = ensemble.config.mi_enabled(ensemble.k);
  manifest["k"] = ensemble.k;
  manifest["classifier_accuracy"] = ensemble.classifier_accuracy;
  manifest["dataset_fingerprint"] = dataset_fingerprint;
  manifest["encoder"] = encoder_to_json(ensemble.encoder);
  std::ofstream out(dir + "/manifest.json");
  if (!out) throw std::runtime_error("cannot write " + dir + "/manifest.json");
  out << manifest.dump(2) << "\n";
}

MappingEnsemble load_ensemble(const std::string& dir) {
  std::ifstream in(dir + "/manifest.json");
  if (!in) throw std::runtime_error("cannot open " + dir + "/manifest.json");
  nlohmann::json manifest = nlohmann::json::parse(in);

  MappingEnsemble ens;
  ens.generator = nn::load_checkpoint(dir + "/generator.json");
  ens.discriminator.trunk = nn::load_checkpoint(dir + "/trunk.json");
  ens.discriminator.class_head = nn::load_checkpoint(dir + "/class_head.json");
  ens.discriminator.critic_head = nn::load_checkpoint(dir + "/critic_head.json");
  ens.classifier = nn::load_checkpoint(dir + "/classifier.json");
  ens.k = manifest.at("k").get<int>();
  ens.config.mode = mode_from_name(manifest.at("mode").get<std::string>());
  ens.config.protection_loss =
      protection_from_name(manifest.at("protection_loss").get<std::string>());
  ens.config.weights = weights_from_json(manifest.at("weights"));
  ens.config.seed = manifest.at("seed").get<std::uint64_t>();
  ens.config.epochs = manifest.at("epochs").get<int>();
  ens.config.batch_size = manifest.at("batch_size").get<Index>();
  ens.config.critic_steps = manifest.at("critic_steps").get<int>();
  ens.config.clip_c = manifest.at("clip_c").get<double>();
  ens.config.use_mi = manifest.at("use_mi").get<bool>();
  ens.classifier_accuracy = manifest.value("classifier_accuracy", 0.0);
  ens.encoder = encoder_from_json(manifest.at("encoder"));
  return ens;
}

}  // namespace fairmap::mapping
