#pragma once

#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "fairmap/data.hpp"
#include "fairmap/nn.hpp"

namespace fairmap::mapping {

struct ModeConflict : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct RowNotNormalized : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct EncoderMismatch : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class ProtectionKind { Ber, Acc };
enum class Mode { FairMapping, Wgan, AttGan, GanSan, GanSanOm };

const char* mode_name(Mode m);
Mode mode_from_name(const std::string& name);
const char* protection_name(ProtectionKind k);
ProtectionKind protection_from_name(const std::string& name);

// Coefficients of the combined generator objective plus the regulariser
// weights of the discriminator/critic side. The notation-table aliases
// (lambda_R, lambda_C, lambda_D_std, lambda_D) map onto rec/c/gan/d.
struct LossWeights {
  double lambda_rec = 1.0;
  double lambda_c = 1.0;
  double lambda_gan = 1.0;
  double lambda_d = 1.0;
  double lambda_d_mi = 1.0;
  double lambda_g_mi = 1.0;
  double lambda_dstd_gan = 1.0;

  void validate() const;
};

struct TrainConfig {
  int epochs = 200;
  Index batch_size = 128;
  int critic_steps = 5;
  double clip_c = 0.01;
  std::uint64_t seed = 1;
  ProtectionKind protection_loss = ProtectionKind::Ber;
  std::optional<bool> use_mi;  // defaults to k > 2 when unset
  Mode mode = Mode::FairMapping;
  LossWeights weights;

  // Architecture and optimiser knobs; generator hidden width 0 means 2*m.
  Index generator_hidden = 0;
  Index discriminator_hidden = 64;
  double generator_lr = 1e-3;
  double critic_lr = 5e-5;
  double discriminator_head_lr = 1e-3;
  double classifier_lr = 1e-3;
  int classifier_max_epochs = 200;
  Index classifier_batch = 128;

  bool mi_enabled(int k) const { return use_mi.value_or(k > 2); }
  // Throws ModeConflict when the mode pins a coefficient the config sets.
  void validate(int k) const;
};

// Shared-trunk discriminator: the class head predicts the sensitive group,
// the critic head scores realness for the Wasserstein term.
struct Discriminator {
  nn::DenseNet trunk;
  nn::DenseNet class_head;   // softmax over k groups
  nn::DenseNet critic_head;  // linear scalar

  Matrix class_probs(const Matrix& batch) const;
  Vector critic_scores(const Matrix& batch) const;
};

struct EpochStats {
  int epoch = 0;
  double recons = 0.0;
  double classif = 0.0;     // L_C
  double gan = 0.0;         // generator-side critic term
  double protection = 0.0;  // L_S (with MI folded in when enabled)
  double generator_total = 0.0;
  double disc = 0.0;        // L_D
  double critic = 0.0;      // L_{D_std}
  double disc_total = 0.0;  // combined discriminator/critic objective
};

struct MappingEnsemble {
  nn::DenseNet generator;
  Discriminator discriminator;
  nn::DenseNet classifier;  // frozen after pretraining
  Encoder encoder;
  TrainConfig config;
  int k = 0;
  std::vector<EpochStats> history;
  double classifier_accuracy = 0.0;
};

struct NonFiniteLoss : std::runtime_error {
  explicit NonFiniteLoss(const std::string& what,
                         std::shared_ptr<MappingEnsemble> last_good = nullptr)
      : std::runtime_error(what), last_checkpoint(std::move(last_good)) {}
  // Last epoch that still had finite losses, kept for forensics.
  std::shared_ptr<MappingEnsemble> last_checkpoint;
};

// ---- Pure loss kernels. Probabilities are N x k, labels in [1, k]. ----

// Mean absolute difference over all entries.
double l1_reconstruction(const Matrix& original, const Matrix& mapped);
Matrix l1_reconstruction_grad(const Matrix& original, const Matrix& mapped);

double discriminator_loss_value(const Matrix& probs, const IntVector& labels,
                                int k, ProtectionKind kind);
Matrix discriminator_loss_grad(const Matrix& probs, const IntVector& labels,
                               int k, ProtectionKind kind);

double protection_loss_value(const Matrix& probs, const IntVector& labels,
                             int k, ProtectionKind kind);
Matrix protection_loss_grad(const Matrix& probs, const IntVector& labels,
                            int k, ProtectionKind kind);

// Soft mutual information between group labels and predicted probabilities,
// natural log. Empty priors use the empirical label proportions.
double mi_soft(const Matrix& probs, const IntVector& labels,
               const Vector& group_priors = Vector());
Matrix mi_soft_grad(const Matrix& probs, const IntVector& labels);

// ---- Network-level operations. ----

nn::DenseNet pretrain_classifier(const Matrix& features, const IntVector& groups,
                                 const TrainConfig& config, double* accuracy = nullptr);

double loss_recons(const nn::DenseNet& generator, const Matrix& x_priv);
double loss_c(const nn::DenseNet& classifier, const nn::DenseNet& generator,
              const Matrix& x_prot);
// Generator-side critic term; the critic-side gap is critic_gap().
double loss_gan(const Discriminator& d, const nn::DenseNet& generator,
                const Matrix& x_prot);
double critic_gap(const Discriminator& d, const Matrix& x_priv,
                  const Matrix& mapped_prot);
double loss_discriminator(const Discriminator& d, const Matrix& x_priv_side,
                          const Matrix& mapped_prot, const IntVector& prot_groups,
                          int k, ProtectionKind kind);
double loss_protection(const Discriminator& d, const Matrix& x_priv_side,
                       const Matrix& mapped_prot, const IntVector& prot_groups,
                       int k, ProtectionKind kind);

struct GeneratorLossBreakdown {
  double recons = 0.0;
  double classif = 0.0;
  double gan = 0.0;
  double protection = 0.0;
  double total = 0.0;
};

// The combined weighted objective over one encoded batch, with mode
// overrides applied (reconstruction scope, discriminator inputs, sign).
GeneratorLossBreakdown generator_loss(const MappingEnsemble& ensemble,
                                      const Matrix& batch, const IntVector& groups,
                                      const TrainConfig& config);

// Gradient of the combined generator objective w.r.t. the generator
// parameters; the training loop applies exactly this.
nn::GradientBuffer generator_gradients(const MappingEnsemble& ensemble,
                                       const Matrix& batch, const IntVector& groups,
                                       const TrainConfig& config);

// Combined discriminator/critic objective L_D [- lambda_d_mi MI]
// - lambda_dstd_gan L_Dstd with gradients for the shared trunk and both heads.
struct DiscriminatorPass {
  double loss_d = 0.0;
  double gap = 0.0;  // L_Dstd
  double mi = 0.0;
  double total = 0.0;
  nn::GradientBuffer trunk_grads;
  nn::GradientBuffer class_grads;
  nn::GradientBuffer critic_grads;
};

DiscriminatorPass discriminator_objective(const Discriminator& disc, int k,
                                          const TrainConfig& config,
                                          const Matrix& x_priv_side,
                                          const Matrix& mapped_prot,
                                          const IntVector& prot_groups);

MappingEnsemble train(const Dataset& dataset, const TrainConfig& config);
MappingEnsemble train(const EncodedMatrix& encoded, const Encoder& encoder,
                      const TrainConfig& config);

Matrix transform(const nn::DenseNet& generator, const Matrix& rows);
EncodedMatrix transform(const nn::DenseNet& generator, const EncodedMatrix& matrix);
Dataset transform(const MappingEnsemble& ensemble, const Dataset& dataset);

// Ensemble checkpoint: four network checkpoints plus a JSON manifest.
void save_ensemble(const MappingEnsemble& ensemble, const std::string& dir,
                   const std::string& dataset_fingerprint = "");
MappingEnsemble load_ensemble(const std::string& dir);

}  // namespace fairmap::mapping
