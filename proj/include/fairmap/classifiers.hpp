#pragma once

#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "fairmap/data.hpp"

namespace fairmap::classifiers {

struct SingleClass : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NotFitted : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class Kind { Gbc, SvmLinear, DTree, Logistic, Mlp };

const char* kind_name(Kind k);
Kind kind_from_name(const std::string& name);

// External classifiers are independent of any protection framework; they
// only exist to score metrics. Labels are group indices in [1, k].
class Classifier {
 public:
  virtual ~Classifier() = default;

  virtual void fit(const Matrix& x, const IntVector& y, std::uint64_t seed) = 0;
  virtual Matrix predict_proba(const Matrix& x) const = 0;
  virtual Kind kind() const = 0;

  // Arg-max of predict_proba with lowest-index tie break.
  IntVector predict(const Matrix& x) const;

  bool fitted() const { return k_ > 0; }
  int classes() const { return k_; }

  virtual void save(const std::string& stem) const = 0;

 protected:
  void require_fitted() const {
    if (!fitted()) throw NotFitted("classifier has not been fitted");
  }
  int k_ = 0;
};

std::unique_ptr<Classifier> make_classifier(Kind kind);
std::unique_ptr<Classifier> load_classifier(const std::string& stem);

// Fitted-state introspection used by tests.
struct GbcDiagnostics {
  // Sum over one-vs-rest machines of the binary training log-loss, recorded
  // after every boosting round.
  std::vector<double> staged_train_logloss;
};
const GbcDiagnostics& gbc_diagnostics(const Classifier& clf);

}  // namespace fairmap::classifiers
