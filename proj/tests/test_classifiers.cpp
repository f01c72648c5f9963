#include <filesystem>

#include "doctest.h"
#include "fairmap/classifiers.hpp"
#include "fairmap/rng.hpp"

using namespace fairmap;
using namespace fairmap::classifiers;

namespace {

struct Blobs {
  Matrix x;
  IntVector y;
};

Blobs separable_blobs(Index per_class, int k, std::uint64_t seed) {
  Rng rng(seed);
  Blobs b;
  b.x.resize(per_class * k, 2);
  b.y.resize(per_class * k);
  for (int c = 0; c < k; ++c) {
    double cx = 0.15 + 0.7 * c / std::max(1, k - 1);
    for (Index i = 0; i < per_class; ++i) {
      Index r = c * per_class + i;
      b.x(r, 0) = cx + 0.04 * rng.normal();
      b.x(r, 1) = (c % 2 ? 0.8 : 0.2) + 0.04 * rng.normal();
      b.y[r] = c + 1;
    }
  }
  return b;
}

double train_accuracy(const Classifier& clf, const Blobs& b) {
  IntVector pred = clf.predict(b.x);
  Index ok = 0;
  for (Index i = 0; i < b.y.size(); ++i) ok += pred[i] == b.y[i];
  return static_cast<double>(ok) / static_cast<double>(b.y.size());
}

}  // namespace

TEST_CASE("every kind solves separable blobs and exposes calibrated probabilities") {
  Blobs b = separable_blobs(60, 2, 3);
  for (Kind kind : {Kind::Gbc, Kind::SvmLinear, Kind::DTree, Kind::Logistic, Kind::Mlp}) {
    CAPTURE(kind_name(kind));
    auto clf = make_classifier(kind);
    CHECK_THROWS_AS(clf->predict(b.x), NotFitted);
    clf->fit(b.x, b.y, 7);
    CHECK(train_accuracy(*clf, b) >= 0.99);
    Matrix probs = clf->predict_proba(b.x);
    for (Index r = 0; r < probs.rows(); ++r) {
      CHECK(probs.row(r).sum() == doctest::Approx(1.0).epsilon(1e-9));
    }
    // Deep inside a class the winning probability is confident.
    CHECK(probs.row(0).maxCoeff() >= 0.9);
  }
}

TEST_CASE("single-class training data is rejected") {
  Blobs b = separable_blobs(20, 2, 4);
  IntVector ones = IntVector::Constant(b.y.size(), 1);
  for (Kind kind : {Kind::Gbc, Kind::SvmLinear, Kind::DTree, Kind::Logistic, Kind::Mlp}) {
    auto clf = make_classifier(kind);
    CHECK_THROWS_AS(clf->fit(b.x, ones, 1), SingleClass);
  }
}

TEST_CASE("decision tree solves XOR with axis splits") {
  Matrix x(4, 2);
  x << 0, 0, 0, 1, 1, 0, 1, 1;
  IntVector y(4);
  y << 1, 2, 2, 1;
  auto tree = make_classifier(Kind::DTree);
  tree->fit(x, y, 0);
  IntVector pred = tree->predict(x);
  CHECK(pred == y);
  // Pure leaves emit one-hot probabilities.
  Matrix probs = tree->predict_proba(x);
  CHECK(probs.maxCoeff() == 1.0);
  CHECK(probs.minCoeff() == 0.0);
}

TEST_CASE("predict equals arg-max of predict_proba with lowest-index ties") {
  Blobs b = separable_blobs(40, 3, 5);
  for (Kind kind : {Kind::Gbc, Kind::Logistic, Kind::Mlp, Kind::SvmLinear, Kind::DTree}) {
    auto clf = make_classifier(kind);
    clf->fit(b.x, b.y, 11);
    Matrix probs = clf->predict_proba(b.x);
    IntVector pred = clf->predict(b.x);
    for (Index r = 0; r < probs.rows(); ++r) {
      int best = 0;
      for (int c = 1; c < probs.cols(); ++c) {
        if (probs(r, c) > probs(r, best)) best = c;
      }
      CHECK(pred[r] == best + 1);
    }
  }
}

TEST_CASE("fitting is deterministic under a fixed seed") {
  Blobs b = separable_blobs(50, 2, 6);
  Matrix probe = b.x.topRows(10);
  for (Kind kind : {Kind::Gbc, Kind::SvmLinear, Kind::DTree, Kind::Logistic, Kind::Mlp}) {
    auto c1 = make_classifier(kind);
    auto c2 = make_classifier(kind);
    c1->fit(b.x, b.y, 42);
    c2->fit(b.x, b.y, 42);
    CHECK(c1->predict_proba(probe) == c2->predict_proba(probe));
  }
}

TEST_CASE("gbc staged training log-loss is monotone non-increasing") {
  Blobs b = separable_blobs(40, 3, 8);
  auto clf = make_classifier(Kind::Gbc);
  clf->fit(b.x, b.y, 1);
  const GbcDiagnostics& diag = gbc_diagnostics(*clf);
  REQUIRE(diag.staged_train_logloss.size() == 100);
  for (std::size_t i = 1; i < diag.staged_train_logloss.size(); ++i) {
    CHECK(diag.staged_train_logloss[i] <= diag.staged_train_logloss[i - 1] + 1e-9);
  }
}

TEST_CASE("classifiers serialise and reload with identical predictions") {
  Blobs b = separable_blobs(30, 2, 9);
  std::string dir = (std::filesystem::temp_directory_path() / "fairmap_clf").string();
  std::filesystem::create_directories(dir);
  for (Kind kind : {Kind::Gbc, Kind::SvmLinear, Kind::DTree, Kind::Logistic, Kind::Mlp}) {
    CAPTURE(kind_name(kind));
    auto clf = make_classifier(kind);
    clf->fit(b.x, b.y, 3);
    std::string stem = dir + "/" + kind_name(kind);
    clf->save(stem);
    auto back = load_classifier(stem);
    CHECK(back->kind() == kind);
    CHECK(back->predict_proba(b.x) == clf->predict_proba(b.x));
  }
}
