#include "fairmap/sinkhorn.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "fairmap/rng.hpp"

namespace fairmap::sinkhorn {

namespace {

Matrix squared_cost(const Matrix& a, const Matrix& b) {
  Matrix c(a.rows(), b.rows());
  for (Index i = 0; i < a.rows(); ++i) {
    c.row(i) = (b.rowwise() - a.row(i)).rowwise().squaredNorm().transpose();
  }
  return c;
}

double logsumexp(const Eigen::RowVectorXd& v) {
  double m = v.maxCoeff();
  if (!std::isfinite(m)) return m;
  return m + std::log((v.array() - m).exp().sum());
}

struct OtResult {
  double value = 0.0;
  bool converged = false;
  int iterations = 0;
};

// Log-domain Sinkhorn fixed point for uniform weights; returns the dual
// value <alpha, f> + <beta, g> at convergence.
OtResult ot_epsilon(const Matrix& cost, double eps, int max_iters, double tol) {
  Index n = cost.rows();
  Index m = cost.cols();
  double log_a = -std::log(static_cast<double>(n));
  double log_b = -std::log(static_cast<double>(m));
  Vector f = Vector::Zero(n);
  Vector g = Vector::Zero(m);
  OtResult out;
  for (int it = 0; it < max_iters; ++it) {
    double delta = 0.0;
    for (Index i = 0; i < n; ++i) {
      Eigen::RowVectorXd row = (g.transpose() - cost.row(i)) / eps;
      row.array() += log_b;
      double fi = -eps * logsumexp(row);
      delta = std::max(delta, std::abs(fi - f[i]));
      f[i] = fi;
    }
    for (Index j = 0; j < m; ++j) {
      Eigen::RowVectorXd col = (f.transpose() - cost.col(j).transpose()) / eps;
      col.array() += log_a;
      double gj = -eps * logsumexp(col);
      delta = std::max(delta, std::abs(gj - g[j]));
      g[j] = gj;
    }
    out.iterations = it + 1;
    if (delta < tol) {
      out.converged = true;
      break;
    }
  }
  out.value = f.mean() + g.mean();
  return out;
}

Matrix maybe_subsample(const Matrix& x, Index limit, Rng rng) {
  if (x.rows() <= limit) return x;
  std::vector<Index> rows(static_cast<std::size_t>(x.rows()));
  std::iota(rows.begin(), rows.end(), Index{0});
  rng.shuffle(rows);
  Matrix out(limit, x.cols());
  for (Index i = 0; i < limit; ++i) out.row(i) = x.row(rows[static_cast<std::size_t>(i)]);
  return out;
}

}  // namespace

Result sinkhorn_divergence(const Matrix& a, const Matrix& b, const SinkhornConfig& config) {
  if (a.cols() != b.cols()) {
    throw std::invalid_argument("sinkhorn_divergence: column count mismatch");
  }
  if (a.rows() == 0 || b.rows() == 0) {
    throw std::invalid_argument("sinkhorn_divergence: empty cloud");
  }
  // One shared stream keeps the subsample identical for equal inputs, so the
  // debiased S(A,A) audit still reads exactly zero on large clouds.
  Rng rng(config.seed);
  Matrix xa = maybe_subsample(a, config.subsample, rng.substream("subsample"));
  Matrix xb = maybe_subsample(b, config.subsample, rng.substream("subsample"));

  Matrix cost_ab = squared_cost(xa, xb);
  double eps = config.epsilon;
  if (eps <= 0.0) {
    std::vector<double> entries(cost_ab.data(), cost_ab.data() + cost_ab.size());
    std::nth_element(entries.begin(), entries.begin() + entries.size() / 2, entries.end());
    eps = std::max(0.05 * entries[entries.size() / 2], 1e-6);
  }

  Result res;
  res.epsilon_used = eps;
  OtResult ab = ot_epsilon(cost_ab, eps, config.max_iters, config.tolerance);
  res.value = ab.value;
  res.converged = ab.converged;
  res.iterations = ab.iterations;
  if (config.debiased) {
    OtResult aa = ot_epsilon(squared_cost(xa, xa), eps, config.max_iters, config.tolerance);
    OtResult bb = ot_epsilon(squared_cost(xb, xb), eps, config.max_iters, config.tolerance);
    res.value -= 0.5 * (aa.value + bb.value);
    res.converged = res.converged && aa.converged && bb.converged;
    res.iterations = std::max({res.iterations, aa.iterations, bb.iterations});
  }
  return res;
}

}  // namespace fairmap::sinkhorn
