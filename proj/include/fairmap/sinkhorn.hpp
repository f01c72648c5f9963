#pragma once

#include <cstdint>

#include "fairmap/data.hpp"

namespace fairmap::sinkhorn {

struct SinkhornConfig {
  // 0 resolves to 0.05 x median pairwise squared distance of the cost matrix.
  double epsilon = 0.0;
  int max_iters = 500;
  double tolerance = 1e-9;  // convergence threshold on dual updates
  bool debiased = true;
  // Quadratic cost: larger clouds are subsampled with a fixed seed.
  Index subsample = 2000;
  std::uint64_t seed = 17;
};

struct Result {
  double value = 0.0;
  bool converged = true;  // best value is still returned on non-convergence
  int iterations = 0;
  double epsilon_used = 0.0;
};

// Entropic-regularised optimal-transport divergence between two point clouds
// under squared-Euclidean cost with uniform weights; log-domain updates.
// Debiased: S(A,B) = OT_e(A,B) - OT_e(A,A)/2 - OT_e(B,B)/2.
Result sinkhorn_divergence(const Matrix& a, const Matrix& b, const SinkhornConfig& config);

}  // namespace fairmap::sinkhorn
