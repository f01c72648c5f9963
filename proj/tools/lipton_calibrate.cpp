// Re-derives the frozen constants of the synthetic hiring generator and
// checks them empirically. The four targets are: balanced groups, overall
// positive rate 0.3425, privileged positive rate 0.27, protected 0.415.
//
//   P(Y=1 | g)  =  P(N(mu_g, sigma) >= tau)  =  1 - Phi((tau - mu_g) / sigma)
//
// With mu_priv = 10, sigma = 5 fixed, tau = mu_priv + sigma * z(0.73); the
// protected mean then follows from the remaining target.

#include <cmath>
#include <cstdio>

#include "fairmap/data.hpp"
#include "fairmap/metrics.hpp"

namespace {

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

// Inverse standard normal CDF by bisection; plenty for calibration.
double normal_quantile(double p) {
  double lo = -10.0, hi = 10.0;
  for (int i = 0; i < 200; ++i) {
    double mid = 0.5 * (lo + hi);
    (normal_cdf(mid) < p ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace

int main() {
  using namespace fairmap;

  const double p_priv = 0.27;
  const double p_overall = 0.3425;
  const double p_prot = 2.0 * p_overall - p_priv;

  double tau = lipton::kPrivWorkMean + lipton::kWorkStd * normal_quantile(1.0 - p_priv);
  double mu_prot = tau - lipton::kWorkStd * normal_quantile(1.0 - p_prot);

  std::printf("targets: P(Y=1)=%.4f  P(Y=1|priv)=%.4f  P(Y=1|prot)=%.4f\n", p_overall,
              p_priv, p_prot);
  std::printf("derived: threshold=%.6f  protected work mean=%.6f\n", tau, mu_prot);
  std::printf("frozen:  threshold=%.6f  protected work mean=%.6f\n",
              lipton::kHireThreshold, lipton::kProtWorkMean);

  std::printf("\nempirical checks over 10 seeds at n=2000:\n");
  double worst_overall = 0.0, worst_priv = 0.0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    Dataset d = generate_lipton(2000, seed);
    IntVector y = d.decisions();
    double overall = 0.0, priv_pos = 0.0, priv_n = 0.0;
    for (Index i = 0; i < y.size(); ++i) {
      overall += y[i];
      if (d.groups[i] == 1) {
        priv_n += 1.0;
        priv_pos += y[i];
      }
    }
    overall /= static_cast<double>(y.size());
    double priv_rate = priv_pos / priv_n;
    worst_overall = std::max(worst_overall, std::abs(overall - p_overall));
    worst_priv = std::max(worst_priv, std::abs(priv_rate - p_priv));
    std::printf("  seed %2llu: P(Y=1)=%.4f  P(Y=1|priv)=%.4f  priv prop=%.4f\n",
                static_cast<unsigned long long>(seed), overall, priv_rate,
                priv_n / static_cast<double>(y.size()));
  }
  std::printf("worst deviations: overall %.4f, privileged %.4f (tolerance 0.02)\n",
              worst_overall, worst_priv);
  return (worst_overall <= 0.02 && worst_priv <= 0.02) ? 0 : 1;
}
