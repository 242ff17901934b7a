#include "bsnn/verify/series.hpp"

#include <cmath>
#include <cstdio>
#include <numbers>

#include "bsnn/flip.hpp"

namespace bsnn::verify {

namespace {

// erf(x) = 2/sqrt(pi) exp(-x^2) sum_n (2x^2)^n x / (1*3*...*(2n+1)); all
// terms share a sign, so there is no cancellation.
long double erf_series(long double x) {
  if (x < 0.0L) return -erf_series(-x);
  const long double x2 = x * x;
  long double term = x, sum = x;
  for (int n = 1; n < 400; ++n) {
    term *= 2.0L * x2 / (2.0L * n + 1.0L);
    sum += term;
    if (term < sum * 1e-21L) break;
  }
  return 2.0L / std::sqrt(std::numbers::pi_v<long double>) * std::exp(-x2) * sum;
}

}  // namespace

double normal_cdf_series(double z) {
  return static_cast<double>(0.5L * (1.0L + erf_series(static_cast<long double>(z) / std::sqrt(2.0L))));
}

CheckResult check_normal_cdf(double lo, double hi, double step, double tolerance) {
  double worst = 0.0, at = lo;
  const auto n = static_cast<long>(std::floor((hi - lo) / step + 0.5));
  for (long k = 0; k <= n; ++k) {
    const double z = lo + static_cast<double>(k) * step;
    const double e = std::max(std::fabs(normal_cdf(z) - normal_cdf_series(z)), std::fabs(normal_sf(z) - normal_cdf_series(-z)));
    if (e > worst) worst = e, at = z;
  }
  char detail[96];
  std::snprintf(detail, sizeof detail, "%ld points on [%g, %g], worst at z=%g", n + 1, lo, hi, at);
  return {"normal_cdf vs series", worst, tolerance, worst <= tolerance, detail};
}

}  // namespace bsnn::verify
