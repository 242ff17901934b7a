#pragma once

#include "bsnn/verify/gradcheck.hpp"

namespace bsnn::verify {

/// Normal CDF from the Maclaurin series of erf summed in long double. Slow,
/// but independent of the library's erfc-based implementation.
double normal_cdf_series(double z);

/// Max |normal_cdf(z) - normal_cdf_series(z)| (and the same for the upper
/// tail) over [lo, hi] in steps of `step`.
CheckResult check_normal_cdf(double lo = -8.0, double hi = 8.0, double step = 1.0 / 200.0, double tolerance = 1e-10);

}  // namespace bsnn::verify
