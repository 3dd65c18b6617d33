#pragma once

#include <cmath>

namespace catgen {

inline double expit(double x) {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    double e = std::exp(x);
    return e / (1.0 + e);
}

inline double logit(double p) { return std::log(p / (1.0 - p)); }

// Standard normal quantile: Acklam's rational approximation polished with
// one Newton step against erfc, good to ~1e-15 on (0,1).
double normal_quantile(double p);

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

} // namespace catgen
