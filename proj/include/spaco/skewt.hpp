#pragma once

#include <vector>

namespace spaco {

// Azzalini skew-t: density 2/omega * t_nu(z) * T_{nu+1}(alpha z sqrt((nu+1)/(nu+z^2)))
// with z = (x - xi)/omega.
struct SkewTParams {
    double xi = 0.0;     // location
    double omega = 1.0;  // scale
    double alpha = 0.0;  // skew
    double nu = 10.0;    // degrees of freedom
};

struct SkewTFit {
    SkewTParams params;
    bool success = false;
    double nll = 0.0;
    double ks_distance = 1.0;  // sup |G_fit - G_empirical| over the draws
};

double skew_t_pdf(const SkewTParams& p, double x);
double skew_t_cdf(const SkewTParams& p, double x);

// Maximum-likelihood fit (Nelder-Mead from moment-based starting values).
SkewTFit fit_skew_t(const std::vector<double>& draws);

}  // namespace spaco
