#include "kinetic/stats.hpp"

#include <gsl/gsl_cdf.h>
#include <gsl/gsl_fit.h>

#include <cmath>

#include "kinetic/types.hpp"

namespace kinetic {

LinearFit linear_fit(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 2) throw DomainError("linear_fit: need two or more paired samples");
    double c0, c1, cov00, cov01, cov11, sumsq;
    gsl_fit_linear(x.data(), 1, y.data(), 1, x.size(), &c0, &c1, &cov00, &cov01, &cov11, &sumsq);
    double mean = 0.0;
    for (double v : y) mean += v;
    mean /= static_cast<double>(y.size());
    double tss = 0.0;
    for (double v : y) tss += (v - mean) * (v - mean);
    LinearFit f;
    f.slope = c1;
    f.intercept = c0;
    f.r2 = tss > 0.0 ? 1.0 - sumsq / tss : 1.0;
    return f;
}

Interval wilson_interval(long successes, long trials, double z) {
    if (trials <= 0 || successes < 0 || successes > trials) throw DomainError("wilson_interval: bad counts");
    const double n = static_cast<double>(trials);
    const double p = successes / n;
    const double z2 = z * z;
    const double centre = (p + z2 / (2 * n)) / (1 + z2 / n);
    const double half = z * std::sqrt(p * (1 - p) / n + z2 / (4 * n * n)) / (1 + z2 / n);
    // The bounds are exactly 0 and 1 at the extremes; the formula only gets there up to rounding.
    const double lo = successes == 0 ? 0.0 : std::max(0.0, centre - half);
    const double hi = successes == trials ? 1.0 : std::min(1.0, centre + half);
    return {lo, hi};
}

double chi_square_pvalue(double statistic, int dof) {
    if (dof < 1) throw DomainError("chi_square_pvalue: dof must be positive");
    return gsl_cdf_chisq_Q(statistic, dof);
}

}  // namespace kinetic
