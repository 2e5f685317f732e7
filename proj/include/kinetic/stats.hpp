#pragma once

#include <vector>

namespace kinetic {

struct LinearFit {
    double slope = 0.0;
    double intercept = 0.0;
    double r2 = 0.0;
};

// Ordinary least squares y = intercept + slope x.
LinearFit linear_fit(const std::vector<double>& x, const std::vector<double>& y);

struct Interval {
    double lo = 0.0;
    double hi = 0.0;
};

// Wilson score interval for a binomial proportion at normal quantile z.
Interval wilson_interval(long successes, long trials, double z = 1.959963984540054);

// Upper tail probability of the chi-square distribution.
double chi_square_pvalue(double statistic, int dof);

}  // namespace kinetic
