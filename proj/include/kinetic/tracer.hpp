#pragma once

#include <random>
#include <vector>

#include "kinetic/stats.hpp"
#include "kinetic/types.hpp"

namespace kinetic {

// A ball; the only convex domain with a closed-form hitting time needed here.
struct ConvexDomain {
    Vec3 center = Vec3::Zero();
    double radius = 1.0;

    Vec3 normal(const Vec3& x) const { return (x - center).normalized(); }
    double level(const Vec3& x) const { return (x - center).squaredNorm() - radius * radius; }
};

using Rng = std::mt19937_64;

// Backward exit time t_b > 0 with x - eps t_b v on the boundary.
// Interior starts need v != 0; boundary starts need v . n(x) > 0 (not grazing).
double hitting_time(const ConvexDomain& d, const Vec3& x, const Vec3& v, double eps);

// Sample from mu(v) |v . n| on {v . n > 0}: Rayleigh normal speed, Gaussian tangential part.
Vec3 sample_diffuse_velocity(const Vec3& n, Rng& rng);

struct CycleTriple {
    double t = 0.0;  // accumulated backward time
    Vec3 x = Vec3::Zero();
    Vec3 v = Vec3::Zero();
};

// (t_1, x_1, v_1), ..., (t_k, x_k, v_k) with diffuse reflections at each boundary visit.
std::vector<CycleTriple> generate_cycle(const ConvexDomain& d, const Vec3& x, const Vec3& v, int k, double eps,
                                        Rng& rng);

struct ExitEstimate {
    double probability = 0.0;
    Interval ci;
    long samples = 0;
};

// Fraction of k-bounce cycles, started at the north pole with a diffuse velocity,
// whose accumulated time stays below T0 / eps. Samples are split over 16
// independent streams seeded from rng.
ExitEstimate estimate_exit_measure(const ConvexDomain& d, double T0, int k, double eps, long n_samples, Rng& rng);

// Chi-square goodness of fit of the normal speeds of n_samples diffuse draws
// against s e^{-s^2/2}, using n_bins equiprobable bins. Returns the p-value.
double diffuse_normal_pvalue(long n_samples, int n_bins, Rng& rng);

}  // namespace kinetic
