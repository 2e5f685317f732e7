#pragma once

#include <vector>

#include "kinetic/types.hpp"

namespace kinetic {

struct Rule1D {
    std::vector<double> x;
    std::vector<double> w;
};

// Gauss-Legendre rule on [a, b].
Rule1D gauss_legendre(int n, double a, double b);

// Positive-weight rule on the unit sphere; weights sum to 4*pi.
struct SphereRule {
    std::vector<Vec3> nodes;
    std::vector<double> weights;
};

// Product rule: Gauss-Legendre in cos(theta) times a uniform azimuthal grid.
// Exact for spherical polynomials up to degree min(2*n_polar-1, n_azimuth-1).
SphereRule product_sphere_rule(int n_polar, int n_azimuth);

}  // namespace kinetic
