#include "kinetic/quadrature.hpp"

#include <gsl/gsl_integration.h>

#include <cmath>
#include <numbers>

namespace kinetic {

Rule1D gauss_legendre(int n, double a, double b) {
    if (n < 1) throw DomainError("gauss_legendre: need at least one node");
    gsl_integration_glfixed_table* t = gsl_integration_glfixed_table_alloc(static_cast<size_t>(n));
    Rule1D r;
    r.x.resize(n);
    r.w.resize(n);
    for (int i = 0; i < n; ++i) gsl_integration_glfixed_point(a, b, static_cast<size_t>(i), &r.x[i], &r.w[i], t);
    gsl_integration_glfixed_table_free(t);
    return r;
}

SphereRule product_sphere_rule(int n_polar, int n_azimuth) {
    if (n_polar < 1 || n_azimuth < 3) throw DomainError("product_sphere_rule: rule too small");
    const Rule1D ct = gauss_legendre(n_polar, -1.0, 1.0);
    SphereRule s;
    const double dphi = 2.0 * std::numbers::pi / n_azimuth;
    for (int i = 0; i < n_polar; ++i) {
        const double st = std::sqrt(std::max(0.0, 1.0 - ct.x[i] * ct.x[i]));
        for (int j = 0; j < n_azimuth; ++j) {
            // half-step offset keeps the rule free of the poles' azimuthal degeneracy
            const double phi = (j + 0.5) * dphi;
            s.nodes.emplace_back(st * std::cos(phi), st * std::sin(phi), ct.x[i]);
            s.weights.push_back(ct.w[i] * dphi);
        }
    }
    return s;
}

}  // namespace kinetic
