#include <gsl/gsl_errno.h>
#include <gsl/gsl_integration.h>

#include <cmath>
#include <limits>
#include <numbers>

#include "kinetic/collision.hpp"

namespace kinetic {

namespace {

struct WeightedKernel {
    double speed;
    double delta;
    double rho;
    double theta;
    double q0;
    double r = 0.0;  // current radius |u - v|
};

// Integrand at (r, t) where u = v + r w and t = cos(angle between w and v).
double integrand(const WeightedKernel& p, double t) {
    const double r = p.r;
    if (r == 0.0) return 0.0;
    const double v2 = p.speed * p.speed;
    const double u2 = v2 + 2.0 * p.speed * r * t + r * r;
    const double s = 2.0 * p.speed * t + r;  // (|u|^2 - |v|^2) / r
    const double pi = std::numbers::pi;
    const double k2 = 2.0 * pi * p.q0 / r * std::exp(-0.25 * r * r - 0.25 * s * s + p.delta * r * r + p.rho * (v2 - u2));
    const double k1 = pi * p.q0 * r * std::exp(-0.5 * (u2 + v2) + p.delta * r * r + p.rho * (v2 - u2));
    const double bracket = std::pow((1.0 + v2) / (1.0 + u2), 0.5 * p.theta);
    return 2.0 * pi * r * r * std::abs(k2 - k1) * bracket;
}

double inner(double t, void* data) { return integrand(*static_cast<WeightedKernel*>(data), t); }

struct Outer {
    WeightedKernel* p;
    gsl_integration_workspace* ws;
};

double outer(double r, void* data) {
    auto* o = static_cast<Outer*>(data);
    o->p->r = r;
    gsl_function f{&inner, o->p};
    double val = 0.0, err = 0.0;
    gsl_integration_qag(&f, -1.0, 1.0, 0.0, 1e-10, 1000, GSL_INTEG_GAUSS31, o->ws, &val, &err);
    return val;
}

}  // namespace

KernelIntegralResult weighted_kernel_integral(const Vec3& v, double delta, double rho, double theta,
                                              const CollisionParams& params) {
    params.validate();
    if (rho < 0.0 || rho >= 0.25) throw DomainError("weighted_kernel_integral: rho must lie in [0, 1/4)");
    if (theta < 0.0 || delta < 0.0) throw DomainError("weighted_kernel_integral: theta and delta must be >= 0");
    KernelIntegralResult res;
    // In (|w|, (|u|^2-|v|^2)/|w|) the exponent is a quadratic form with
    // matrix [[delta - 1/4, -rho/2], [-rho/2, -1/4]]; it must be negative definite.
    if (delta + rho * rho >= 0.25) {
        res.divergent = true;
        res.value = std::numeric_limits<double>::infinity();
        return res;
    }
    WeightedKernel p{v.norm(), delta, rho, theta, params.q0};
    gsl_integration_workspace* wi = gsl_integration_workspace_alloc(1000);
    gsl_integration_workspace* wo = gsl_integration_workspace_alloc(1000);
    gsl_error_handler_t* old = gsl_set_error_handler_off();
    Outer o{&p, wi};
    gsl_function f{&outer, &o};
    double val = 0.0, err = 0.0;
    const int status = gsl_integration_qagiu(&f, 0.0, 0.0, 1e-8, 1000, wo, &val, &err);
    gsl_set_error_handler(old);
    gsl_integration_workspace_free(wi);
    gsl_integration_workspace_free(wo);
    if (status != GSL_SUCCESS && status != GSL_EROUND) throw NumericalFailure("weighted_kernel_integral: quadrature failed");
    res.value = val;
    return res;
}

}  // namespace kinetic
