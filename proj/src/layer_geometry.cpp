#include <gsl/gsl_errno.h>
#include <gsl/gsl_integration.h>
#include <gsl/gsl_roots.h>

#include <algorithm>
#include <cmath>

#include "kinetic/geometry.hpp"

namespace kinetic {

LayerGeometry make_layer_geometry(double R1, double R2, double epsilon) {
    if (!(R1 > 0.0) || !(R2 > 0.0)) throw DomainError("layer geometry: radii must be positive");
    if (!(epsilon > 0.0) || !(epsilon < 1.0)) throw DomainError("layer geometry: epsilon must lie in (0, 1)");
    const double root = std::sqrt(epsilon);
    if (root > 0.5 * R1 || root > 0.5 * R2)
        throw DomainError("layer geometry: sqrt(epsilon) must not exceed R_i / 2");
    return {R1, R2, epsilon, 1.0 / root};
}

double w_potential(const LayerGeometry& g, int i, double eta) {
    const double R = g.radius(i);
    if (R - g.epsilon * eta <= 0.0) throw DomainError("w_potential: R_i - epsilon eta must be positive");
    return std::log(R / (R - g.epsilon * eta));
}

double force(const LayerGeometry& g, int i, double eta) {
    if (g.radius(i) - g.epsilon * eta <= 0.0) throw DomainError("force: R_i - epsilon eta must be positive");
    return -g.epsilon / (g.radius(i) - g.epsilon * eta);
}

namespace {

// e^{-W_i(eta)} = (R_i - epsilon eta) / R_i
double shrink(const LayerGeometry& g, int i, double eta) {
    const double R = g.radius(i);
    return (R - g.epsilon * eta) / R;
}

double zeta_squared(const LayerGeometry& g, double eta, const Vec3& v) {
    const double a1 = shrink(g, 1, eta), a2 = shrink(g, 2, eta);
    return v.squaredNorm() - a1 * a1 * v[1] * v[1] - a2 * a2 * v[2] * v[2];
}

// v_eta'^2 at eta_target for the characteristic through (eta, v).
double normal_radicand(const LayerGeometry& g, double eta, const Vec3& v, double target) {
    const double vp = v[1] * shrink(g, 1, eta) / shrink(g, 1, target);
    const double vs = v[2] * shrink(g, 2, eta) / shrink(g, 2, target);
    return v.squaredNorm() - vp * vp - vs * vs;
}

}  // namespace

double zeta(const LayerGeometry& g, double eta, const Vec3& v) {
    const double rad = zeta_squared(g, eta, v);
    if (rad > 1e-14) return std::sqrt(rad);
    if (rad < -1e-14 * std::max(1.0, v.squaredNorm())) throw DomainError("zeta: negative radicand");
    return 0.0;  // grazing set
}

CharState make_char_state(const LayerGeometry& g, double eta, const Vec3& v) {
    return {eta, v, v.squaredNorm(), v[1] * shrink(g, 1, eta), v[2] * shrink(g, 2, eta)};
}

Vec3 transport_state(const LayerGeometry& g, double eta, const Vec3& v, double eta_target) {
    if (eta_target < 0.0 || eta_target > g.L) throw DomainError("transport_state: target outside [0, L]");
    const double vp = v[1] * shrink(g, 1, eta) / shrink(g, 1, eta_target);
    const double vs = v[2] * shrink(g, 2, eta) / shrink(g, 2, eta_target);
    const double rad = v.squaredNorm() - vp * vp - vs * vs;
    const double scale = std::max(1.0, v.squaredNorm());
    if (rad < -1e-13 * scale) throw DomainError("transport_state: target not reachable along the characteristic");
    return {std::sqrt(std::max(rad, 0.0)), vp, vs};
}

std::optional<double> turning_point(const LayerGeometry& g, double eta, const Vec3& v) {
    if (!(v[0] < 0.0)) throw DomainError("turning_point: requires v_eta < 0");
    if (normal_radicand(g, eta, v, g.L) >= 0.0) return std::nullopt;

    struct Ctx {
        const LayerGeometry* g;
        double eta;
        Vec3 v;
    } ctx{&g, eta, v};
    gsl_function f{[](double y, void* p) {
                       auto* c = static_cast<Ctx*>(p);
                       return normal_radicand(*c->g, c->eta, c->v, y);
                   },
                   &ctx};
    gsl_root_fsolver* s = gsl_root_fsolver_alloc(gsl_root_fsolver_brent);
    gsl_root_fsolver_set(s, &f, eta, g.L);
    double root = eta;
    for (int it = 0; it < 200; ++it) {
        gsl_root_fsolver_iterate(s);
        root = gsl_root_fsolver_root(s);
        const double lo = gsl_root_fsolver_x_lower(s), hi = gsl_root_fsolver_x_upper(s);
        if (gsl_root_test_interval(lo, hi, 0.0, 1e-15) == GSL_SUCCESS) break;
    }
    gsl_root_fsolver_free(s);
    return root;
}

double damping_integral(const LayerGeometry& g, double eta_hi, double eta_lo, const Vec3& v,
                        const CollisionParams& params) {
    params.validate();
    if (!(eta_lo <= eta_hi) || eta_lo < 0.0 || eta_hi > g.L)
        throw DomainError("damping_integral: need 0 <= eta_lo <= eta_hi <= L");
    if (eta_hi == eta_lo) return 0.0;

    // y = lo + (hi - lo)(3 s^2 - 2 s^3) has vanishing derivative at both ends,
    // which cancels the inverse square root of a turning point.
    struct Ctx {
        const LayerGeometry* g;
        const CollisionParams* params;
        Vec3 v;
        double lo, hi;
    } ctx{&g, &params, v, eta_lo, eta_hi};
    auto integrand = [](double s, void* p) {
        auto* c = static_cast<Ctx*>(p);
        const double span = c->hi - c->lo;
        const double y = c->lo + span * s * s * (3.0 - 2.0 * s);
        const double dy = 6.0 * span * s * (1.0 - s);
        if (dy == 0.0) return 0.0;
        const Vec3 w = transport_state(*c->g, c->lo, c->v, std::clamp(y, c->lo, c->hi));
        if (w[0] <= 0.0) return 0.0;
        return collision_frequency_unit(w.norm(), c->params->q0) / w[0] * dy;
    };
    gsl_function f{integrand, &ctx};
    gsl_integration_workspace* ws = gsl_integration_workspace_alloc(2000);
    gsl_error_handler_t* old = gsl_set_error_handler_off();
    double val = 0.0, err = 0.0;
    const int status = gsl_integration_qags(&f, 0.0, 1.0, 0.0, 1e-12, 2000, ws, &val, &err);
    gsl_set_error_handler(old);
    gsl_integration_workspace_free(ws);
    if (status != GSL_SUCCESS && status != GSL_EROUND) throw NumericalFailure("damping_integral: quadrature failed");
    return val;
}

namespace {

struct Phase {
    double eta;
    Vec3 v;
};

Phase rhs(const LayerGeometry& g, const Phase& p) {
    const double G1 = force(g, 1, p.eta), G2 = force(g, 2, p.eta);
    const Vec3& v = p.v;
    return {v[0], Vec3(G1 * v[1] * v[1] + G2 * v[2] * v[2], -G1 * v[0] * v[1], -G2 * v[0] * v[2])};
}

Phase axpy(const Phase& p, double a, const Phase& d) { return {p.eta + a * d.eta, p.v + a * d.v}; }

double rel(double x, double x0) { return std::abs(x - x0) / std::max(std::abs(x0), 1e-300); }

}  // namespace

TracePath trace_characteristic(const LayerGeometry& g, const CharState& start, double ds, int n_steps,
                               double drift_limit) {
    if (!(ds > 0.0) || n_steps < 0) throw DomainError("trace_characteristic: need ds > 0 and n_steps >= 0");
    if (start.eta < 0.0 || start.eta > g.L) throw DomainError("trace_characteristic: start outside [0, L]");
    TracePath path;
    const CharState s0 = make_char_state(g, start.eta, start.v);
    const double z0 = zeta(g, s0.eta, s0.v);
    path.states.push_back(s0);
    Phase p{s0.eta, s0.v};
    for (int n = 0; n < n_steps; ++n) {
        const Phase k1 = rhs(g, p);
        const Phase k2 = rhs(g, axpy(p, 0.5 * ds, k1));
        const Phase k3 = rhs(g, axpy(p, 0.5 * ds, k2));
        const Phase k4 = rhs(g, axpy(p, ds, k3));
        Phase next{p.eta + ds / 6.0 * (k1.eta + 2 * k2.eta + 2 * k3.eta + k4.eta),
                   p.v + ds / 6.0 * (k1.v + 2 * k2.v + 2 * k3.v + k4.v)};
        if (next.eta < 0.0 || next.eta > g.L) {
            path.left_layer = true;
            break;
        }
        p = next;
        const CharState s = make_char_state(g, p.eta, p.v);
        path.drift_E1 = std::max(path.drift_E1, rel(s.E1, s0.E1));
        path.drift_E2 = std::max(path.drift_E2, s0.E2 == 0.0 ? std::abs(s.E2) : rel(s.E2, s0.E2));
        path.drift_E3 = std::max(path.drift_E3, s0.E3 == 0.0 ? std::abs(s.E3) : rel(s.E3, s0.E3));
        path.drift_zeta = std::max(path.drift_zeta, z0 == 0.0 ? zeta(g, s.eta, s.v) : rel(zeta(g, s.eta, s.v), z0));
        path.states.push_back(s);
        const double worst = std::max({path.drift_E1, path.drift_E2, path.drift_E3});
        if (worst > drift_limit) throw NumericalFailure("trace_characteristic: conservation drift above limit");
    }
    return path;
}

double transport_of_zeta(const LayerGeometry& g, double eta, const Vec3& v, double h) {
    auto z = [&](double e, const Vec3& w) { return zeta(g, e, w); };
    auto d_eta = (z(eta + h, v) - z(eta - h, v)) / (2 * h);
    Vec3 dv;
    for (int k = 0; k < 3; ++k) {
        Vec3 up = v, dn = v;
        up[k] += h;
        dn[k] -= h;
        dv[k] = (z(eta, up) - z(eta, dn)) / (2 * h);
    }
    const double G1 = force(g, 1, eta), G2 = force(g, 2, eta);
    return v[0] * d_eta + G1 * (v[1] * v[1] * dv[0] - v[0] * v[1] * dv[1]) +
           G2 * (v[2] * v[2] * dv[0] - v[0] * v[2] * dv[2]);
}

}  // namespace kinetic
