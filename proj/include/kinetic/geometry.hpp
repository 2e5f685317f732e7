#pragma once

#include <optional>
#include <vector>

#include "kinetic/collision.hpp"
#include "kinetic/types.hpp"

namespace kinetic {

// Boundary layer of a curved slab in the stretched normal variable eta in [0, L],
// L = epsilon^{-1/2}. Velocities are (v_eta, v_phi, v_psi).
struct LayerGeometry {
    double R1 = 1.0;
    double R2 = 1.0;
    double epsilon = 0.01;
    double L = 10.0;

    double radius(int i) const { return i == 1 ? R1 : R2; }
};

// Requires sqrt(epsilon) <= R_i / 2 so that R_i - epsilon*eta >= R_i / 2 on [0, L].
LayerGeometry make_layer_geometry(double R1, double R2, double epsilon);

// W_i(eta) = ln(R_i / (R_i - epsilon eta)).
double w_potential(const LayerGeometry& g, int i, double eta);

// G_i(eta) = -epsilon / (R_i - epsilon eta) = -dW_i/deta.
double force(const LayerGeometry& g, int i, double eta);

// zeta = sqrt(|v|^2 - e^{-2W_1} v_phi^2 - e^{-2W_2} v_psi^2), constant along characteristics.
double zeta(const LayerGeometry& g, double eta, const Vec3& v);

struct CharState {
    double eta = 0.0;
    Vec3 v = Vec3::Zero();
    double E1 = 0.0;
    double E2 = 0.0;
    double E3 = 0.0;
};

CharState make_char_state(const LayerGeometry& g, double eta, const Vec3& v);

// Velocity reached at eta_target along the characteristic through (eta, v),
// with the normal component returned non-negative.
Vec3 transport_state(const LayerGeometry& g, double eta, const Vec3& v, double eta_target);

// For v_eta < 0: the point eta+ in (eta, L] where the normal velocity vanishes,
// or nothing when the characteristic reaches L first.
std::optional<double> turning_point(const LayerGeometry& g, double eta, const Vec3& v);

// H = int_{eta_lo}^{eta_hi} nu(v'(y)) / v'_eta(y) dy along the characteristic
// through (eta_lo, v), with nu the unit-variance collision frequency.
double damping_integral(const LayerGeometry& g, double eta_hi, double eta_lo, const Vec3& v,
                        const CollisionParams& params);

struct TracePath {
    std::vector<CharState> states;
    double drift_E1 = 0.0;  // max relative deviation from the initial value
    double drift_E2 = 0.0;
    double drift_E3 = 0.0;
    double drift_zeta = 0.0;
    bool left_layer = false;  // stopped early because eta left [0, L]
};

// Classical RK4 on deta/ds = v_eta, dv_eta/ds = G1 v_phi^2 + G2 v_psi^2,
// dv_phi/ds = -G1 v_eta v_phi, dv_psi/ds = -G2 v_eta v_psi.
TracePath trace_characteristic(const LayerGeometry& g, const CharState& start, double ds, int n_steps,
                               double drift_limit = 1e-6);

// The transport operator applied to zeta by central differences with step h.
double transport_of_zeta(const LayerGeometry& g, double eta, const Vec3& v, double h = 1e-4);

}  // namespace kinetic
