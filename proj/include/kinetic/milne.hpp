#pragma once

#include <array>
#include <functional>
#include <memory>
#include <vector>

#include "kinetic/collision.hpp"
#include "kinetic/geometry.hpp"

namespace kinetic {

// Velocity-space pieces of the layer equation
//   v_eta dg/deta + G1 T1 g + G2 T2 g + L g = S
// on a fixed grid. T_i = v_a Omega_i with Omega_i = v_a d/dv_eta - v_eta d/dv_a
// (a = phi, psi) the rotation generator of the (v_eta, v_a) plane.
// Omega_i is central differences plus a low-rank skew correction making it
// exact on mu^{1/2} times polynomials of degree <= 4 and skew in the grid inner
// product. L is replaced by its conservative projection.
struct MilneOperators {
    std::shared_ptr<const VelocityGrid> grid;
    NullBasis basis;
    Matrix L;      // conservative collision matrix
    Matrix omega1;
    Matrix omega2;
    Matrix T1;
    Matrix T2;
    std::vector<int> plus;   // nodes with v_eta > 0
    std::vector<int> minus;  // minus[k] is the reflection of plus[k]
};

std::shared_ptr<const MilneOperators> make_milne_operators(const KernelOperator& op);

// Geometric clustering toward eta = 0: steps start at wall_step and grow by
// `growth` up to max_step.
struct EtaGridSpec {
    double wall_step = 0.0;  // 0 picks a step resolving the stiffest velocity
    double growth = 1.08;
    double max_step = 0.25;
};

std::vector<double> make_eta_grid(double L, const EtaGridSpec& spec, const MilneOperators& ops);

using SourceFn = std::function<Vector(double)>;

// Boundary data mu^{1/2} exp(-|v - center|^2 / (2 width^2)).
Vector gaussian_bump(const VelocityGrid& grid, const Vec3& center, double width);

// S(eta) = e^{-eta} mu^{1/2} v_eta v_phi, orthogonal to the null space.
SourceFn decaying_shear_source(std::shared_ptr<const VelocityGrid> grid);

struct MilneProblem {
    LayerGeometry geom;
    std::shared_ptr<const MilneOperators> ops;
    Vector h;             // boundary data on the full grid; only v_eta > 0 is used
    SourceFn S;           // may be empty for S = 0
    double decay_rate_K = 1.0;
};

struct MilneSolution {
    std::vector<double> eta;
    std::vector<Vector> g;
    std::vector<MacroState> q_profile;
    std::vector<Vector> w_profile;
    std::vector<double> g_norm;       // grid L2 norm of g at each node
    double scheme_residual = 0.0;     // max relative residual of the discrete equations
    double reflection_error = 0.0;    // max |g(L, v) - g(L, Rv)|
    double sup_norm = 0.0;
};

// Direct solve of the discretised boundary-value problem. Each problem in the
// batch shares the operator and the eta grid, so the sweep is done once.
struct MilneBatchProblem {
    Vector h;
    SourceFn S;
};

std::vector<MilneSolution> solve_milne_batch(const LayerGeometry& geom, std::shared_ptr<const MilneOperators> ops,
                                             const std::vector<MilneBatchProblem>& problems,
                                             const EtaGridSpec& spec = {}, double tol = 1e-6);

MilneSolution solve_milne(const MilneProblem& problem, const EtaGridSpec& spec = {}, double tol = 1e-6);

// max over eta of |<v_eta e_j, g>| for j = 0, 2, 3, 4. Throws DomainError if
// the supplied source is not orthogonal to the null space.
std::array<double, 4> orthogonality_residuals(const MilneSolution& sol, const MilneOperators& ops,
                                              const SourceFn& S = {});

// <v_eta e_j, g> at every node, j = 0, 2, 3, 4.
std::vector<std::array<double, 4>> orthogonality_profile(const MilneSolution& sol, const MilneOperators& ops);

// <e_1, g>(eta)
std::vector<double> flux_q1(const MilneSolution& sol, const MilneOperators& ops);

struct BetaSystem {
    Eigen::Matrix4d A;
    Eigen::Matrix4d B1;
    Eigen::Matrix4d B2;
    double condition = 0.0;
};

BetaSystem assemble_beta_system(const MilneOperators& ops);

struct BetaProfile {
    std::vector<Eigen::Vector4d> beta;
    std::vector<Eigen::Vector4d> q;  // A^{-1} beta: slots 0, 2, 3, 4
    double max_rel_mismatch = 0.0;   // against the solver's q profile
};

// Integrates beta' = (G1 B1 + G2 B2) A^{-1} beta + D + E - F' from
// theta = <v_eta^2 e_j, g>(0) with the trapezoidal rule on the solver's nodes.
BetaProfile solve_beta_ode(const BetaSystem& sys, const MilneSolution& sol, const MilneOperators& ops,
                           const LayerGeometry& geom, const SourceFn& S = {});

// Far-field limit: q averaged over [0.8 L, L], cross-checked against the same
// average of the beta-equation reconstruction.
struct LimitEstimate {
    MacroState g_L;
    MacroState from_beta;
    double discrepancy = 0.0;
};

LimitEstimate extract_limit_checked(const MilneSolution& sol, const MilneOperators& ops, const LayerGeometry& geom,
                                    const SourceFn& S = {}, double tol = 1e-6);
MacroState extract_limit(const MilneSolution& sol);

// Coefficients (A, B1, B2, B3, C) of
//   g2 = mu^{1/2} (A v_eta + B1 + B2 v_eta v_phi + B3 v_eta v_psi + C v_eta |v|^2)
// solving the 5x5 moment system backward from zero data at L.
struct KernelAnsatz {
    std::vector<double> eta;
    std::vector<std::array<double, 5>> coeffs;
    double residual = 0.0;
};

KernelAnsatz solve_kernel_ansatz(const std::function<std::array<double, 5>(double)>& S_Q, const LayerGeometry& geom,
                                 int n_out = 201, double tol = 1e-10);

struct DecayFit {
    double K0 = 0.0;
    double r_squared = 0.0;
};

DecayFit fit_decay(const std::vector<double>& eta, const std::vector<double>& norms, double lo, double hi);
DecayFit fit_decay(const MilneSolution& sol, double L);

struct CorrectorResult {
    Eigen::Matrix4d M;             // columns: limits of the e0, e2, e3, e4 problems
    double m_minus_identity = 0.0; // infinity norm of M - I
    MacroState target;             // far-field limit of the uncorrected problem
    MacroState tilde_h;            // b[0] is always zero
    MilneSolution uncorrected;
    MilneSolution corrected;
    MacroState corrected_limit;
    DecayFit corrected_decay;      // left at zero when the corrected field vanishes identically
    bool corrected_is_zero = false;
};

CorrectorResult build_corrector(const MilneProblem& problem, const EtaGridSpec& spec = {}, double tol = 1e-6);

}  // namespace kinetic
