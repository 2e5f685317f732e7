#pragma once

#include <functional>
#include <string>
#include <vector>

#include "kinetic/collision.hpp"

namespace kinetic {

// Fluid fields on a uniform 1D slab grid; x is the coordinate that couples to v_1.
struct FluidField {
    std::vector<double> x;
    std::vector<double> rho;
    std::vector<double> theta;
    std::vector<double> p;
    std::vector<Vec3> u;

    int size() const { return static_cast<int>(x.size()); }
    double dx() const { return x[1] - x[0]; }
};

FluidField make_fluid(int nx, double x0, double x1, const std::function<double(double)>& rho,
                      const std::function<Vec3(double)>& u, const std::function<double(double)>& theta,
                      const std::function<double(double)>& p = {});

// Preset fields on [x0, x1]:
//   "trivial"     rho = 1, u = 0, theta = 0
//   "shear"       rho = 0.5 - 0.3x, theta = 0.2 + 0.3x, u = (0.1, 0.2 + 0.4x, -0.1 + 0.25x^2)
//   "compressive" rho = 1 + x, u = (x, 0, 0), theta = 0 (violates both fluid constraints)
FluidField named_fluid(const std::string& name, int nx, double x0, double x1);

// Fourth-order central differences, one-sided fourth order at the two ends.
std::vector<double> derivative4(const std::vector<double>& f, double dx);

// Discrete norm sqrt(dx sum f^2).
double slab_norm(const std::vector<double>& f, double dx);

// sqrt(3/2): coefficient on the normalised e4 of mu^{1/2} (|v|^2 - 3) / 2.
inline constexpr double kThetaToE4 = 1.2247448713915890491;

// (rho, u, theta) as a state in the phi basis mu^{1/2} {1, v, (|v|^2 - 3)/2}.
MacroState fluid_state(const FluidField& f, int i);

// The kinetic field mu^{1/2} (rho + u.v + theta (|v|^2 - 3)/2) at every slab node.
std::vector<Vector> assemble_F1(const FluidField& fluid, const NullBasis& basis);

// Phi-basis coefficients: B_0 = 0, B_i = A_0 A_i, B_4 = A_0 A_4 + sum_i A_i^2.
MacroState compute_B2(const MacroState& A1);

// A phi-basis state as a kinetic field.
Vector phi_field(const MacroState& m, const NullBasis& basis);

// Gamma[e_a, e_b] for the 15 unordered pairs, so Gamma[F, F] of any null-space
// field is a quadratic form in its coefficients.
struct GammaPairTable {
    std::array<std::array<Vector, 5>, 5> pairs;

    Vector quadratic(const std::array<double, 5>& c) const;
};

GammaPairTable make_gamma_pairs(const GammaOperator& gamma_op, const NullBasis& basis);

// Solves L C = r on the orthogonal complement by conjugate gradients in the
// grid inner product; r must already be orthogonal to the null space.
struct CGResult {
    Vector x;
    int iterations = 0;
    double residual = 0.0;  // ||L x - r|| / ||r||
};

CGResult solve_orthogonal(const Matrix& L, const Vector& r, const VelocityGrid& grid, const NullBasis& basis,
                          double tol = 1e-12, int max_iter = 2000);

struct ExpansionCoeffs {
    std::vector<double> x;
    std::vector<Vector> F1;
    std::vector<MacroState> A1;  // phi basis
    std::vector<MacroState> B2;  // phi basis
    std::vector<Vector> C2;
    std::vector<Vector> dF1;     // d/dx F1
    std::vector<Vector> gamma11; // Gamma[F1, F1]
    std::vector<Vector> rhs;     // (I - P)[-v_1 dF1 + Gamma[F1, F1]]
    double cg_residual = 0.0;
};

// Gamma[F, F] for F in the null space through Gamma[F, F] = L[F^2 / mu^{1/2}] / 2,
// which holds for the continuous operator and here uses the same discrete L
// as the solve.
Vector gamma_null_identity(const Vector& F, const Matrix& L, const VelocityGrid& grid);

// With `direct` set, Gamma[F1, F1] comes from the pair table instead.
ExpansionCoeffs build_expansion(const FluidField& fluid, const Matrix& L, const NullBasis& basis,
                                const VelocityGrid& grid, const GammaPairTable* direct = nullptr,
                                double tol = 1e-12);

// ||L[B2 + C2] + v_1 dF1 - Gamma[F1, F1]|| at each slab node, and its maximum.
std::vector<double> order_identity_profile(const ExpansionCoeffs& e, const Matrix& L, const NullBasis& basis,
                                           const VelocityGrid& grid);
double order_identity_residual(const ExpansionCoeffs& e, const Matrix& L, const NullBasis& basis,
                               const VelocityGrid& grid);

double boussinesq_residual(const FluidField& fluid);

// Slab divergence d/dx u_1.
double divergence_residual(const FluidField& fluid);

// gamma1 = <B, L^{-1} B> with B = mu^{1/2} v1 v2 and gamma2 = (2/5) <A, L^{-1} A>
// with A = mu^{1/2} v1 (|v|^2 - 5)/2; both equal 1 for L = I - P.
struct TransportCoefficients {
    double gamma1 = 0.0;
    double gamma2 = 0.0;
};

TransportCoefficients compute_transport_coefficients(const Matrix& L, const VelocityGrid& grid,
                                                     const NullBasis& basis);
TransportCoefficients compute_transport_coefficients(const KernelOperator& op, const NullBasis& basis);

}  // namespace kinetic
