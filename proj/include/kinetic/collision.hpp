#pragma once

#include <array>
#include <functional>
#include <memory>
#include <utility>
#include <vector>

#include "kinetic/quadrature.hpp"
#include "kinetic/types.hpp"

namespace kinetic {

enum class MuNormalization {
    boundary_measure,  // (2 pi)^-1 e^{-|v|^2/2}: unit outgoing flux through a wall
    unit_mass          // (2 pi)^-3/2 e^{-|v|^2/2}: unit total mass
};

struct CollisionParams {
    double q0 = 1.0;
    MuNormalization mu_normalization = MuNormalization::unit_mass;

    void validate() const;
};

double maxwellian(const Vec3& v, const CollisionParams& params);

// Tensor-product velocity grid on [-v_max, v_max]^3 with cell-centred nodes.
// The outermost nodes of each axis carry small weight corrections so that the
// one-dimensional Gaussian moments of degree <= exact_degree are reproduced;
// this absorbs the mass lost to truncation.
struct VelocityGrid {
    int per_axis_count = 0;
    double v_max = 0.0;
    double h = 0.0;
    int exact_degree = 0;
    bool tail_corrected = false;
    std::vector<double> axis;
    std::vector<double> axis_weights;
    std::vector<Vec3> nodes;
    std::vector<double> weights;

    int size() const { return static_cast<int>(nodes.size()); }
    int index(int i, int j, int k) const { return (i * per_axis_count + j) * per_axis_count + k; }
    std::array<int, 3> triple(int idx) const {
        const int n = per_axis_count;
        return {idx / (n * n), (idx / n) % n, idx % n};
    }
    double dot(const Vector& f, const Vector& g) const;
    double norm(const Vector& f) const;
    Vector sample(const auto& fn) const {
        Vector out(size());
        for (int i = 0; i < size(); ++i) out[i] = fn(nodes[i]);
        return out;
    }
};

VelocityGrid make_velocity_grid(int per_axis_count, double v_max, int exact_degree = 8);

struct MomentReport {
    std::array<double, 4> values{};  // quadrature of |v|^{2p} mu, p = 0..3
    std::array<double, 4> exact{1.0, 3.0, 15.0, 105.0};
    double max_rel_error = 0.0;
    bool weights_positive = true;
};

MomentReport gaussian_moments(const VelocityGrid& grid);

// Closed-form hard-sphere quantities in the scaling where the collision
// invariants are weighted by e^{-|v|^2/2}.
double collision_frequency(const Vec3& v, const CollisionParams& params);
double kernel_k1(const Vec3& u, const Vec3& v, const CollisionParams& params);
double kernel_k2(const Vec3& u, const Vec3& v, const CollisionParams& params);
double kernel_value(const Vec3& u, const Vec3& v, const CollisionParams& params);

// The same operator rescaled to act on perturbations of the unit-variance
// Maxwellian: nu(v) = collision_frequency(v / sqrt 2), k(u, v) = 2^{-3/2} k(u / sqrt 2, v / sqrt 2).
double collision_frequency_unit(double speed, double q0);
double kernel_unit(const Vec3& u, const Vec3& v, double q0);

struct MacroState {
    double a = 0.0;
    Vec3 b = Vec3::Zero();
    double c = 0.0;

    std::array<double, 5> coeffs() const { return {a, b[0], b[1], b[2], c}; }
    static MacroState from_coeffs(const std::array<double, 5>& x) { return {x[0], Vec3(x[1], x[2], x[3]), x[4]}; }
    double max_abs() const;
};

// e0 = mu^{1/2}, e_{1..3} = mu^{1/2} v, e4 = mu^{1/2} (|v|^2 - 3) / sqrt 6, unit-mass mu.
struct NullBasis {
    std::array<Vector, 5> vectors;
    Eigen::Matrix<double, 5, 5> gram;
    Eigen::Matrix<double, 5, 5> gram_inverse;

    Vector reconstruct(const MacroState& m) const;
};

NullBasis make_null_basis(const VelocityGrid& grid);

std::pair<MacroState, Vector> project_null(const Vector& f, const NullBasis& basis, const VelocityGrid& grid);

// Removes the null-space component: f - P f.
Vector project_orthogonal(const Vector& f, const NullBasis& basis, const VelocityGrid& grid);

// Singular part of the kernel near the diagonal: the self node is omitted and
// the missing weight is restored by a locally corrected stencil. Each pair of
// nodes gets the correction calibrated for the kernel frozen at the pair
// midpoint, against spherical-coordinate integrals of the kernel times
// Gaussian-windowed monomials; the corrected matrix stays symmetric.
struct SingularCorrection {
    double window = 3.5;    // Gaussian window width in units of h
    int degree = 8;         // highest monomial degree in the calibration
    int half_width = 3;     // stencil is (2*half_width+1)^3
    double cutoff = 6.0;    // windows are truncated at cutoff*window*h
    int radial_nodes = 64;
    int polar_nodes = 96;
    int azimuth_nodes = 16;
};

class CorrectionTable;

struct KernelOperator {
    std::shared_ptr<const VelocityGrid> grid;
    CollisionParams params;
    Vector nu_diag;
    Matrix k_matrix;  // K_ij = w_j k(v_j, v_i) plus diagonal-stencil corrections

    int size() const { return static_cast<int>(nu_diag.size()); }
    Vector apply(const Vector& f) const;
    // Pre-weighting kernel values k_ij = K_ij / w_j.
    double kernel_entry(int i, int j) const { return k_matrix(i, j) / grid->weights[j]; }
};

KernelOperator assemble_collision(std::shared_ptr<const VelocityGrid> grid, const CollisionParams& params,
                                  const SingularCorrection& corr = {});

Vector apply_L(const KernelOperator& op, const Vector& f);

// Rows of the assembled kernel matrix evaluated one at a time, for grids too
// large to store. assemble_collision is built from the same rows.
class RowEvaluator {
public:
    RowEvaluator(std::shared_ptr<const VelocityGrid> grid, const CollisionParams& params,
                 const SingularCorrection& corr = {});
    ~RowEvaluator();
    RowEvaluator(const RowEvaluator&) = delete;
    RowEvaluator& operator=(const RowEvaluator&) = delete;

    // Fills row i of K (length N, already weighted) including corrections.
    void kernel_row(int i, double* row) const;
    double nu(int i) const;
    const VelocityGrid& grid() const { return *grid_; }

private:
    std::shared_ptr<const VelocityGrid> grid_;
    CollisionParams params_;
    std::unique_ptr<CorrectionTable> table_;
};

// Relative null residuals max_k ||L e_k|| / ||e_k|| computed row by row on the
// canonical nodes of the octahedral symmetry group (no dense matrix needed).
struct NullResidualReport {
    std::array<double, 5> relative{};  // e0, e1, e2, e3, e4 (e1..e3 share a value by symmetry)
    double max_relative = 0.0;
};

NullResidualReport null_residuals_matrix_free(std::shared_ptr<const VelocityGrid> grid, const CollisionParams& params,
                                              const SingularCorrection& corr = {});

NullResidualReport null_residuals(const KernelOperator& op, const NullBasis& basis);

// Projected operator (I-P) L (I-P); it annihilates the discrete null basis
// exactly and keeps the same action on the orthogonal complement up to the
// null residual of L.
Matrix conservative_matrix(const KernelOperator& op, const NullBasis& basis);

struct SpectralGapReport {
    double lambda_min = 0.0;  // smallest eigenvalue of L restricted to the orthogonal complement
    double nu_min = 0.0;      // min of the collision frequency over the grid
    int iterations = 0;
    bool converged = false;
};

// Lanczos iteration with full reorthogonalisation on the W-symmetric matrix
// restricted to the orthogonal complement of the null basis.
SpectralGapReport spectral_gap(const KernelOperator& op, const NullBasis& basis, int max_iter = 300, double tol = 1e-9,
                               unsigned seed = 7);

// Relative adjointness defect |<Lf,g> - <f,Lg>| / (||f|| ||g||).
double adjointness_defect(const KernelOperator& op, const Vector& f, const Vector& g);

// Bounds c1 <v> <= nu(v) <= c2 <v> over the grid.
std::pair<double, double> collision_frequency_bounds(const KernelOperator& op);

// Symmetrised bilinear collision form Gamma[f, g] = mu^{-1/2} Q(mu^{1/2} f, mu^{1/2} g).
// The post-collision velocities are generated from sphere-rule directions and
// their contributions are deposited back on the grid with stencils that keep
// mass, momentum and energy exact, so <Gamma[f,g], e_k> vanishes to rounding.
struct GammaOperator {
    std::shared_ptr<const VelocityGrid> grid;
    CollisionParams params;
    SphereRule sphere;
};

GammaOperator make_gamma(std::shared_ptr<const VelocityGrid> grid, const CollisionParams& params, int n_polar = 6,
                         int n_azimuth = 12);

Vector gamma(const GammaOperator& op, const Vector& f, const Vector& g);

// max over random pairs and k of |<Gamma[f,g], e_k>| / (||f|| ||g||), with f, g
// Gaussian noise times mu^{1/2}.
double gamma_orthogonality(const GammaOperator& op, const NullBasis& basis, int n_pairs, unsigned long long seed);

// dg/dtau = -L g + S(tau) integrated exactly on the eigenbasis of the
// symmetrised matrix, with the source frozen at each step midpoint.
struct InitialLayerResult {
    std::vector<double> tau;
    std::vector<Vector> trajectory;
    std::vector<double> orth_norm;  // ||g - P g|| at each sample
    MacroState g_inf;
    Vector g_final;
    double decay_rate = 0.0;
    double decay_r2 = 0.0;
    bool converged = false;
};

InitialLayerResult initial_layer_solve(const Vector& z, const std::function<Vector(double)>& S, const Matrix& L,
                                       const VelocityGrid& grid, const NullBasis& basis, double tau_max, double dt,
                                       double tol = 1e-6);

struct KernelIntegralResult {
    double value = 0.0;
    bool divergent = false;  // exponent quadratic form not negative definite
};

KernelIntegralResult weighted_kernel_integral(const Vec3& v, double delta, double rho, double theta,
                                              const CollisionParams& params);

}  // namespace kinetic
