#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "kinetic/collision.hpp"

namespace kinetic {

namespace {

// Quadratic Lagrange weights on the three nodes around the nearest one. They
// reproduce 1, x and x^2, so a deposit keeps mass, momentum and energy.
struct AxisStencil {
    int first;
    double w[3];
};

AxisStencil axis_stencil(const VelocityGrid& g, double p) {
    const int n = g.per_axis_count;
    const double s = (p - g.axis[0]) / g.h;
    int i0 = static_cast<int>(std::lround(s));
    i0 = std::clamp(i0, 1, n - 2);
    const double t = s - i0;
    return {i0 - 1, {0.5 * t * (t - 1.0), 1.0 - t * t, 0.5 * t * (t + 1.0)}};
}

void deposit(const VelocityGrid& g, const Vec3& p, double mass, double* out) {
    const AxisStencil sx = axis_stencil(g, p[0]);
    const AxisStencil sy = axis_stencil(g, p[1]);
    const AxisStencil sz = axis_stencil(g, p[2]);
    for (int a = 0; a < 3; ++a) {
        const double ma = mass * sx.w[a];
        for (int b = 0; b < 3; ++b) {
            const double mb = ma * sy.w[b];
            double* row = out + g.index(sx.first + a, sy.first + b, sz.first);
            row[0] += mb * sz.w[0];
            row[1] += mb * sz.w[1];
            row[2] += mb * sz.w[2];
        }
    }
}

}  // namespace

GammaOperator make_gamma(std::shared_ptr<const VelocityGrid> grid, const CollisionParams& params, int n_polar,
                         int n_azimuth) {
    params.validate();
    if (grid->per_axis_count < 3) throw DomainError("gamma: grid needs at least 3 nodes per axis");
    // Antipodal symmetry of the rule (even azimuth count) is what makes the
    // symmetric pair sum conservative.
    if (n_azimuth % 2 != 0) throw DomainError("gamma: azimuthal node count must be even");
    return {std::move(grid), params, product_sphere_rule(n_polar, n_azimuth)};
}

Vector gamma(const GammaOperator& op, const Vector& f, const Vector& g) {
    const VelocityGrid& grid = *op.grid;
    const int n = grid.size();
    if (f.size() != n || g.size() != n) throw DomainError("gamma: dimension mismatch");
    CollisionParams unit;
    // c(hard sphere) chosen so that the loss frequency equals the collision frequency
    const double cq = std::pow(std::numbers::pi, 1.5) * op.params.q0 / (2.0 * std::numbers::sqrt2);

    Vector F(n), G(n), sq(n);
    for (int i = 0; i < n; ++i) {
        sq[i] = std::sqrt(maxwellian(grid.nodes[i], unit));
        F[i] = sq[i] * f[i];
        G[i] = sq[i] * g[i];
    }
    const auto& dirs = op.sphere.nodes;
    const auto& dw = op.sphere.weights;
    const int ns = static_cast<int>(dirs.size());
    const double two_pi = 2.0 * std::numbers::pi;

    std::vector<double> q(n, 0.0);
    for (int i = 0; i < n; ++i) {
        const Vec3& vi = grid.nodes[i];
        for (int j = i + 1; j < n; ++j) {
            const double pair = 0.5 * (F[j] * G[i] + G[j] * F[i]);
            if (pair == 0.0) continue;
            const Vec3& vj = grid.nodes[j];
            const double w = (vi - vj).norm();
            // Ordered pairs (i,j) and (j,i) contribute alike.
            const double m = cq * w * grid.weights[i] * grid.weights[j] * pair;
            const Vec3 mid = 0.5 * (vi + vj);
            const double half = 0.5 * w;
            for (int s = 0; s < ns; ++s) deposit(grid, mid + half * dirs[s], m * dw[s], q.data());
            q[i] -= m * two_pi;
            q[j] -= m * two_pi;
        }
    }
    Vector out(n);
    for (int i = 0; i < n; ++i) out[i] = q[i] / (grid.weights[i] * sq[i]);
    return out;
}

double gamma_orthogonality(const GammaOperator& op, const NullBasis& basis, int n_pairs, unsigned long long seed) {
    if (n_pairs < 1) throw DomainError("gamma_orthogonality: need at least one pair");
    const VelocityGrid& grid = *op.grid;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd(0.0, 1.0);
    auto draw = [&] {
        Vector f(grid.size());
        for (int i = 0; i < grid.size(); ++i) f[i] = nd(rng) * basis.vectors[0][i];
        return f;
    };
    double worst = 0.0;
    for (int p = 0; p < n_pairs; ++p) {
        const Vector f = draw(), g = draw();
        const Vector q = gamma(op, f, g);
        const double scale = grid.norm(f) * grid.norm(g);
        for (const Vector& e : basis.vectors) worst = std::max(worst, std::abs(grid.dot(q, e)) / scale);
    }
    return worst;
}

}  // namespace kinetic
