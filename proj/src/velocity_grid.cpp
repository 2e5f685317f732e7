#include <cmath>
#include <numbers>

#include "kinetic/collision.hpp"

namespace kinetic {

namespace {

double double_factorial_odd(int p) {  // (2p-1)!!
    double r = 1.0;
    for (int k = 2 * p - 1; k > 1; k -= 2) r *= k;
    return r;
}

}  // namespace

void CollisionParams::validate() const {
    if (!(q0 > 0.0) || !std::isfinite(q0)) throw DomainError("q0 must be positive");
}

double maxwellian(const Vec3& v, const CollisionParams& params) {
    const double e = std::exp(-0.5 * v.squaredNorm());
    if (params.mu_normalization == MuNormalization::boundary_measure) return e / (2.0 * std::numbers::pi);
    return e * std::pow(2.0 * std::numbers::pi, -1.5);
}

double VelocityGrid::dot(const Vector& f, const Vector& g) const {
    if (f.size() != size() || g.size() != size()) throw DomainError("grid function size mismatch");
    double s = 0.0;
    for (int i = 0; i < size(); ++i) s += weights[i] * f[i] * g[i];
    return s;
}

double VelocityGrid::norm(const Vector& f) const { return std::sqrt(dot(f, f)); }

VelocityGrid make_velocity_grid(int per_axis_count, double v_max, int exact_degree) {
    if (per_axis_count < 2 || per_axis_count % 2 != 0)
        throw DomainError("per_axis_count must be even and >= 2");
    if (!(v_max > 0.0)) throw DomainError("v_max must be positive");
    if (exact_degree < 0 || exact_degree % 2 != 0) throw DomainError("exact_degree must be even and >= 0");

    VelocityGrid g;
    const int n = per_axis_count;
    g.per_axis_count = n;
    g.v_max = v_max;
    g.h = 2.0 * v_max / n;
    g.exact_degree = exact_degree;
    g.axis.resize(n);
    g.axis_weights.assign(n, g.h);
    for (int i = 0; i < n; ++i) g.axis[i] = -v_max + g.h * (i + 0.5);

    // Tail correction: relative weight changes on the outer m nodes of each side
    // restore the 1D standard-normal moments of degree 0, 2, ..., exact_degree.
    const int m = exact_degree / 2 + 1;
    if (2 * m <= n) {
        const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
        auto phi = [&](double x) { return inv_sqrt_2pi * std::exp(-0.5 * x * x); };
        Eigen::MatrixXd A(m, m);
        Eigen::VectorXd rhs(m);
        for (int p = 0; p < m; ++p) {
            double have = 0.0;
            for (int i = 0; i < n; ++i) have += g.h * std::pow(g.axis[i], 2 * p) * phi(g.axis[i]);
            rhs[p] = double_factorial_odd(p) - have;
            for (int j = 0; j < m; ++j) {
                const double x = g.axis[j];  // outermost nodes on the negative side
                A(p, j) = 2.0 * g.h * std::pow(x, 2 * p) * phi(x);
            }
        }
        // Column scaling keeps the Vandermonde-like system well conditioned.
        Eigen::VectorXd scale = A.colwise().norm().transpose();
        for (int j = 0; j < m; ++j) A.col(j) /= scale[j];
        Eigen::VectorXd delta = A.colPivHouseholderQr().solve(rhs).cwiseQuotient(scale);
        // A grid that cuts deep into the bulk of the Gaussian would need weight
        // changes of order 10^5; keep the plain weights then.
        if (delta.allFinite() && delta.cwiseAbs().maxCoeff() < 1.0) {
            for (int j = 0; j < m; ++j) {
                g.axis_weights[j] *= 1.0 + delta[j];
                g.axis_weights[n - 1 - j] *= 1.0 + delta[j];
            }
            g.tail_corrected = true;
        }
    }

    g.nodes.reserve(static_cast<size_t>(n) * n * n);
    g.weights.reserve(static_cast<size_t>(n) * n * n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            for (int k = 0; k < n; ++k) {
                g.nodes.emplace_back(g.axis[i], g.axis[j], g.axis[k]);
                g.weights.push_back(g.axis_weights[i] * g.axis_weights[j] * g.axis_weights[k]);
            }
    return g;
}

MomentReport gaussian_moments(const VelocityGrid& grid) {
    MomentReport r;
    CollisionParams unit;
    for (int i = 0; i < grid.size(); ++i) {
        const double s2 = grid.nodes[i].squaredNorm();
        const double wm = grid.weights[i] * maxwellian(grid.nodes[i], unit);
        double p = 1.0;
        for (int k = 0; k < 4; ++k) {
            r.values[k] += wm * p;
            p *= s2;
        }
        if (!(grid.weights[i] > 0.0)) r.weights_positive = false;
    }
    for (int k = 0; k < 4; ++k)
        r.max_rel_error = std::max(r.max_rel_error, std::abs(r.values[k] - r.exact[k]) / r.exact[k]);
    return r;
}

double MacroState::max_abs() const {
    return std::max({std::abs(a), b.cwiseAbs().maxCoeff(), std::abs(c)});
}

Vector NullBasis::reconstruct(const MacroState& m) const {
    const auto x = m.coeffs();
    Vector out = Vector::Zero(vectors[0].size());
    for (int k = 0; k < 5; ++k) out += x[k] * vectors[k];
    return out;
}

NullBasis make_null_basis(const VelocityGrid& grid) {
    NullBasis b;
    const int n = grid.size();
    for (auto& v : b.vectors) v.resize(n);
    CollisionParams unit;
    const double inv_sqrt6 = 1.0 / std::sqrt(6.0);
    for (int i = 0; i < n; ++i) {
        const Vec3& v = grid.nodes[i];
        const double s = std::sqrt(maxwellian(v, unit));
        b.vectors[0][i] = s;
        b.vectors[1][i] = s * v[0];
        b.vectors[2][i] = s * v[1];
        b.vectors[3][i] = s * v[2];
        b.vectors[4][i] = s * (v.squaredNorm() - 3.0) * inv_sqrt6;
    }
    for (int a = 0; a < 5; ++a)
        for (int c = 0; c < 5; ++c) b.gram(a, c) = grid.dot(b.vectors[a], b.vectors[c]);
    b.gram_inverse = b.gram.inverse();
    return b;
}

std::pair<MacroState, Vector> project_null(const Vector& f, const NullBasis& basis, const VelocityGrid& grid) {
    Eigen::Matrix<double, 5, 1> r;
    for (int k = 0; k < 5; ++k) r[k] = grid.dot(f, basis.vectors[k]);
    const Eigen::Matrix<double, 5, 1> x = basis.gram_inverse * r;
    MacroState m = MacroState::from_coeffs({x[0], x[1], x[2], x[3], x[4]});
    return {m, basis.reconstruct(m)};
}

Vector project_orthogonal(const Vector& f, const NullBasis& basis, const VelocityGrid& grid) {
    return f - project_null(f, basis, grid).second;
}

}  // namespace kinetic
