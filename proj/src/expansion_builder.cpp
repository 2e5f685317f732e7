#include <algorithm>
#include <cmath>

#include "kinetic/expansion.hpp"

namespace kinetic {

FluidField make_fluid(int nx, double x0, double x1, const std::function<double(double)>& rho,
                      const std::function<Vec3(double)>& u, const std::function<double(double)>& theta,
                      const std::function<double(double)>& p) {
    if (nx < 5) throw DomainError("make_fluid: need at least five slab nodes");
    if (!(x1 > x0)) throw DomainError("make_fluid: empty slab");
    FluidField f;
    for (int i = 0; i < nx; ++i) {
        const double x = x0 + (x1 - x0) * i / (nx - 1);
        f.x.push_back(x);
        f.rho.push_back(rho(x));
        f.u.push_back(u(x));
        f.theta.push_back(theta(x));
        f.p.push_back(p ? p(x) : rho(x) + theta(x));
    }
    return f;
}

FluidField named_fluid(const std::string& name, int nx, double x0, double x1) {
    if (name == "trivial")
        return make_fluid(nx, x0, x1, [](double) { return 1.0; }, [](double) { return Vec3::Zero().eval(); },
                          [](double) { return 0.0; });
    if (name == "shear")
        return make_fluid(
            nx, x0, x1, [](double x) { return 0.5 - 0.3 * x; },
            [](double x) { return Vec3(0.1, 0.2 + 0.4 * x, -0.1 + 0.25 * x * x); },
            [](double x) { return 0.2 + 0.3 * x; });
    if (name == "compressive")
        return make_fluid(nx, x0, x1, [](double x) { return 1.0 + x; }, [](double x) { return Vec3(x, 0.0, 0.0); },
                          [](double) { return 0.0; });
    throw DomainError("named_fluid: unknown fluid '" + name + "'");
}

std::vector<double> derivative4(const std::vector<double>& f, double dx) {
    const int n = static_cast<int>(f.size());
    if (n < 5) throw DomainError("derivative4: need at least five samples");
    std::vector<double> d(n);
    const double s = 1.0 / (12.0 * dx);
    d[0] = s * (-25 * f[0] + 48 * f[1] - 36 * f[2] + 16 * f[3] - 3 * f[4]);
    d[1] = s * (-3 * f[0] - 10 * f[1] + 18 * f[2] - 6 * f[3] + f[4]);
    for (int i = 2; i < n - 2; ++i) d[i] = s * (f[i - 2] - 8 * f[i - 1] + 8 * f[i + 1] - f[i + 2]);
    d[n - 2] = s * (3 * f[n - 1] + 10 * f[n - 2] - 18 * f[n - 3] + 6 * f[n - 4] - f[n - 5]);
    d[n - 1] = s * (25 * f[n - 1] - 48 * f[n - 2] + 36 * f[n - 3] - 16 * f[n - 4] + 3 * f[n - 5]);
    return d;
}

double slab_norm(const std::vector<double>& f, double dx) {
    double s = 0.0;
    for (double v : f) s += v * v;
    return std::sqrt(dx * s);
}

MacroState fluid_state(const FluidField& f, int i) { return {f.rho[i], f.u[i], f.theta[i]}; }

Vector phi_field(const MacroState& m, const NullBasis& basis) {
    MacroState e = m;
    e.c *= kThetaToE4;
    return basis.reconstruct(e);
}

std::vector<Vector> assemble_F1(const FluidField& fluid, const NullBasis& basis) {
    std::vector<Vector> out;
    for (int i = 0; i < fluid.size(); ++i) out.push_back(phi_field(fluid_state(fluid, i), basis));
    return out;
}

MacroState compute_B2(const MacroState& A1) {
    MacroState b;
    b.a = 0.0;
    b.b = A1.a * A1.b;
    b.c = A1.a * A1.c + A1.b[0] * A1.b[0] + A1.b[1] * A1.b[1] + A1.b[2] * A1.b[2];
    return b;
}

Vector GammaPairTable::quadratic(const std::array<double, 5>& c) const {
    Vector out = Vector::Zero(pairs[0][0].size());
    for (int a = 0; a < 5; ++a)
        for (int b = 0; b < 5; ++b)
            if (c[a] != 0.0 && c[b] != 0.0) out += c[a] * c[b] * pairs[a][b];
    return out;
}

GammaPairTable make_gamma_pairs(const GammaOperator& gamma_op, const NullBasis& basis) {
    GammaPairTable t;
    for (int a = 0; a < 5; ++a)
        for (int b = a; b < 5; ++b) {
            t.pairs[a][b] = gamma(gamma_op, basis.vectors[a], basis.vectors[b]);
            t.pairs[b][a] = t.pairs[a][b];
        }
    return t;
}

CGResult solve_orthogonal(const Matrix& L, const Vector& r, const VelocityGrid& grid, const NullBasis& basis,
                          double tol, int max_iter) {
    // CG on the symmetric form W^{1/2} L W^{-1/2}, restricted to the complement.
    const int n = grid.size();
    Vector sw(n);
    for (int i = 0; i < n; ++i) sw[i] = std::sqrt(grid.weights[i]);
    auto project = [&](const Vector& y) {  // in the transformed variables
        return Vector(sw.cwiseProduct(project_orthogonal(y.cwiseQuotient(sw), basis, grid)));
    };
    auto apply = [&](const Vector& y) { return project(sw.cwiseProduct(L * project(y).cwiseQuotient(sw))); };

    const Vector b = project(sw.cwiseProduct(r));
    CGResult res;
    const double bnorm = b.norm();
    if (bnorm == 0.0) {
        res.x = Vector::Zero(n);
        return res;
    }
    Vector y = Vector::Zero(n), resid = b, dir = resid;
    double rr = resid.squaredNorm();
    int it = 0;
    for (; it < max_iter && std::sqrt(rr) > tol * bnorm; ++it) {
        const Vector Ad = apply(dir);
        const double alpha = rr / dir.dot(Ad);
        y += alpha * dir;
        resid -= alpha * Ad;
        // Re-project now and then so rounding does not leak into the null space.
        if (it % 50 == 49) resid = project(resid);
        const double rr_new = resid.squaredNorm();
        dir = resid + (rr_new / rr) * dir;
        rr = rr_new;
    }
    res.iterations = it;
    res.x = project(y).cwiseQuotient(sw);
    res.residual = (apply(project(y)) - b).norm() / bnorm;
    if (!(res.residual <= std::max(tol, 1e-14) * 10.0))
        throw NumericalFailure("solve_orthogonal: conjugate gradients did not converge");
    return res;
}

Vector gamma_null_identity(const Vector& F, const Matrix& L, const VelocityGrid& grid) {
    const CollisionParams unit;
    Vector q(grid.size());
    for (int i = 0; i < grid.size(); ++i) q[i] = F[i] * F[i] / std::sqrt(maxwellian(grid.nodes[i], unit));
    return 0.5 * (L * q);
}

ExpansionCoeffs build_expansion(const FluidField& fluid, const Matrix& L, const NullBasis& basis,
                                const VelocityGrid& grid, const GammaPairTable* direct, double tol) {
    ExpansionCoeffs e;
    e.x = fluid.x;
    e.F1 = assemble_F1(fluid, basis);
    const double dx = fluid.dx();

    // d/dx of each phi-basis coefficient.
    std::array<std::vector<double>, 5> coef;
    for (int i = 0; i < fluid.size(); ++i) {
        const auto c = fluid_state(fluid, i).coeffs();
        for (int k = 0; k < 5; ++k) coef[k].push_back(c[k]);
    }
    std::array<std::vector<double>, 5> dcoef;
    for (int k = 0; k < 5; ++k) dcoef[k] = derivative4(coef[k], dx);

    Vector v1(grid.size());
    for (int i = 0; i < grid.size(); ++i) v1[i] = grid.nodes[i][0];

    for (int i = 0; i < fluid.size(); ++i) {
        const MacroState a1 = fluid_state(fluid, i);
        e.A1.push_back(a1);
        e.B2.push_back(compute_B2(a1));
        const MacroState d = MacroState::from_coeffs({dcoef[0][i], dcoef[1][i], dcoef[2][i], dcoef[3][i], dcoef[4][i]});
        e.dF1.push_back(phi_field(d, basis));
        if (direct) {
            auto c = a1.coeffs();
            c[4] *= kThetaToE4;
            e.gamma11.push_back(direct->quadratic(c));
        } else {
            e.gamma11.push_back(gamma_null_identity(e.F1[i], L, grid));
        }
        const Vector full = -v1.cwiseProduct(e.dF1.back()) + e.gamma11.back();
        e.rhs.push_back(project_orthogonal(full, basis, grid));
        const CGResult cg = solve_orthogonal(L, e.rhs.back(), grid, basis, tol);
        e.cg_residual = std::max(e.cg_residual, cg.residual);
        e.C2.push_back(cg.x);
    }
    return e;
}

std::vector<double> order_identity_profile(const ExpansionCoeffs& e, const Matrix& L, const NullBasis& basis,
                                           const VelocityGrid& grid) {
    Vector v1(grid.size());
    for (int i = 0; i < grid.size(); ++i) v1[i] = grid.nodes[i][0];
    std::vector<double> out;
    for (size_t i = 0; i < e.x.size(); ++i) {
        const Vector F2 = phi_field(e.B2[i], basis) + e.C2[i];
        out.push_back(grid.norm(L * F2 + v1.cwiseProduct(e.dF1[i]) - e.gamma11[i]));
    }
    return out;
}

double order_identity_residual(const ExpansionCoeffs& e, const Matrix& L, const NullBasis& basis,
                               const VelocityGrid& grid) {
    const auto p = order_identity_profile(e, L, basis, grid);
    return *std::max_element(p.begin(), p.end());
}

double boussinesq_residual(const FluidField& fluid) {
    std::vector<double> s(fluid.size());
    for (int i = 0; i < fluid.size(); ++i) s[i] = fluid.rho[i] + fluid.theta[i];
    return slab_norm(derivative4(s, fluid.dx()), fluid.dx());
}

double divergence_residual(const FluidField& fluid) {
    std::vector<double> u1(fluid.size());
    for (int i = 0; i < fluid.size(); ++i) u1[i] = fluid.u[i][0];
    return slab_norm(derivative4(u1, fluid.dx()), fluid.dx());
}

TransportCoefficients compute_transport_coefficients(const Matrix& L, const VelocityGrid& grid,
                                                     const NullBasis& basis) {
    const Vector& sm = basis.vectors[0];
    Vector bb(grid.size()), aa(grid.size());
    for (int i = 0; i < grid.size(); ++i) {
        const Vec3& v = grid.nodes[i];
        bb[i] = sm[i] * v[0] * v[1];
        aa[i] = sm[i] * v[0] * (v.squaredNorm() - 5.0) / 2.0;
    }
    // Both are orthogonal to the null space up to quadrature; make it exact.
    bb = project_orthogonal(bb, basis, grid);
    aa = project_orthogonal(aa, basis, grid);
    TransportCoefficients t;
    t.gamma1 = grid.dot(bb, solve_orthogonal(L, bb, grid, basis).x);
    t.gamma2 = 0.4 * grid.dot(aa, solve_orthogonal(L, aa, grid, basis).x);
    if (!(t.gamma1 > 0.0) || !(t.gamma2 > 0.0)) throw NumericalFailure("transport coefficients: bracket not positive");
    return t;
}

TransportCoefficients compute_transport_coefficients(const KernelOperator& op, const NullBasis& basis) {
    return compute_transport_coefficients(conservative_matrix(op, basis), *op.grid, basis);
}

}  // namespace kinetic
