#include <gsl/gsl_errno.h>
#include <gsl/gsl_odeiv2.h>

#include <algorithm>
#include <cmath>

#include "kinetic/milne.hpp"
#include "kinetic/stats.hpp"

namespace kinetic {

namespace {

constexpr std::array<int, 4> kSlots{0, 2, 3, 4};

// Central differences along `axis`, zero outside the grid.
Matrix central_difference(const VelocityGrid& g, int axis) {
    const int N = g.size(), n = g.per_axis_count;
    Matrix D = Matrix::Zero(N, N);
    for (int i = 0; i < N; ++i) {
        auto t = g.triple(i);
        for (int s : {-1, 1}) {
            auto u = t;
            u[axis] += s;
            if (u[axis] < 0 || u[axis] >= n) continue;
            D(i, g.index(u[0], u[1], u[2])) = s / (2.0 * g.h);
        }
    }
    return D;
}

// Monomial exponents of total degree <= deg in three variables.
std::vector<std::array<int, 3>> exponents(int deg) {
    std::vector<std::array<int, 3>> out;
    for (int d = 0; d <= deg; ++d)
        for (int a = d; a >= 0; --a)
            for (int b = d - a; b >= 0; --b) out.push_back({a, b, d - a - b});
    return out;
}

double mono(const Vec3& v, const std::array<int, 3>& e) {
    return std::pow(v[0], e[0]) * std::pow(v[1], e[1]) * std::pow(v[2], e[2]);
}

// Rotation generator of the (v_eta, v_a) plane, a in {1, 2}.
Matrix rotation_generator(const VelocityGrid& g, const Vector& sqrt_mu, int a) {
    const int N = g.size();
    const Matrix D0 = central_difference(g, 0), Da = central_difference(g, a);
    Vector v0(N), va(N), sw(N);
    for (int i = 0; i < N; ++i) {
        v0[i] = g.nodes[i][0];
        va[i] = g.nodes[i][a];
        sw[i] = std::sqrt(g.weights[i]);
    }
    Matrix X0 = va.asDiagonal() * D0 - v0.asDiagonal() * Da;
    X0 = (sw.asDiagonal() * X0 * sw.cwiseInverse().asDiagonal()).eval();
    X0 = (0.5 * (X0 - X0.transpose())).eval();

    // Exact images on mu^{1/2} P_4. Omega kills mu^{1/2}, so it acts on the polynomial.
    const auto ex = exponents(4);
    const int m = static_cast<int>(ex.size());
    Matrix U(N, m), OU(N, m);
    for (int k = 0; k < m; ++k) {
        const auto& e = ex[k];
        for (int i = 0; i < N; ++i) {
            const Vec3& v = g.nodes[i];
            double d0 = 0.0, da = 0.0;
            if (e[0] > 0) {
                auto f = e;
                --f[0];
                d0 = e[0] * mono(v, f);
            }
            if (e[a] > 0) {
                auto f = e;
                --f[a];
                da = e[a] * mono(v, f);
            }
            U(i, k) = sqrt_mu[i] * mono(v, e) * sw[i];
            OU(i, k) = sqrt_mu[i] * (v[a] * d0 - v[0] * da) * sw[i];
        }
    }
    Eigen::HouseholderQR<Matrix> qr(U);
    const Matrix Q = qr.householderQ() * Matrix::Identity(N, m);
    const Matrix R = qr.matrixQR().topRows(m).triangularView<Eigen::Upper>();
    const Matrix Z = R.transpose().triangularView<Eigen::Lower>().solve(OU.transpose()).transpose();
    const Matrix r = Z - X0 * Q;
    Matrix K = Q.transpose() * r;
    K = (0.5 * (K - K.transpose())).eval();
    Matrix X = X0 + r * Q.transpose() - Q * r.transpose() - Q * K * Q.transpose();
    return sw.cwiseInverse().asDiagonal() * X * sw.asDiagonal();
}

Vector eta_velocity(const VelocityGrid& g) {
    Vector v(g.size());
    for (int i = 0; i < g.size(); ++i) v[i] = g.nodes[i][0];
    return v;
}

MilneSolution finish_solution(std::vector<double> eta, std::vector<Vector> g, const MilneOperators& ops) {
    MilneSolution sol;
    sol.eta = std::move(eta);
    sol.g = std::move(g);
    const VelocityGrid& grid = *ops.grid;
    for (const Vector& gn : sol.g) {
        auto [m, pg] = project_null(gn, ops.basis, grid);
        sol.q_profile.push_back(m);
        sol.w_profile.push_back(gn - pg);
        sol.g_norm.push_back(grid.norm(gn));
        sol.sup_norm = std::max(sol.sup_norm, gn.cwiseAbs().maxCoeff());
    }
    const Vector& gL = sol.g.back();
    for (size_t k = 0; k < ops.plus.size(); ++k)
        sol.reflection_error = std::max(sol.reflection_error, std::abs(gL[ops.plus[k]] - gL[ops.minus[k]]));
    return sol;
}

// b^{(a)}_j = mu^{1/2} Omega_a(v_eta v_a p_j), the velocity-derivative moments of the beta system.
std::array<Vector, 4> b_vectors(const MilneOperators& ops, int a) {
    const VelocityGrid& g = *ops.grid;
    const Vector& sm = ops.basis.vectors[0];
    std::array<Vector, 4> b;
    for (int s = 0; s < 4; ++s) {
        b[s].resize(g.size());
        for (int i = 0; i < g.size(); ++i) {
            const Vec3& v = g.nodes[i];
            Vec3 grad = Vec3::Zero();
            double p = 1.0;
            switch (kSlots[s]) {
                case 2: p = v[1]; grad[1] = 1.0; break;
                case 3: p = v[2]; grad[2] = 1.0; break;
                case 4: p = (v.squaredNorm() - 3.0) / std::sqrt(6.0); grad = 2.0 * v / std::sqrt(6.0); break;
                default: break;
            }
            const double ve = v[0], va = v[a];
            b[s][i] = sm[i] * ((va * va - ve * ve) * p + ve * va * (va * grad[0] - ve * grad[a]));
        }
    }
    return b;
}

Eigen::Vector4d slots_of(const MacroState& m) { return {m.a, m.b[1], m.b[2], m.c}; }

}  // namespace

std::shared_ptr<const MilneOperators> make_milne_operators(const KernelOperator& op) {
    auto ops = std::make_shared<MilneOperators>();
    ops->grid = op.grid;
    const VelocityGrid& g = *op.grid;
    if (g.per_axis_count % 2 != 0) throw DomainError("milne operators: per-axis count must be even");
    ops->basis = make_null_basis(g);
    ops->L = conservative_matrix(op, ops->basis);
    Vector sqrt_mu = ops->basis.vectors[0];
    ops->omega1 = rotation_generator(g, sqrt_mu, 1);
    ops->omega2 = rotation_generator(g, sqrt_mu, 2);
    Vector vphi(g.size()), vpsi(g.size());
    for (int i = 0; i < g.size(); ++i) {
        vphi[i] = g.nodes[i][1];
        vpsi[i] = g.nodes[i][2];
    }
    ops->T1 = vphi.asDiagonal() * ops->omega1;
    ops->T2 = vpsi.asDiagonal() * ops->omega2;
    const int n = g.per_axis_count;
    for (int i = n / 2; i < n; ++i)
        for (int j = 0; j < n; ++j)
            for (int k = 0; k < n; ++k) {
                ops->plus.push_back(g.index(i, j, k));
                ops->minus.push_back(g.index(n - 1 - i, j, k));
            }
    return ops;
}

std::vector<double> make_eta_grid(double L, const EtaGridSpec& spec, const MilneOperators& ops) {
    if (!(L > 0.0)) throw DomainError("eta grid: L must be positive");
    if (!(spec.growth >= 1.0) || !(spec.max_step > 0.0)) throw DomainError("eta grid: bad growth or max_step");
    double step = spec.wall_step;
    if (step <= 0.0) {
        // Diamond differencing damps a mode only when lambda * step <= 2.
        double lam = 0.0;
        for (int i = 0; i < ops.grid->size(); ++i)
            lam = std::max(lam, std::abs(ops.L(i, i)) / std::abs(ops.grid->nodes[i][0]));
        step = std::min(0.02, 2.0 / lam);
    }
    std::vector<double> eta{0.0};
    while (eta.back() < L) {
        const double next = eta.back() + step;
        if (next >= L || L - next < 0.5 * step) {
            eta.push_back(L);
            break;
        }
        eta.push_back(next);
        step = std::min(step * spec.growth, spec.max_step);
    }
    return eta;
}

std::vector<MilneSolution> solve_milne_batch(const LayerGeometry& geom, std::shared_ptr<const MilneOperators> ops,
                                             const std::vector<MilneBatchProblem>& problems, const EtaGridSpec& spec,
                                             double tol) {
    if (!ops) throw DomainError("solve_milne: missing operators");
    const VelocityGrid& grid = *ops->grid;
    const int nv = grid.size();
    const int half = static_cast<int>(ops->plus.size());
    const int np = static_cast<int>(problems.size());
    for (const auto& p : problems)
        if (p.h.size() != nv) throw DomainError("solve_milne: boundary data has the wrong size");

    const std::vector<double> eta = make_eta_grid(geom.L, spec, *ops);
    const int cells = static_cast<int>(eta.size()) - 1;
    const Vector V = eta_velocity(grid);

    auto cell_matrices = [&](int n, Matrix& A, Matrix& B) {
        const double d = eta[n + 1] - eta[n];
        const double em = 0.5 * (eta[n] + eta[n + 1]);
        Matrix M = force(geom, 1, em) * ops->T1 + force(geom, 2, em) * ops->T2 + ops->L;
        A = 0.5 * M;
        A.diagonal() += V / d;
        B = -0.5 * M;
        B.diagonal() += V / d;
    };
    // Nodal sources; each cell uses the average of its two end values.
    std::vector<Matrix> nodal(eta.size(), Matrix::Zero(nv, np));
    for (size_t n = 0; n < eta.size(); ++n)
        for (int k = 0; k < np; ++k)
            if (problems[k].S) nodal[n].col(k) = problems[k].S(eta[n]);
    auto cell_source = [&](int n) -> Matrix { return 0.5 * (nodal[n] + nodal[n + 1]); };

    // Backward sweep: g^-_n = R_n g^+_n + r_n and g^+_{n+1} = T_n g^+_n + t_n.
    std::vector<Matrix> R(cells + 1), T(cells), r(cells + 1), t(cells);
    R[cells] = Matrix::Identity(half, half);  // reflection at L
    r[cells] = Matrix::Zero(half, np);
    Matrix A, B;
    for (int n = cells - 1; n >= 0; --n) {
        cell_matrices(n, A, B);
        const Matrix Aminus = A(Eigen::all, ops->minus);
        Matrix C(nv, nv);
        C.leftCols(half) = -B(Eigen::all, ops->minus);
        C.rightCols(half) = A(Eigen::all, ops->plus) + Aminus * R[n + 1];
        Matrix rhs(nv, half + np);
        rhs.leftCols(half) = B(Eigen::all, ops->plus);
        rhs.rightCols(np) = cell_source(n) - Aminus * r[n + 1];
        const Matrix X = Eigen::PartialPivLU<Matrix>(C).solve(rhs);
        if (!X.allFinite()) throw NumericalFailure("solve_milne: singular cell system");
        R[n] = X.topLeftCorner(half, half);
        T[n] = X.bottomLeftCorner(half, half);
        r[n] = X.topRightCorner(half, np);
        t[n] = X.bottomRightCorner(half, np);
    }

    std::vector<MilneSolution> out;
    out.reserve(np);
    for (int k = 0; k < np; ++k) {
        std::vector<Vector> g(cells + 1, Vector(nv));
        Vector gp = problems[k].h(ops->plus);
        for (int n = 0; n <= cells; ++n) {
            const Vector gm = R[n] * gp + r[n].col(k);
            g[n](ops->plus) = gp;
            g[n](ops->minus) = gm;
            if (n < cells) gp = T[n] * gp + t[n].col(k);
        }
        out.push_back(finish_solution(eta, std::move(g), *ops));
    }

    // Residual of the discrete equations, relative to the size of each term.
    for (int n = 0; n < cells; ++n) {
        cell_matrices(n, A, B);
        const Matrix s = cell_source(n);
        for (int k = 0; k < np; ++k) {
            const Vector& g0 = out[k].g[n];
            const Vector& g1 = out[k].g[n + 1];
            const Vector res = A * g1 - B * g0 - s.col(k);
            const double scale = (A.cwiseAbs() * g1.cwiseAbs() + B.cwiseAbs() * g0.cwiseAbs() + s.col(k).cwiseAbs())
                                     .maxCoeff();
            if (scale > 0.0) out[k].scheme_residual = std::max(out[k].scheme_residual, res.cwiseAbs().maxCoeff() / scale);
        }
    }
    for (const auto& sol : out)
        if (!(sol.scheme_residual <= tol)) throw NumericalFailure("solve_milne: discrete residual above tolerance");
    return out;
}

MilneSolution solve_milne(const MilneProblem& problem, const EtaGridSpec& spec, double tol) {
    return solve_milne_batch(problem.geom, problem.ops, {{problem.h, problem.S}}, spec, tol).front();
}

std::array<double, 4> orthogonality_residuals(const MilneSolution& sol, const MilneOperators& ops, const SourceFn& S) {
    const VelocityGrid& grid = *ops.grid;
    if (S) {
        for (double e : {sol.eta.front(), 0.5 * (sol.eta.front() + sol.eta.back()), sol.eta.back()}) {
            const Vector s = S(e);
            const MacroState m = project_null(s, ops.basis, grid).first;
            if (m.max_abs() > 1e-10 * std::max(1.0, grid.norm(s)))
                throw DomainError("orthogonality_residuals: source is not orthogonal to the null space");
        }
    }
    std::array<double, 4> res{};
    for (const auto& row : orthogonality_profile(sol, ops))
        for (int s = 0; s < 4; ++s) res[s] = std::max(res[s], std::abs(row[s]));
    return res;
}

std::vector<std::array<double, 4>> orthogonality_profile(const MilneSolution& sol, const MilneOperators& ops) {
    const VelocityGrid& grid = *ops.grid;
    const Vector V = eta_velocity(grid);
    std::array<Vector, 4> ve;
    for (int s = 0; s < 4; ++s) ve[s] = V.cwiseProduct(ops.basis.vectors[kSlots[s]]);
    std::vector<std::array<double, 4>> out;
    for (const Vector& g : sol.g) {
        std::array<double, 4> row;
        for (int s = 0; s < 4; ++s) row[s] = grid.dot(ve[s], g);
        out.push_back(row);
    }
    return out;
}

std::vector<double> flux_q1(const MilneSolution& sol, const MilneOperators& ops) {
    std::vector<double> out;
    for (const Vector& g : sol.g) out.push_back(ops.grid->dot(ops.basis.vectors[1], g));
    return out;
}

BetaSystem assemble_beta_system(const MilneOperators& ops) {
    const VelocityGrid& grid = *ops.grid;
    const Vector V = eta_velocity(grid);
    const auto b1 = b_vectors(ops, 1), b2 = b_vectors(ops, 2);
    BetaSystem sys;
    for (int j = 0; j < 4; ++j)
        for (int k = 0; k < 4; ++k) {
            const Vector& ek = ops.basis.vectors[kSlots[k]];
            sys.A(j, k) = grid.dot(V.cwiseProduct(V).cwiseProduct(ops.basis.vectors[kSlots[j]]), ek);
            sys.B1(j, k) = grid.dot(b1[j], ek);
            sys.B2(j, k) = grid.dot(b2[j], ek);
        }
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix4d> es(0.5 * (sys.A + sys.A.transpose()));
    const double lo = es.eigenvalues().minCoeff(), hi = es.eigenvalues().maxCoeff();
    if (!(lo > 1e-12 * hi)) throw NumericalFailure("assemble_beta_system: singular moment matrix");
    sys.condition = hi / lo;
    return sys;
}

BetaProfile solve_beta_ode(const BetaSystem& sys, const MilneSolution& sol, const MilneOperators& ops,
                           const LayerGeometry& geom, const SourceFn& S) {
    const VelocityGrid& grid = *ops.grid;
    const Vector V = eta_velocity(grid);
    const auto b1 = b_vectors(ops, 1), b2 = b_vectors(ops, 2);
    const int N = static_cast<int>(sol.eta.size());
    const Eigen::Matrix4d Ainv = sys.A.inverse();

    std::vector<Eigen::Vector4d> F(N), DE(N);
    std::vector<Eigen::Matrix4d> H(N);
    for (int n = 0; n < N; ++n) {
        const double e = sol.eta[n];
        const double G1 = force(geom, 1, e), G2 = force(geom, 2, e);
        const Vector& w = sol.w_profile[n];
        const Vector Lw = ops.L * w;
        const Vector s = S ? S(e) : Vector::Zero(grid.size());
        for (int j = 0; j < 4; ++j) {
            const Vector& ej = ops.basis.vectors[kSlots[j]];
            const Vector ve = V.cwiseProduct(ej);
            F[n][j] = grid.dot(V.cwiseProduct(ve), w);
            DE[n][j] = G1 * grid.dot(b1[j], w) + G2 * grid.dot(b2[j], w) - grid.dot(ve, Lw) + grid.dot(ve, s);
        }
        H[n] = (G1 * sys.B1 + G2 * sys.B2) * Ainv;
    }

    BetaProfile out;
    Eigen::Vector4d theta;
    for (int j = 0; j < 4; ++j)
        theta[j] = grid.dot(V.cwiseProduct(V).cwiseProduct(ops.basis.vectors[kSlots[j]]), sol.g[0]);
    Eigen::Vector4d beta = theta - F[0];
    out.beta.push_back(beta);
    for (int n = 0; n + 1 < N; ++n) {
        const double d = sol.eta[n + 1] - sol.eta[n];
        // Z = beta + F obeys Z' = H beta + D + E; trapezoidal step, implicit in beta.
        const Eigen::Vector4d rhs = beta + F[n] + 0.5 * d * (H[n] * beta + DE[n] + DE[n + 1]) - F[n + 1];
        const Eigen::Matrix4d lhs = Eigen::Matrix4d::Identity() - 0.5 * d * H[n + 1];
        beta = lhs.partialPivLu().solve(rhs);
        out.beta.push_back(beta);
    }
    double worst = 0.0, scale = 0.0;
    for (int n = 0; n < N; ++n) {
        out.q.push_back(Ainv * out.beta[n]);
        const Eigen::Vector4d qs = slots_of(sol.q_profile[n]);
        worst = std::max(worst, (out.q[n] - qs).cwiseAbs().maxCoeff());
        scale = std::max(scale, qs.cwiseAbs().maxCoeff());
    }
    out.max_rel_mismatch = scale > 0.0 ? worst / scale : worst;
    return out;
}

namespace {

// Trapezoidal average of samples over eta >= 0.8 L.
template <class Get>
Eigen::Matrix<double, 5, 1> window_average(const std::vector<double>& eta, Get get) {
    const double L = eta.back(), lo = 0.8 * L;
    Eigen::Matrix<double, 5, 1> acc = Eigen::Matrix<double, 5, 1>::Zero();
    double len = 0.0;
    for (size_t n = 0; n + 1 < eta.size(); ++n) {
        if (eta[n + 1] <= lo) continue;
        const double a = std::max(eta[n], lo), b = eta[n + 1];
        // Linear interpolation inside the first partial cell.
        const double t = (a - eta[n]) / (eta[n + 1] - eta[n]);
        const Eigen::Matrix<double, 5, 1> fa = (1 - t) * get(n) + t * get(n + 1);
        acc += 0.5 * (b - a) * (fa + get(n + 1));
        len += b - a;
    }
    if (len <= 0.0) return get(eta.size() - 1);
    return acc / len;
}

MacroState macro_from(const Eigen::Matrix<double, 5, 1>& x) {
    return MacroState::from_coeffs({x[0], x[1], x[2], x[3], x[4]});
}

Eigen::Matrix<double, 5, 1> coeffs_of(const MacroState& m) {
    const auto c = m.coeffs();
    return Eigen::Matrix<double, 5, 1>(c[0], c[1], c[2], c[3], c[4]);
}

}  // namespace

MacroState extract_limit(const MilneSolution& sol) {
    return macro_from(window_average(sol.eta, [&](size_t n) { return coeffs_of(sol.q_profile[n]); }));
}

LimitEstimate extract_limit_checked(const MilneSolution& sol, const MilneOperators& ops, const LayerGeometry& geom,
                                    const SourceFn& S, double tol) {
    LimitEstimate est;
    est.g_L = extract_limit(sol);
    const BetaProfile bp = solve_beta_ode(assemble_beta_system(ops), sol, ops, geom, S);
    est.from_beta = macro_from(window_average(sol.eta, [&](size_t n) {
        const Eigen::Vector4d& q = bp.q[n];
        Eigen::Matrix<double, 5, 1> x;
        x << q[0], 0.0, q[1], q[2], q[3];
        return x;
    }));
    est.discrepancy = (coeffs_of(est.g_L) - coeffs_of(est.from_beta)).cwiseAbs().maxCoeff();
    if (est.discrepancy > 10.0 * tol * std::max(1.0, est.g_L.max_abs()))
        throw NumericalFailure("extract_limit: far-field estimates disagree");
    return est;
}

namespace {

struct AnsatzCtx {
    const std::function<std::array<double, 5>(double)>* S_Q;
    const LayerGeometry* geom;
};

// d/deta (A+5C, B1, B2, B3, A+10C) = -S_Q - Mat y, solved for y'.
int ansatz_rhs(double eta, const double y[], double dydt[], void* params) {
    auto* c = static_cast<AnsatzCtx*>(params);
    const double G1 = force(*c->geom, 1, eta), G2 = force(*c->geom, 2, eta);
    const auto s = (*c->S_Q)(eta);
    const double g = G1 + G2;
    const double r0 = -s[0] - (g * y[0] + 5 * g * y[4]);
    const double r1 = -s[1];
    const double r2 = -s[2] - (2 * G1 + G2) * y[2];
    const double r3 = -s[3] - (G1 + 2 * G2) * y[3];
    const double r4 = -s[4] - (g * y[0] + 10 * g * y[4]);
    // (A+5C)' = r0, (A+10C)' = r4
    const double dC = (r4 - r0) / 5.0;
    dydt[0] = r0 - 5.0 * dC;
    dydt[1] = r1;
    dydt[2] = r2;
    dydt[3] = r3;
    dydt[4] = dC;
    return GSL_SUCCESS;
}

std::vector<std::array<double, 5>> integrate_ansatz(AnsatzCtx& ctx, const std::vector<double>& eta, double tol) {
    gsl_odeiv2_system sys{ansatz_rhs, nullptr, 5, &ctx};
    const double L = eta.back();
    gsl_odeiv2_driver* d = gsl_odeiv2_driver_alloc_y_new(&sys, gsl_odeiv2_step_rk8pd, -1e-3, tol, tol);
    double y[5] = {0, 0, 0, 0, 0};
    double t = L;
    std::vector<std::array<double, 5>> out(eta.size());
    out.back() = {0, 0, 0, 0, 0};
    for (int n = static_cast<int>(eta.size()) - 2; n >= 0; --n) {
        const int status = gsl_odeiv2_driver_apply(d, &t, eta[n], y);
        if (status != GSL_SUCCESS) {
            gsl_odeiv2_driver_free(d);
            throw NumericalFailure("solve_kernel_ansatz: integrator failed");
        }
        out[n] = {y[0], y[1], y[2], y[3], y[4]};
    }
    gsl_odeiv2_driver_free(d);
    return out;
}

}  // namespace

KernelAnsatz solve_kernel_ansatz(const std::function<std::array<double, 5>(double)>& S_Q, const LayerGeometry& geom,
                                 int n_out, double tol) {
    if (n_out < 2) throw DomainError("solve_kernel_ansatz: need at least two output points");
    if (!S_Q) throw DomainError("solve_kernel_ansatz: missing source");
    KernelAnsatz res;
    for (int i = 0; i < n_out; ++i) res.eta.push_back(geom.L * i / (n_out - 1));
    AnsatzCtx ctx{&S_Q, &geom};
    gsl_error_handler_t* old = gsl_set_error_handler_off();
    try {
        res.coeffs = integrate_ansatz(ctx, res.eta, tol);
        // Accuracy estimate: the same solve at a hundredfold tighter tolerance.
        const auto fine = integrate_ansatz(ctx, res.eta, tol * 1e-2);
        for (size_t n = 0; n < fine.size(); ++n)
            for (int k = 0; k < 5; ++k) res.residual = std::max(res.residual, std::abs(fine[n][k] - res.coeffs[n][k]));
        res.coeffs = fine;
    } catch (...) {
        gsl_set_error_handler(old);
        throw;
    }
    gsl_set_error_handler(old);

    // Growth check: a decaying source must give coefficients bounded by its integral.
    double source_mass = 0.0;
    for (size_t n = 0; n + 1 < res.eta.size(); ++n) {
        const auto a = S_Q(res.eta[n]), b = S_Q(res.eta[n + 1]);
        for (int k = 0; k < 5; ++k)
            source_mass += 0.5 * (res.eta[n + 1] - res.eta[n]) * (std::abs(a[k]) + std::abs(b[k]));
    }
    for (const auto& c : res.coeffs)
        for (double x : c)
            if (!std::isfinite(x) || std::abs(x) > 1e3 * (1.0 + source_mass))
                throw NumericalFailure("solve_kernel_ansatz: coefficients grow instead of decaying");
    return res;
}

DecayFit fit_decay(const std::vector<double>& eta, const std::vector<double>& norms, double lo, double hi) {
    if (eta.size() != norms.size()) throw DomainError("fit_decay: size mismatch");
    std::vector<double> xs, ys;
    for (size_t i = 0; i < eta.size(); ++i) {
        if (eta[i] < lo || eta[i] > hi) continue;
        if (!(norms[i] > 1e-300)) throw NumericalFailure("fit_decay: profile below floating-point noise");
        xs.push_back(eta[i]);
        ys.push_back(std::log(norms[i]));
    }
    if (xs.size() < 3) throw NumericalFailure("fit_decay: fewer than three points in the fit window");
    const LinearFit f = linear_fit(xs, ys);
    return {-f.slope, f.r2};
}

DecayFit fit_decay(const MilneSolution& sol, double L) {
    // Samples that have already decayed into rounding noise carry no slope information.
    const double peak = *std::max_element(sol.g_norm.begin(), sol.g_norm.end());
    std::vector<double> eta, norms;
    for (size_t i = 0; i < sol.eta.size(); ++i) {
        if (sol.g_norm[i] <= 1e-11 * peak) break;
        eta.push_back(sol.eta[i]);
        norms.push_back(sol.g_norm[i]);
    }
    return fit_decay(eta, norms, 1.0, 0.5 * L);
}

CorrectorResult build_corrector(const MilneProblem& problem, const EtaGridSpec& spec, double tol) {
    const MilneOperators& ops = *problem.ops;
    std::vector<MilneBatchProblem> batch{{problem.h, problem.S}};
    for (int k : kSlots) batch.push_back({ops.basis.vectors[k], {}});
    auto sols = solve_milne_batch(problem.geom, problem.ops, batch, spec, tol);

    CorrectorResult res;
    for (int c = 0; c < 4; ++c) res.M.col(c) = slots_of(extract_limit(sols[c + 1]));
    res.m_minus_identity = (res.M - Eigen::Matrix4d::Identity()).cwiseAbs().rowwise().sum().maxCoeff();
    res.target = extract_limit(sols[0]);

    Eigen::FullPivLU<Eigen::Matrix4d> lu(res.M);
    if (!lu.isInvertible() || std::abs(lu.determinant()) < 1e-8) throw NumericalFailure("build_corrector: singular M");
    const Eigen::Vector4d d = lu.solve(slots_of(res.target));
    res.tilde_h.a = d[0];
    res.tilde_h.b = Vec3(0.0, d[1], d[2]);
    res.tilde_h.c = d[3];

    // Linearity: boundary data h - sum d_k e_k gives g - sum d_k g_k.
    std::vector<Vector> g = sols[0].g;
    for (size_t n = 0; n < g.size(); ++n)
        for (int c = 0; c < 4; ++c) g[n] -= d[c] * sols[c + 1].g[n];
    res.corrected = finish_solution(sols[0].eta, std::move(g), ops);
    res.corrected.scheme_residual = sols[0].scheme_residual;
    res.corrected_limit = extract_limit(res.corrected);
    const double peak = *std::max_element(res.corrected.g_norm.begin(), res.corrected.g_norm.end());
    res.corrected_is_zero = peak == 0.0;
    if (!res.corrected_is_zero) res.corrected_decay = fit_decay(res.corrected, problem.geom.L);
    res.uncorrected = std::move(sols[0]);
    return res;
}

Vector gaussian_bump(const VelocityGrid& grid, const Vec3& center, double width) {
    if (!(width > 0.0)) throw DomainError("gaussian_bump: width must be positive");
    const CollisionParams unit;
    return grid.sample([&](const Vec3& v) {
        return std::sqrt(maxwellian(v, unit)) * std::exp(-(v - center).squaredNorm() / (2.0 * width * width));
    });
}

SourceFn decaying_shear_source(std::shared_ptr<const VelocityGrid> grid) {
    const CollisionParams unit;
    const Vector shape = grid->sample([&](const Vec3& v) { return std::sqrt(maxwellian(v, unit)) * v[0] * v[1]; });
    return [shape](double eta) { return Vector(std::exp(-eta) * shape); };
}

}  // namespace kinetic
