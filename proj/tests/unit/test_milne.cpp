#include <doctest.h>

#include <cmath>

#include <Eigen/Dense>

#include "fixtures.hpp"
#include "kinetic/milne.hpp"

using namespace kinetic;
using doctest::Approx;

namespace {

double max_abs(const Vector& x) { return x.size() ? x.cwiseAbs().maxCoeff() : 0.0; }

// A field constant in eta, not produced by the solver.
MilneSolution synthetic(const Vector& f, const std::vector<double>& eta, const MilneOperators& ops) {
    MilneSolution s;
    s.eta = eta;
    const auto [q, qf] = project_null(f, ops.basis, *ops.grid);
    for (size_t n = 0; n < eta.size(); ++n) {
        s.g.push_back(f);
        s.q_profile.push_back(q);
        s.w_profile.push_back(f - qf);
        s.g_norm.push_back(ops.grid->norm(f));
    }
    return s;
}

std::vector<double> uniform_eta(double L, int n) {
    std::vector<double> e;
    for (int i = 0; i <= n; ++i) e.push_back(L * i / n);
    return e;
}

// Layer solves shared across test cases: eps = 0.04 keeps the eta grid short.
struct LayerRuns {
    LayerGeometry geom = make_layer_geometry(1.0, 1.4, 0.04);
    std::vector<MilneSolution> sols;  // h = 0, e0, e4, e2, and the shear source with h = 0
    SourceFn shear;
};

const LayerRuns& runs() {
    static const LayerRuns r = [] {
        LayerRuns r;
        const auto ops = fixtures::milne_ops();
        const auto& B = ops->basis.vectors;
        r.shear = decaying_shear_source(ops->grid);
        const Vector zero = Vector::Zero(ops->grid->size());
        r.sols = solve_milne_batch(r.geom, ops, {{zero, {}}, {B[0], {}}, {B[4], {}}, {B[2], {}}, {zero, r.shear}});
        return r;
    }();
    return r;
}

}  // namespace

TEST_CASE("Milne: exact solutions") {
    const auto ops = fixtures::milne_ops();
    const auto& B = ops->basis.vectors;
    const auto& s = runs().sols;
    SUBCASE("zero data") {
        for (const Vector& g : s[0].g) CHECK(max_abs(g) == 0.0);
        const MacroState lim = extract_limit(s[0]);
        CHECK(lim.max_abs() == 0.0);
    }
    SUBCASE("e0 and e4 are stationary") {
        double d0 = 0.0, d4 = 0.0;
        for (size_t n = 0; n < s[1].g.size(); ++n) {
            d0 = std::max(d0, max_abs(s[1].g[n] - B[0]));
            d4 = std::max(d4, max_abs(s[2].g[n] - B[4]));
        }
        CHECK(d0 <= 1e-8);
        CHECK(d4 <= 1e-8);
        CHECK(s[1].reflection_error <= 1e-6);
        const MacroState lim = extract_limit(s[1]);
        CHECK(lim.a == Approx(1.0).epsilon(1e-8));
        CHECK(std::abs(lim.c) <= 1e-8);
    }
    SUBCASE("e2 data: identity plus a small contamination") {
        const MacroState lim = extract_limit(s[3]);
        const double root = std::sqrt(runs().geom.epsilon);
        CHECK(std::abs(lim.b[1] - 1.0) <= 2.0 * root);
        CHECK(std::abs(lim.b[1] - 1.0) > 0.0);
        CHECK(std::abs(lim.b[0]) <= 1e-6);
    }
}

TEST_CASE("Milne: orthogonality and zero flux") {
    const auto ops = fixtures::milne_ops();
    const MilneSolution& sol = runs().sols[4];
    const double gmax = *std::max_element(sol.g_norm.begin(), sol.g_norm.end());
    REQUIRE(gmax > 0.0);
    const auto orth = orthogonality_residuals(sol, *ops, runs().shear);
    for (double r : orth) CHECK(r <= 1e-5 * gmax);
    double q1 = 0.0;
    for (double x : flux_q1(sol, *ops)) q1 = std::max(q1, std::abs(x));
    CHECK(q1 <= 1e-5 * gmax);
    CHECK(sol.scheme_residual <= 1e-6);

    // A source with mass is rejected.
    const Vector e0 = ops->basis.vectors[0];
    SourceFn bad = [e0](double) { return e0; };
    CHECK_THROWS_AS(orthogonality_residuals(sol, *ops, bad), DomainError);
}

TEST_CASE("Milne: synthetic fields") {
    const auto ops = fixtures::milne_ops();
    const auto& B = ops->basis.vectors;
    const auto eta = uniform_eta(5.0, 20);
    const MilneSolution c0 = synthetic(B[0], eta, *ops);
    for (double r : orthogonality_residuals(c0, *ops)) CHECK(std::abs(r) <= 1e-14);
    for (double x : flux_q1(c0, *ops)) CHECK(std::abs(x) <= 1e-14);
    const MacroState lim = extract_limit(c0);
    CHECK(lim.a == Approx(1.0).epsilon(1e-14));
    CHECK(lim.b.norm() <= 1e-14);
    CHECK(std::abs(lim.c) <= 1e-14);

    const MilneSolution c1 = synthetic(B[1], eta, *ops);
    for (double x : flux_q1(c1, *ops)) CHECK(x == Approx(1.0).epsilon(1e-12));
}

TEST_CASE("Milne: beta system") {
    const auto ops = fixtures::milne_ops();
    const BetaSystem sys = assemble_beta_system(*ops);
    CHECK(sys.A(0, 0) == Approx(1.0).epsilon(1e-6));
    CHECK((sys.A - sys.A.transpose()).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK(std::isfinite(sys.condition));
    CHECK(sys.condition >= 1.0);

    SUBCASE("w = 0: beta stays at theta") {
        const LayerGeometry geom = make_layer_geometry(1.0, 1.0, 1e-6);
        const auto eta = uniform_eta(geom.L, 200);
        const MilneSolution c0 = synthetic(ops->basis.vectors[0], eta, *ops);
        const BetaProfile bp = solve_beta_ode(sys, c0, *ops, geom);
        for (size_t n = 0; n < eta.size(); ++n) {
            CHECK(bp.q[n][0] == Approx(1.0).epsilon(1e-6));
            CHECK(std::abs(bp.q[n][1]) <= 1e-6);
            CHECK(std::abs(bp.q[n][2]) <= 1e-6);
            CHECK(std::abs(bp.q[n][3]) <= 1e-6);
            CHECK((bp.beta[n] - bp.beta[0]).cwiseAbs().maxCoeff() <= 1e-6);
        }
    }
    SUBCASE("solver output agrees with the beta reconstruction") {
        const BetaProfile bp = solve_beta_ode(sys, runs().sols[4], *ops, runs().geom, runs().shear);
        CHECK(bp.max_rel_mismatch <= 1e-3);
        const LimitEstimate le = extract_limit_checked(runs().sols[4], *ops, runs().geom, runs().shear);
        CHECK(le.discrepancy <= 1e-5);
    }
}

TEST_CASE("Milne: kernel ansatz") {
    const LayerGeometry geom = make_layer_geometry(1.0, 1.5, 0.01);
    SUBCASE("zero source") {
        const KernelAnsatz k = solve_kernel_ansatz([](double) { return std::array<double, 5>{}; }, geom);
        for (const auto& c : k.coeffs)
            for (double x : c) CHECK(x == 0.0);
    }
    SUBCASE("exponential source against RK4") {
        auto SQ = [](double e) { return std::array<double, 5>{std::exp(-e), 0, 0, 0, 0}; };
        const KernelAnsatz k = solve_kernel_ansatz(SQ, geom, 11);
        CHECK(k.residual <= 1e-8);
        // M y' = -S_Q - K y with y = (A, B1, B2, B3, C), integrated backward from y(L) = 0.
        auto f = [&](double e, const Eigen::Matrix<double, 5, 1>& y) {
            const double G1 = force(geom, 1, e), G2 = force(geom, 2, e), g = G1 + G2;
            Eigen::Matrix<double, 5, 5> M = Eigen::Matrix<double, 5, 5>::Identity(), K;
            M(0, 4) = 5;
            M(4, 0) = 1;
            M(4, 4) = 10;
            K.setZero();
            K(0, 0) = g;
            K(0, 4) = 5 * g;
            K(2, 2) = 2 * G1 + G2;
            K(3, 3) = G1 + 2 * G2;
            K(4, 0) = g;
            K(4, 4) = 10 * g;
            Eigen::Matrix<double, 5, 1> s;
            const auto sq = SQ(e);
            for (int i = 0; i < 5; ++i) s[i] = sq[i];
            return Eigen::Matrix<double, 5, 1>(M.partialPivLu().solve(-s - K * y));
        };
        const int steps = 20000;
        const double h = -geom.L / steps;
        Eigen::Matrix<double, 5, 1> y = Eigen::Matrix<double, 5, 1>::Zero();
        double e = geom.L;
        for (int i = 0; i < steps; ++i) {
            const auto k1 = f(e, y);
            const auto k2 = f(e + h / 2, y + h / 2 * k1);
            const auto k3 = f(e + h / 2, y + h / 2 * k2);
            const auto k4 = f(e + h, y + h * k3);
            y += h / 6 * (k1 + 2 * k2 + 2 * k3 + k4);
            e += h;
        }
        for (int i = 0; i < 5; ++i) CHECK(std::abs(k.coeffs.front()[i] - y[i]) <= 1e-8);
    }
    SUBCASE("B1 row is a pure derivative") {
        auto SQ = [](double e) { return std::array<double, 5>{0, std::exp(-2 * e), 0, 0, 0}; };
        const KernelAnsatz k = solve_kernel_ansatz(SQ, geom, 21);
        for (size_t n = 0; n < k.eta.size(); ++n) {
            const double exact = 0.5 * (std::exp(-2 * k.eta[n]) - std::exp(-2 * geom.L));
            CHECK(k.coeffs[n][1] == Approx(exact).epsilon(1e-8).scale(1e-3));
        }
    }
}

TEST_CASE("Milne: decay fit") {
    std::vector<double> eta, norms;
    for (int i = 0; i <= 50; ++i) {
        eta.push_back(0.2 * i);
        norms.push_back(std::exp(-0.3 * eta.back()));
    }
    const DecayFit f = fit_decay(eta, norms, 1.0, 5.0);
    CHECK(f.K0 == Approx(0.3).epsilon(1e-6));
    CHECK(f.r_squared == Approx(1.0).epsilon(1e-12));
    std::vector<double> zeros(eta.size(), 0.0);
    CHECK_THROWS_AS(fit_decay(eta, zeros, 1.0, 5.0), NumericalFailure);
}

TEST_CASE("Milne: corrector on the zero problem") {
    const auto ops = fixtures::milne_ops();
    MilneProblem p{make_layer_geometry(1.0, 1.0, 0.04), ops, Vector::Zero(ops->grid->size()), {}, 1.0};
    const CorrectorResult r = build_corrector(p);
    CHECK(r.tilde_h.max_abs() == 0.0);
    CHECK(r.tilde_h.b[0] == 0.0);
    CHECK(r.corrected_is_zero);
    CHECK(r.corrected_limit.max_abs() == 0.0);
    // Rows for e0 and e4 are identity rows.
    CHECK((r.M.row(0) - Eigen::RowVector4d(1, 0, 0, 0)).cwiseAbs().maxCoeff() <= 1e-6);
    CHECK((r.M.row(3) - Eigen::RowVector4d(0, 0, 0, 1)).cwiseAbs().maxCoeff() <= 1e-6);
}
