// One line per acceptance criterion: "[n] PASS|FAIL <name>: <measured values>".
// Exit status is the number of failed criteria.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "kinetic/collision.hpp"
#include "kinetic/expansion.hpp"
#include "kinetic/geometry.hpp"
#include "kinetic/milne.hpp"
#include "kinetic/stats.hpp"
#include "kinetic/tracer.hpp"

using namespace kinetic;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

int failures = 0;

void report(int n, const char* name, const std::function<Outcome()>& body) {
    const auto t0 = Clock::now();
    Outcome o;
    try {
        o = body();
    } catch (const std::exception& e) {
        o = {false, std::string("exception: ") + e.what()};
    }
    if (!o.pass) ++failures;
    std::printf("[%2d] %s %s: %s (%.1f s)\n", n, o.pass ? "PASS" : "FAIL", name, o.detail.c_str(), seconds_since(t0));
    std::fflush(stdout);
}

Vector random_field(const VelocityGrid& g, std::mt19937_64& rng) {
    std::normal_distribution<double> N(0.0, 1.0);
    const CollisionParams unit;
    Vector f(g.size());
    for (int i = 0; i < g.size(); ++i) f[i] = N(rng) * std::sqrt(maxwellian(g.nodes[i], unit));
    return f;
}

// Milne runs at desk resolution, shared between criteria 6 to 8.
struct MilneContext {
    std::shared_ptr<const VelocityGrid> grid;
    std::shared_ptr<const MilneOperators> ops;
};

const MilneContext& milne_context() {
    static const MilneContext ctx = [] {
        auto g = std::make_shared<const VelocityGrid>(make_velocity_grid(10, 5.0));
        const KernelOperator op = assemble_collision(g, CollisionParams{});
        return MilneContext{g, make_milne_operators(op)};
    }();
    return ctx;
}

const std::vector<double> kEpsilons{0.04, 0.01, 0.0025};

const std::vector<CorrectorResult>& corrector_runs() {
    static const std::vector<CorrectorResult> runs = [] {
        const auto& ctx = milne_context();
        std::vector<CorrectorResult> out;
        for (double eps : kEpsilons) {
            MilneProblem p{make_layer_geometry(1.0, 1.5, eps), ctx.ops,
                           gaussian_bump(*ctx.grid, Vec3(0.4, 0.6, -0.3), 0.8), {}, 1.0};
            out.push_back(build_corrector(p));
        }
        return out;
    }();
    return runs;
}

}  // namespace

int main() {
    std::mt19937_64 rng(20240601);

    report(1, "Gaussian moments", [] {
        const auto t0 = Clock::now();
        const VelocityGrid g = make_velocity_grid(24, 6.0);
        const MomentReport m = gaussian_moments(g);
        const double t = seconds_since(t0);
        return Outcome{m.max_rel_error <= 1e-6 && t < 5.0,
                       fmt("moments %.15g %.15g %.15g %.15g, max rel error %.2e, %.2f s", m.values[0], m.values[1],
                           m.values[2], m.values[3], m.max_rel_error, t)};
    });

    report(2, "null space and orthonormality", [] {
        auto g0 = std::make_shared<const VelocityGrid>(make_velocity_grid(40, 8.0));
        auto g1 = std::make_shared<const VelocityGrid>(make_velocity_grid(60, 8.0));
        const NullResidualReport r0 = null_residuals_matrix_free(g0, CollisionParams{});
        const NullResidualReport r1 = null_residuals_matrix_free(g1, CollisionParams{});
        double gram = 0.0;
        for (const auto& g : {g0, g1}) {
            const NullBasis b = make_null_basis(*g);
            gram = std::max(gram, (b.gram - Eigen::Matrix<double, 5, 5>::Identity()).cwiseAbs().maxCoeff());
        }
        const double ratio = r0.max_relative / r1.max_relative;
        return Outcome{r0.max_relative <= 1e-4 && ratio >= 2.0 && gram <= 1e-8,
                       fmt("max ||L e_k||/||e_k|| %.3e at 40^3, %.3e at 60^3 (ratio %.2f), |gram - I| %.2e",
                           r0.max_relative, r1.max_relative, ratio, gram)};
    });

    report(3, "self-adjointness and coercivity", [&rng] {
        const auto t0 = Clock::now();
        auto g = std::make_shared<const VelocityGrid>(make_velocity_grid(24, 6.0));
        const KernelOperator op = assemble_collision(g, CollisionParams{});
        const NullBasis b = make_null_basis(*g);
        double defect = 0.0;
        for (int i = 0; i < 10; ++i)
            defect = std::max(defect, adjointness_defect(op, random_field(*g, rng), random_field(*g, rng)));
        const SpectralGapReport gap = spectral_gap(op, b);
        const double t = seconds_since(t0);
        return Outcome{defect <= 1e-10 && gap.converged && gap.lambda_min > 0.0 && t < 120.0,
                       fmt("adjointness defect %.2e, lambda_min %.4f (nu_min %.4f, %d Lanczos steps), %.1f s", defect,
                           gap.lambda_min, gap.nu_min, gap.iterations, t)};
    });

    report(4, "Gamma orthogonality", [] {
        auto g = std::make_shared<const VelocityGrid>(make_velocity_grid(8, 4.5));
        const GammaOperator gop = make_gamma(g, CollisionParams{});
        const double worst = gamma_orthogonality(gop, make_null_basis(*g), 100, 99);
        return Outcome{worst <= 1e-6, fmt("max |<Gamma[f,g], e_k>| / (||f|| ||g||) = %.2e over 100 pairs", worst)};
    });

    report(5, "weight and characteristic conservation", [&rng] {
        std::uniform_real_distribution<double> U(-2.0, 2.0), E(0.05, 0.95);
        double drift = 0.0;
        for (auto [R1, R2, eps] : {std::tuple{1.0, 1.0, 0.01}, {1.0, 1.6, 0.04}, {2.0, 0.8, 0.0025}}) {
            const LayerGeometry g = make_layer_geometry(R1, R2, eps);
            for (int i = 0; i < 4; ++i) {
                const Vec3 v(std::abs(U(rng)) + 0.1, U(rng), U(rng));
                const TracePath p =
                    trace_characteristic(g, make_char_state(g, 0.1 * g.L, v), 1e-3, 10000, 1.0);
                drift = std::max({drift, p.drift_zeta, p.drift_E1, p.drift_E2, p.drift_E3});
            }
        }
        const LayerGeometry g = make_layer_geometry(1.0, 0.7, 0.02);
        double annihilation = 0.0;
        int tested = 0;
        while (tested < 1000) {
            const Vec3 v(U(rng), U(rng), U(rng));
            const double eta = E(rng) * g.L;
            if (zeta(g, eta, v) < 0.05) continue;
            annihilation = std::max(annihilation, std::abs(transport_of_zeta(g, eta, v)));
            ++tested;
        }
        return Outcome{drift <= 1e-8 && annihilation <= 1e-6,
                       fmt("max relative drift %.2e over 12 traces of 10^4 steps, max |transport zeta| %.2e", drift,
                           annihilation)};
    });

    report(6, "Milne structure", [] {
        const auto& ctx = milne_context();
        const LayerGeometry geom = make_layer_geometry(1.0, 1.5, 0.01);
        const SourceFn S = decaying_shear_source(ctx.grid);
        const MilneProblem p{geom, ctx.ops, gaussian_bump(*ctx.grid, Vec3(0.4, 0.6, -0.3), 0.8), S, 1.0};
        const MilneSolution sol = solve_milne(p);
        const double gmax = *std::max_element(sol.g_norm.begin(), sol.g_norm.end());
        double orth = 0.0;
        for (double r : orthogonality_residuals(sol, *ctx.ops, S)) orth = std::max(orth, r);
        double q1 = 0.0;
        for (double x : flux_q1(sol, *ctx.ops)) q1 = std::max(q1, std::abs(x));
        const BetaProfile bp = solve_beta_ode(assemble_beta_system(*ctx.ops), sol, *ctx.ops, geom, S);
        return Outcome{orth <= 1e-5 * gmax && q1 <= 1e-5 * gmax && bp.max_rel_mismatch <= 1e-3,
                       fmt("max ||g|| %.3f, orthogonality %.2e, q1 %.2e, beta mismatch %.2e", gmax, orth, q1,
                           bp.max_rel_mismatch)};
    });

    report(7, "corrector order", [] {
        const auto t0 = Clock::now();
        const auto& runs = corrector_runs();
        std::vector<double> lx, ly;
        double rows = 0.0;
        std::string norms;
        for (size_t i = 0; i < runs.size(); ++i) {
            lx.push_back(std::log(kEpsilons[i]));
            ly.push_back(std::log(runs[i].m_minus_identity));
            const Eigen::Matrix4d D = runs[i].M - Eigen::Matrix4d::Identity();
            rows = std::max({rows, D.row(0).cwiseAbs().maxCoeff(), D.row(3).cwiseAbs().maxCoeff()});
            norms += fmt("%s%.4g", i ? ", " : "", runs[i].m_minus_identity);
        }
        const LinearFit f = linear_fit(lx, ly);
        const double t = seconds_since(t0);
        return Outcome{std::abs(f.slope - 0.5) <= 0.15 && rows <= 1e-6 && t < 1800.0,
                       fmt("||M - I|| = %s, log-log slope %.4f, e0/e4 rows off identity by %.2e, %.0f s",
                           norms.c_str(), f.slope, rows, t)};
    });

    report(8, "decay of corrected solutions", [] {
        const auto& ctx = milne_context();
        const auto& runs = corrector_runs();
        bool ok = true;
        std::string d;
        for (size_t i = 0; i < runs.size(); ++i) {
            const CorrectorResult& r = runs[i];
            const double L = 1.0 / std::sqrt(kEpsilons[i]);
            const DecayFit raw = fit_decay(r.uncorrected, L);
            // Remove the far-field limit from the uncorrected field and refit.
            const Vector gL = ctx.ops->basis.reconstruct(r.target);
            std::vector<double> rem;
            for (const Vector& g : r.uncorrected.g) rem.push_back(ctx.grid->norm(g - gL));
            const DecayFit shifted = fit_decay(r.uncorrected.eta, rem, 1.0, 0.5 * L);
            const bool run_ok = !r.corrected_is_zero && r.corrected_decay.K0 > 0.0 &&
                                r.corrected_decay.r_squared >= 0.9 && r.target.max_abs() > 1e-3 &&
                                raw.K0 < 0.1 * r.corrected_decay.K0 && shifted.K0 > 0.0;
            ok = ok && run_ok;
            d += fmt("%seps %g: K0 %.3f R2 %.4f; uncorrected |g_L| %.3f, K0 on g %.2e, on g - g_L %.3f",
                     i ? "; " : "", kEpsilons[i], r.corrected_decay.K0, r.corrected_decay.r_squared,
                     r.target.max_abs(), raw.K0, shifted.K0);
        }
        return Outcome{ok, d};
    });

    report(9, "initial layer", [&rng] {
        auto g = std::make_shared<const VelocityGrid>(make_velocity_grid(10, 5.0));
        const KernelOperator op = assemble_collision(g, CollisionParams{});
        const NullBasis b = make_null_basis(*g);
        const Matrix L = conservative_matrix(op, b);
        const Vector z = random_field(*g, rng);
        const InitialLayerResult res = initial_layer_solve(z, {}, L, *g, b, 3.0, 0.01);
        const Vector Pz = b.reconstruct(project_null(z, b, *g).first);
        const double err = (b.reconstruct(res.g_inf) - Pz).cwiseAbs().maxCoeff();
        const double fin = (res.g_final - Pz).cwiseAbs().maxCoeff();
        return Outcome{err <= 1e-6 && fin <= 1e-6 && res.decay_r2 >= 0.99,
                       fmt("|g_inf - P z| %.2e, |g(3) - P z| %.2e, decay rate %.3f with R2 %.6f", err, fin,
                           res.decay_rate, res.decay_r2)};
    });

    report(10, "stochastic cycles", [&rng] {
        const ConvexDomain ball{Vec3(0.1, -0.2, 0.3), 1.0};
        std::uniform_real_distribution<double> U(-1, 1);
        std::normal_distribution<double> N(0, 1);
        double worst = 0.0;
        int checked = 0;
        while (checked < 1000) {
            const Vec3 r(U(rng), U(rng), U(rng));
            if (r.norm() >= 0.999) continue;
            const Vec3 x = ball.center + r, v(N(rng), N(rng), N(rng));
            const double eps = 0.1;
            const double tb = hitting_time(ball, x, v, eps);
            double lo = 0.0, hi = 4.0 / (eps * v.norm());
            for (int i = 0; i < 200; ++i) {
                const double mid = 0.5 * (lo + hi);
                ((x - eps * mid * v - ball.center).norm() < ball.radius ? lo : hi) = mid;
            }
            worst = std::max(worst, std::abs(tb - lo) / lo);
            ++checked;
        }
        const double p = diffuse_normal_pvalue(100000, 20, rng);
        bool mono = true;
        std::string est;
        Interval prev{1.0, 1.0};
        for (int k : {2, 4, 8}) {
            const ExitEstimate e = estimate_exit_measure(ball, 2.0, k, 0.5, 20000, rng);
            mono = mono && e.ci.lo <= prev.hi;
            prev = e.ci;
            est += fmt("%sk=%d %.4f [%.4f, %.4f]", k == 2 ? "" : ", ", k, e.probability, e.ci.lo, e.ci.hi);
        }
        return Outcome{worst <= 1e-10 && p >= 0.01 && mono,
                       fmt("hitting time rel error %.2e, chi-square p %.3f, P(t_k < T0/eps): %s", worst, p,
                           est.c_str())};
    });

    report(11, "expansion order-2 identity", [] {
        auto g = std::make_shared<const VelocityGrid>(make_velocity_grid(10, 5.0));
        const KernelOperator op = assemble_collision(g, CollisionParams{});
        const NullBasis b = make_null_basis(*g);
        const Matrix L = conservative_matrix(op, b);
        const FluidField fluid = named_fluid("shear", 21, 0.0, 1.0);
        const ExpansionCoeffs e = build_expansion(fluid, L, b, *g);
        const double r_ident = order_identity_residual(e, L, b, *g);
        const GammaPairTable table = make_gamma_pairs(make_gamma(g, CollisionParams{}), b);
        const ExpansionCoeffs ed = build_expansion(fluid, L, b, *g, &table);
        const double r_direct = order_identity_residual(ed, L, b, *g);
        bool exact = true;
        for (size_t i = 0; i < e.A1.size(); ++i) {
            const auto a = e.A1[i].coeffs();
            const std::array<double, 5> want{0.0, a[0] * a[1], a[0] * a[2], a[0] * a[3],
                                             a[0] * a[4] + a[1] * a[1] + a[2] * a[2] + a[3] * a[3]};
            exact = exact && e.B2[i].coeffs() == want;
        }
        return Outcome{r_ident <= 1e-5 && r_direct <= 1e-5 && exact,
                       fmt("residual %.2e (Gamma through L), %.2e (direct Gamma table), B2 substitution %s", r_ident,
                           r_direct, exact ? "exact" : "mismatch")};
    });

    report(12, "kernel weighted bound", [] {
        // The bound C / <v> is uniform in v: <v> x integral over the test speeds
        // must stay within twice its large-|v| value (|v| = 40), and at rho = 0
        // the |v| = 5 value within 10 times the |v| = 0 value.
        const CollisionParams params;
        auto scaled = [&](double s, double rho) {
            const KernelIntegralResult r = weighted_kernel_integral(Vec3(s, 0, 0), 0.01, rho, 3.0, params);
            if (r.divergent) throw NumericalFailure("divergent weighted kernel integral");
            return std::sqrt(1.0 + s * s) * r.value;
        };
        bool ok = true;
        std::string d;
        for (double rho : {0.0, 0.2}) {
            const double plateau = scaled(40.0, rho);
            double worst = 0.0;
            std::string vals;
            for (double s : {0.0, 1.0, 2.0, 5.0}) {
                const double x = scaled(s, rho);
                ok = ok && std::isfinite(x);
                worst = std::max(worst, x);
                vals += fmt("%s%.4g", vals.empty() ? "" : ", ", x);
            }
            ok = ok && worst <= 2.0 * plateau;
            if (rho == 0.0) ok = ok && scaled(5.0, rho) <= 10.0 * scaled(0.0, rho);
            d += fmt("%srho %.1f: %s (|v| = 0,1,2,5), %.4g at |v| = 40", d.empty() ? "" : "; ", rho, vals.c_str(),
                     plateau);
        }
        return Outcome{ok, d};
    });

    std::printf("%d of 12 criteria failed\n", failures);
    return failures;
}
