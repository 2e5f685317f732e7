// Command-line driver: reads a JSON scenario, runs one module pipeline, writes
// tables under --out and prints a summary JSON on stdout.
//
// Exit codes: 0 all checks pass, 1 a check failed, 2 usage or configuration
// error, 3 numerical failure.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "kinetic/collision.hpp"
#include "kinetic/expansion.hpp"
#include "kinetic/geometry.hpp"
#include "kinetic/milne.hpp"
#include "kinetic/parallel.hpp"
#include "kinetic/stats.hpp"
#include "kinetic/tracer.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace kinetic;

namespace {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Reads one config section, remembering which keys were consumed so that
// anything left over can be rejected.
class Section {
public:
    Section(const json& root, const std::string& name) : name_(name) {
        if (root.contains(name)) {
            obj_ = root.at(name);
            if (!obj_.is_object()) throw ConfigError(name + ": expected an object");
        } else {
            obj_ = json::object();
        }
    }

    bool has(const std::string& key) {
        seen_.insert(key);
        return obj_.contains(key);
    }

    const json& raw(const std::string& key) {
        seen_.insert(key);
        return obj_.at(key);
    }

    double number(const std::string& key, double def, bool (*ok)(double), const char* what) {
        double v = def;
        if (has(key)) {
            if (!obj_.at(key).is_number()) throw ConfigError(where(key) + ": expected a number");
            v = obj_.at(key).get<double>();
        }
        if (!std::isfinite(v) || !ok(v)) throw ConfigError(where(key) + ": must be " + what);
        return v;
    }

    long integer(const std::string& key, long def, long lo, long hi) {
        long v = def;
        if (has(key)) {
            if (!obj_.at(key).is_number_integer()) throw ConfigError(where(key) + ": expected an integer");
            v = obj_.at(key).get<long>();
        }
        if (v < lo || v > hi)
            throw ConfigError(where(key) + ": must lie in [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
        return v;
    }

    std::string text(const std::string& key, const std::string& def, const std::set<std::string>& allowed) {
        std::string v = def;
        if (has(key)) {
            if (!obj_.at(key).is_string()) throw ConfigError(where(key) + ": expected a string");
            v = obj_.at(key).get<std::string>();
        }
        if (!allowed.empty() && !allowed.count(v)) throw ConfigError(where(key) + ": unsupported value '" + v + "'");
        return v;
    }

    bool flag(const std::string& key, bool def) {
        if (!has(key)) return def;
        if (!obj_.at(key).is_boolean()) throw ConfigError(where(key) + ": expected true or false");
        return obj_.at(key).get<bool>();
    }

    Vec3 vec3(const std::string& key, const Vec3& def) {
        if (!has(key)) return def;
        const json& a = obj_.at(key);
        if (!a.is_array() || a.size() != 3) throw ConfigError(where(key) + ": expected three numbers");
        Vec3 v;
        for (int i = 0; i < 3; ++i) {
            if (!a[i].is_number()) throw ConfigError(where(key) + ": expected three numbers");
            v[i] = a[i].get<double>();
        }
        return v;
    }

    Section child(const std::string& key) {
        seen_.insert(key);
        return Section(obj_, key);
    }

    void finish() const {
        for (const auto& item : obj_.items())
            if (!seen_.count(item.key())) throw ConfigError("unknown key '" + where(item.key()) + "'");
    }

    std::string where(const std::string& key) const { return name_ + "." + key; }

private:
    std::string name_;
    json obj_;
    std::set<std::string> seen_;
};

bool positive(double v) { return v > 0.0; }
bool non_negative(double v) { return v >= 0.0; }
bool unit_open(double v) { return v > 0.0 && v < 1.0; }
bool growth_ok(double v) { return v >= 1.0 && v <= 2.0; }

struct GridConfig {
    int n = 10;
    double v_max = 5.0;
};

struct Config {
    CollisionParams params;
    GridConfig op_grid{24, 6.0};
    double moment_tol = 1e-6, null_tol = 1e-3, gram_tol = 1e-8, adjoint_tol = 1e-10, gamma_tol = 1e-6;
    GridConfig gamma_grid{8, 4.5};
    int gamma_pairs = 10;

    double R1 = 1.0, R2 = 1.0;
    std::vector<double> eps{0.01};

    GridConfig milne_grid{10, 5.0};
    std::string boundary = "basis_0";
    Vec3 bump_center{0.5, 0.3, -0.2};
    double bump_width = 1.0;
    std::vector<double> custom_table;
    std::string source = "zero";
    double milne_tol = 1e-6;
    EtaGridSpec eta_spec;

    double trace_eta = 0.5;
    Vec3 trace_v{0.3, 1.0, -0.5};
    double trace_ds = 1e-3;
    int trace_steps = 10000;

    double cyc_T0 = 2.0, cyc_eps = 0.5, cyc_radius = 1.0;
    std::vector<int> cyc_k{2, 4, 8};
    long cyc_samples = 20000;
    long chi_samples = 100000;
    int chi_bins = 20;
    unsigned long long seed = 20240601ULL;

    std::string fluid = "shear";
    int nx = 21;
    double x0 = 0.0, x1 = 1.0;
    GridConfig exp_grid{10, 5.0};
    std::string gamma_mode = "identity";
    bool transport = false;
    double identity_tol = 1e-5;

    std::string out_dir = ".";
    std::string format = "csv";
};

GridConfig read_grid(Section& s, GridConfig def) {
    GridConfig g;
    g.n = static_cast<int>(s.integer("per_axis_count", def.n, 3, 96));
    g.v_max = s.number("v_max", def.v_max, positive, "positive");
    return g;
}

Config parse_config(const json& root) {
    if (!root.is_object()) throw ConfigError("config: expected a JSON object");
    static const std::set<std::string> sections{"operator", "geometry", "milne", "trace", "cycles", "expansion", "output"};
    for (const auto& item : root.items())
        if (!sections.count(item.key())) throw ConfigError("unknown section '" + item.key() + "'");
    Config c;

    Section op(root, "operator");
    c.params.q0 = op.number("q0", 1.0, positive, "positive");
    const std::string norm = op.text("normalization", "unit_mass", {"unit_mass", "boundary_measure"});
    c.params.mu_normalization = norm == "unit_mass" ? MuNormalization::unit_mass : MuNormalization::boundary_measure;
    c.op_grid = read_grid(op, c.op_grid);
    {
        Section chk = op.child("checks");
        c.moment_tol = chk.number("moment_tol", c.moment_tol, positive, "positive");
        c.null_tol = chk.number("null_tol", c.null_tol, positive, "positive");
        c.gram_tol = chk.number("gram_tol", c.gram_tol, positive, "positive");
        c.adjoint_tol = chk.number("adjoint_tol", c.adjoint_tol, positive, "positive");
        c.gamma_tol = chk.number("gamma_tol", c.gamma_tol, positive, "positive");
        chk.finish();
        Section gg = op.child("gamma_grid");
        c.gamma_grid = read_grid(gg, c.gamma_grid);
        c.gamma_pairs = static_cast<int>(gg.integer("pairs", c.gamma_pairs, 1, 10000));
        gg.finish();
    }
    op.finish();

    Section geo(root, "geometry");
    c.R1 = geo.number("R1", 1.0, positive, "positive");
    c.R2 = geo.number("R2", 1.0, positive, "positive");
    if (geo.has("epsilon")) {
        const json& e = geo.raw("epsilon");
        c.eps.clear();
        if (e.is_number()) {
            c.eps.push_back(e.get<double>());
        } else if (e.is_array() && !e.empty()) {
            for (const json& v : e) {
                if (!v.is_number()) throw ConfigError("geometry.epsilon: expected numbers");
                c.eps.push_back(v.get<double>());
            }
        } else {
            throw ConfigError("geometry.epsilon: expected a number or a non-empty list");
        }
    }
    for (double e : c.eps) {
        if (!unit_open(e)) throw ConfigError("geometry.epsilon: values must lie in (0, 1)");
        try {
            make_layer_geometry(c.R1, c.R2, e);
        } catch (const DomainError& err) {
            throw ConfigError(std::string("geometry: ") + err.what());
        }
    }
    geo.finish();

    Section mil(root, "milne");
    c.milne_grid = read_grid(mil, c.milne_grid);
    {
        std::set<std::string> allowed{"gaussian_bump", "custom_table"};
        for (int k = 0; k < 5; ++k) allowed.insert("basis_" + std::to_string(k));
        c.boundary = mil.text("boundary", c.boundary, allowed);
    }
    c.bump_center = mil.vec3("bump_center", c.bump_center);
    c.bump_width = mil.number("bump_width", c.bump_width, positive, "positive");
    if (mil.has("custom_table")) {
        const json& t = mil.raw("custom_table");
        if (!t.is_array()) throw ConfigError("milne.custom_table: expected an array of numbers");
        for (const json& v : t) {
            if (!v.is_number()) throw ConfigError("milne.custom_table: expected an array of numbers");
            c.custom_table.push_back(v.get<double>());
        }
    }
    if (c.boundary == "custom_table") {
        const size_t need = static_cast<size_t>(c.milne_grid.n) * c.milne_grid.n * c.milne_grid.n;
        if (c.custom_table.size() != need)
            throw ConfigError("milne.custom_table: expected " + std::to_string(need) + " values (one per grid node)");
    }
    c.source = mil.text("source", c.source, {"zero", "decaying_shear"});
    c.milne_tol = mil.number("tol", c.milne_tol, positive, "positive");
    c.eta_spec.wall_step = mil.number("wall_step", 0.0, non_negative, "non-negative");
    c.eta_spec.growth = mil.number("growth", c.eta_spec.growth, growth_ok, "in [1, 2]");
    c.eta_spec.max_step = mil.number("max_step", c.eta_spec.max_step, positive, "positive");
    mil.finish();

    Section tr(root, "trace");
    c.trace_eta = tr.number("eta", c.trace_eta, non_negative, "non-negative");
    c.trace_v = tr.vec3("v", c.trace_v);
    c.trace_ds = tr.number("ds", c.trace_ds, positive, "positive");
    c.trace_steps = static_cast<int>(tr.integer("n_steps", c.trace_steps, 1, 10000000));
    tr.finish();

    Section cy(root, "cycles");
    c.cyc_T0 = cy.number("T0", c.cyc_T0, non_negative, "non-negative");
    c.cyc_eps = cy.number("epsilon", c.cyc_eps, positive, "positive");
    c.cyc_radius = cy.number("radius", c.cyc_radius, positive, "positive");
    if (cy.has("k")) {
        const json& k = cy.raw("k");
        if (!k.is_array() || k.empty()) throw ConfigError("cycles.k: expected a non-empty list of integers");
        c.cyc_k.clear();
        for (const json& v : k) {
            if (!v.is_number_integer() || v.get<long>() < 1 || v.get<long>() > 100000)
                throw ConfigError("cycles.k: entries must be integers in [1, 100000]");
            c.cyc_k.push_back(v.get<int>());
        }
    }
    c.cyc_samples = cy.integer("n_samples", c.cyc_samples, 1000, 1000000000L);
    c.chi_samples = cy.integer("chi_square_samples", c.chi_samples, 1000, 1000000000L);
    c.chi_bins = static_cast<int>(cy.integer("bins", c.chi_bins, 2, 10000));
    if (cy.has("seed")) {
        const json& s = cy.raw("seed");
        if (!s.is_number_unsigned()) throw ConfigError("cycles.seed: expected a non-negative integer");
        c.seed = s.get<unsigned long long>();
    }
    cy.finish();

    Section ex(root, "expansion");
    c.fluid = ex.text("fluid", c.fluid, {"trivial", "shear", "compressive"});
    c.nx = static_cast<int>(ex.integer("nx", c.nx, 5, 100000));
    c.x0 = ex.number("x0", c.x0, [](double) { return true; }, "finite");
    c.x1 = ex.number("x1", c.x1, [](double) { return true; }, "finite");
    if (!(c.x1 > c.x0)) throw ConfigError("expansion: x1 must exceed x0");
    c.exp_grid = read_grid(ex, c.exp_grid);
    c.gamma_mode = ex.text("gamma", c.gamma_mode, {"identity", "direct"});
    c.transport = ex.flag("transport", c.transport);
    c.identity_tol = ex.number("identity_tol", c.identity_tol, positive, "positive");
    ex.finish();

    Section out(root, "output");
    c.out_dir = out.text("directory", c.out_dir, {});
    c.format = out.text("format", c.format, {"csv", "json"});
    out.finish();
    return c;
}

// --- output ---------------------------------------------------------------

struct Table {
    std::vector<std::string> columns;
    std::vector<std::vector<double>> rows;
};

std::string fmt17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string write_table(const Table& t, const std::string& dir, const std::string& stem, const std::string& format) {
    fs::create_directories(dir);
    const fs::path path = fs::path(dir) / (stem + "." + format);
    std::ofstream os(path);
    if (!os) throw ConfigError("cannot write " + path.string());
    if (format == "csv") {
        for (size_t i = 0; i < t.columns.size(); ++i) os << (i ? "," : "") << t.columns[i];
        os << "\n";
        for (const auto& r : t.rows) {
            for (size_t i = 0; i < r.size(); ++i) os << (i ? "," : "") << fmt17(r[i]);
            os << "\n";
        }
    } else {
        json j;
        j["columns"] = t.columns;
        j["rows"] = t.rows;
        os << j.dump(1) << "\n";
    }
    return path.string();
}

json state_json(const MacroState& m) { return json::array({m.a, m.b[0], m.b[1], m.b[2], m.c}); }

struct Report {
    json metrics = json::object();
    json checks = json::object();
    json timings = json::object();
    json files = json::array();

    void check(const std::string& name, bool pass) { checks[name] = pass; }
    bool all_pass() const {
        for (const auto& c : checks.items())
            if (!c.value().get<bool>()) return false;
        return true;
    }
};

class Timer {
public:
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

private:
    std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

// --- commands ------------------------------------------------------------

void cmd_operator_check(const Config& c, Report& r) {
    Timer t;
    auto grid = std::make_shared<VelocityGrid>(make_velocity_grid(c.op_grid.n, c.op_grid.v_max));
    const MomentReport mom = gaussian_moments(*grid);
    r.metrics["moments"] = mom.values;
    r.metrics["moment_max_rel_error"] = mom.max_rel_error;
    r.check("moments", mom.max_rel_error <= c.moment_tol && mom.weights_positive);
    if (!r.checks["moments"].get<bool>()) return;  // the operator is not assembled on a failed grid

    const NullBasis basis = make_null_basis(*grid);
    const double gram_err = (basis.gram - Eigen::Matrix<double, 5, 5>::Identity()).cwiseAbs().maxCoeff();
    r.metrics["gram_error"] = gram_err;
    r.check("orthonormality", gram_err <= c.gram_tol);

    const KernelOperator op = assemble_collision(grid, c.params);
    r.timings["assemble"] = t.seconds();
    const NullResidualReport nr = null_residuals(op, basis);
    r.metrics["null_residuals"] = nr.relative;
    r.check("null_space", nr.max_relative <= c.null_tol);

    Rng rng(c.seed);
    std::normal_distribution<double> nd;
    Vector f(grid->size()), g(grid->size());
    for (int i = 0; i < grid->size(); ++i) {
        f[i] = nd(rng) * basis.vectors[0][i];
        g[i] = nd(rng) * basis.vectors[0][i];
    }
    const double adj = adjointness_defect(op, f, g);
    r.metrics["adjointness_defect"] = adj;
    r.check("self_adjoint", adj <= c.adjoint_tol);

    const SpectralGapReport gap = spectral_gap(op, basis, 300, 1e-9, static_cast<unsigned>(c.seed));
    r.metrics["spectral_gap"] = {{"lambda_min", gap.lambda_min}, {"nu_min", gap.nu_min}, {"iterations", gap.iterations}};
    r.check("coercive", gap.converged && gap.lambda_min > 0.0);
    const auto [c1, c2] = collision_frequency_bounds(op);
    r.metrics["nu_bounds"] = {c1, c2};
    r.timings["operator"] = t.seconds();

    auto ggrid = std::make_shared<VelocityGrid>(make_velocity_grid(c.gamma_grid.n, c.gamma_grid.v_max));
    const GammaOperator gop = make_gamma(ggrid, c.params);
    const double orth = gamma_orthogonality(gop, make_null_basis(*ggrid), c.gamma_pairs, c.seed);
    r.metrics["gamma_orthogonality"] = orth;
    r.check("gamma_orthogonality", orth <= c.gamma_tol);
    r.timings["total"] = t.seconds();
}

Vector boundary_data(const Config& c, const MilneOperators& ops) {
    const VelocityGrid& grid = *ops.grid;
    if (c.boundary.rfind("basis_", 0) == 0) return ops.basis.vectors[c.boundary.back() - '0'];
    if (c.boundary == "gaussian_bump") return gaussian_bump(grid, c.bump_center, c.bump_width);
    return Eigen::Map<const Vector>(c.custom_table.data(), static_cast<Eigen::Index>(c.custom_table.size()));
}

Table profile_table(const MilneSolution& sol, const MilneOperators& ops) {
    Table t{{"eta", "g_norm", "q0", "q1", "q2", "q3", "q4", "orth0", "orth2", "orth3", "orth4", "flux_q1"}, {}};
    const auto orth = orthogonality_profile(sol, ops);
    const auto q1 = flux_q1(sol, ops);
    for (size_t n = 0; n < sol.eta.size(); ++n) {
        const auto q = sol.q_profile[n].coeffs();
        t.rows.push_back({sol.eta[n], sol.g_norm[n], q[0], q[1], q[2], q[3], q[4], orth[n][0], orth[n][1], orth[n][2],
                          orth[n][3], q1[n]});
    }
    return t;
}

void cmd_milne(const Config& c, Report& r, bool corrector) {
    Timer t;
    auto grid = std::make_shared<VelocityGrid>(make_velocity_grid(c.milne_grid.n, c.milne_grid.v_max));
    const auto ops = make_milne_operators(assemble_collision(grid, c.params));
    r.timings["operators"] = t.seconds();
    const Vector h = boundary_data(c, *ops);
    const SourceFn S = c.source == "decaying_shear" ? decaying_shear_source(grid) : SourceFn{};

    Table sweep;
    sweep.columns = {"epsilon", "L", "gL0", "gL1", "gL2", "gL3", "gL4", "K0", "r_squared"};
    if (corrector) sweep.columns.push_back("m_minus_identity");
    json rows = json::array();
    std::vector<double> log_eps, log_m;
    bool structure_ok = true, decay_ok = true;

    for (size_t i = 0; i < c.eps.size(); ++i) {
        const LayerGeometry geom = make_layer_geometry(c.R1, c.R2, c.eps[i]);
        const MilneProblem problem{geom, ops, h, S, 1.0};
        json row{{"epsilon", c.eps[i]}, {"L", geom.L}};
        const MilneSolution* sol = nullptr;
        CorrectorResult cr;
        MilneSolution plain;
        MacroState limit;
        DecayFit fit;
        if (corrector) {
            cr = build_corrector(problem, c.eta_spec, c.milne_tol);
            sol = &cr.corrected;
            limit = cr.corrected_limit;
            fit = cr.corrected_decay;
            json M = json::array();
            for (int a = 0; a < 4; ++a) M.push_back({cr.M(a, 0), cr.M(a, 1), cr.M(a, 2), cr.M(a, 3)});
            row["M"] = M;
            row["m_minus_identity"] = cr.m_minus_identity;
            row["uncorrected_limit"] = state_json(cr.target);
            row["tilde_h"] = state_json(cr.tilde_h);
            log_eps.push_back(std::log(c.eps[i]));
            log_m.push_back(std::log(cr.m_minus_identity));
            decay_ok = decay_ok && (cr.corrected_is_zero || (fit.K0 > 0.0 && fit.r_squared >= 0.9));
        } else {
            plain = solve_milne(problem, c.eta_spec, c.milne_tol);
            sol = &plain;
            limit = extract_limit_checked(plain, *ops, geom, S, c.milne_tol).g_L;
            const double peak = *std::max_element(plain.g_norm.begin(), plain.g_norm.end());
            if (peak > 0.0) fit = fit_decay(plain, geom.L);
        }
        const auto orth = orthogonality_residuals(*sol, *ops, S);
        const auto q1 = flux_q1(*sol, *ops);
        double gmax = 0.0, orth_max = 0.0, q1_max = 0.0;
        for (double v : sol->g_norm) gmax = std::max(gmax, v);
        for (double v : orth) orth_max = std::max(orth_max, v);
        for (double v : q1) q1_max = std::max(q1_max, std::abs(v));
        const BetaProfile beta = solve_beta_ode(assemble_beta_system(*ops), *sol, *ops, geom, S);
        structure_ok = structure_ok && orth_max <= 1e-5 * gmax && q1_max <= 1e-5 * gmax && beta.max_rel_mismatch <= 1e-3;

        row["g_L"] = state_json(limit);
        row["decay"] = {{"K0", fit.K0}, {"r_squared", fit.r_squared}};
        row["orthogonality_max"] = orth_max;
        row["q1_max"] = q1_max;
        row["beta_mismatch"] = beta.max_rel_mismatch;
        row["scheme_residual"] = sol->scheme_residual;
        row["cells"] = sol->eta.size() - 1;
        rows.push_back(row);

        const auto q = limit.coeffs();
        std::vector<double> srow{c.eps[i], geom.L, q[0], q[1], q[2], q[3], q[4], fit.K0, fit.r_squared};
        if (corrector) srow.push_back(cr.m_minus_identity);
        sweep.rows.push_back(srow);
        r.files.push_back(write_table(profile_table(*sol, *ops), c.out_dir,
                                      std::string(corrector ? "corrector" : "milne") + "_profile_" + std::to_string(i),
                                      c.format));
        r.timings["epsilon_" + std::to_string(i)] = t.seconds();
    }
    r.metrics["runs"] = rows;
    r.check("milne_structure", structure_ok);
    if (corrector) {
        r.check("corrected_decay", decay_ok);
        if (log_eps.size() >= 2) {
            const LinearFit lf = linear_fit(log_eps, log_m);
            r.metrics["m_slope"] = lf.slope;
            r.metrics["m_slope_r2"] = lf.r2;
            r.check("m_slope", std::abs(lf.slope - 0.5) <= 0.15);
        }
    }
    r.files.push_back(write_table(sweep, c.out_dir, corrector ? "corrector_sweep" : "milne_sweep", c.format));
}

void cmd_trace(const Config& c, Report& r) {
    if (c.eps.size() != 1) throw ConfigError("trace: geometry.epsilon must be a single value");
    const LayerGeometry geom = make_layer_geometry(c.R1, c.R2, c.eps[0]);
    if (c.trace_eta > geom.L) throw ConfigError("trace.eta: must lie in [0, L]");
    const TracePath path = trace_characteristic(geom, make_char_state(geom, c.trace_eta, c.trace_v), c.trace_ds,
                                                c.trace_steps);
    Table t{{"step", "eta", "v_eta", "v_phi", "v_psi", "zeta", "E1", "E2", "E3"}, {}};
    for (size_t i = 0; i < path.states.size(); ++i) {
        const CharState& s = path.states[i];
        t.rows.push_back({static_cast<double>(i), s.eta, s.v[0], s.v[1], s.v[2], zeta(geom, s.eta, s.v), s.E1, s.E2,
                          s.E3});
    }
    r.files.push_back(write_table(t, c.out_dir, "trace", c.format));
    r.metrics["steps"] = path.states.size() - 1;
    r.metrics["left_layer"] = path.left_layer;
    r.metrics["drift"] = {{"zeta", path.drift_zeta}, {"E1", path.drift_E1}, {"E2", path.drift_E2}, {"E3", path.drift_E3}};
    r.check("conservation", std::max({path.drift_zeta, path.drift_E1, path.drift_E2, path.drift_E3}) <= 1e-8);
}

void cmd_cycles(const Config& c, Report& r) {
    const ConvexDomain dom{Vec3::Zero(), c.cyc_radius};
    Rng rng(c.seed);
    Table t{{"k", "estimate", "ci_low", "ci_high", "samples"}, {}};
    std::vector<ExitEstimate> est;
    for (int k : c.cyc_k) {
        est.push_back(estimate_exit_measure(dom, c.cyc_T0, k, c.cyc_eps, c.cyc_samples, rng));
        const ExitEstimate& e = est.back();
        t.rows.push_back({static_cast<double>(k), e.probability, e.ci.lo, e.ci.hi, static_cast<double>(e.samples)});
    }
    bool monotone = true;
    for (size_t i = 0; i + 1 < est.size(); ++i)
        if (c.cyc_k[i + 1] > c.cyc_k[i] && est[i + 1].ci.lo > est[i].ci.hi) monotone = false;
    const double p = diffuse_normal_pvalue(c.chi_samples, c.chi_bins, rng);
    r.files.push_back(write_table(t, c.out_dir, "cycles", c.format));
    r.metrics["estimates"] = t.rows;
    r.metrics["chi_square_pvalue"] = p;
    r.check("monotone_in_k", monotone);
    r.check("diffuse_sampler", p >= 0.01);
}

void cmd_expand(const Config& c, Report& r) {
    Timer t;
    const FluidField fluid = named_fluid(c.fluid, c.nx, c.x0, c.x1);
    auto grid = std::make_shared<VelocityGrid>(make_velocity_grid(c.exp_grid.n, c.exp_grid.v_max));
    const KernelOperator op = assemble_collision(grid, c.params);
    const NullBasis basis = make_null_basis(*grid);
    const Matrix L = conservative_matrix(op, basis);
    GammaPairTable table;
    if (c.gamma_mode == "direct") table = make_gamma_pairs(make_gamma(grid, c.params), basis);
    r.timings["setup"] = t.seconds();

    const ExpansionCoeffs e =
        build_expansion(fluid, L, basis, *grid, c.gamma_mode == "direct" ? &table : nullptr);
    const auto res = order_identity_profile(e, L, basis, *grid);
    Table tab{{"x", "rho", "u1", "u2", "u3", "theta", "B2_0", "B2_1", "B2_2", "B2_3", "B2_4", "F1_norm", "C2_norm",
               "residual"},
              {}};
    double worst = 0.0;
    for (int i = 0; i < fluid.size(); ++i) {
        const auto b = e.B2[i].coeffs();
        tab.rows.push_back({fluid.x[i], fluid.rho[i], fluid.u[i][0], fluid.u[i][1], fluid.u[i][2], fluid.theta[i], b[0],
                            b[1], b[2], b[3], b[4], grid->norm(e.F1[i]), grid->norm(e.C2[i]), res[i]});
        worst = std::max(worst, res[i]);
    }
    r.files.push_back(write_table(tab, c.out_dir, "expansion", c.format));
    const double bous = boussinesq_residual(fluid), div = divergence_residual(fluid);
    r.metrics["identity_residual_max"] = worst;
    r.metrics["cg_residual"] = e.cg_residual;
    r.metrics["boussinesq_residual"] = bous;
    r.metrics["divergence_residual"] = div;
    r.check("fluid_constraints", bous <= 1e-8 && div <= 1e-8);
    r.check("order2_identity", worst <= c.identity_tol);
    if (c.transport) {
        const TransportCoefficients tc = compute_transport_coefficients(L, *grid, basis);
        r.metrics["transport"] = {{"gamma1", tc.gamma1}, {"gamma2", tc.gamma2}};
        r.check("transport_positive", tc.gamma1 > 0.0 && tc.gamma2 > 0.0);
    }
    r.timings["total"] = t.seconds();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Kinetic boundary-layer toolkit"};
    app.require_subcommand(1, 1);
    std::string config_path, out_dir, format;
    unsigned long long seed = 0;
    app.add_option("--config", config_path, "JSON scenario file")->check(CLI::ExistingFile);
    app.add_option("--out", out_dir, "output directory (overrides output.directory)");
    app.add_option("--seed", seed, "random seed (overrides cycles.seed)");
    app.add_option("--format", format, "table format")->check(CLI::IsMember({"csv", "json"}));
    const std::vector<std::string> names{"operator-check", "milne", "milne-corrector", "trace", "cycles", "expand"};
    for (const auto& n : names) app.add_subcommand(n)->fallthrough();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }
    const std::string cmd = app.get_subcommands().front()->get_name();

    json root = json::object();
    Config cfg;
    try {
        if (!config_path.empty()) {
            std::ifstream is(config_path);
            root = json::parse(is);
        }
        cfg = parse_config(root);
        if (!out_dir.empty()) cfg.out_dir = out_dir;
        if (!format.empty()) cfg.format = format;
        if (app.count("--seed")) cfg.seed = seed;
    } catch (const std::exception& e) {
        std::cerr << "configuration error: " << e.what() << "\n";
        return 2;
    }

    Report report;
    int rc = 0;
    try {
        if (cmd == "operator-check") cmd_operator_check(cfg, report);
        else if (cmd == "milne") cmd_milne(cfg, report, false);
        else if (cmd == "milne-corrector") cmd_milne(cfg, report, true);
        else if (cmd == "trace") cmd_trace(cfg, report);
        else if (cmd == "cycles") cmd_cycles(cfg, report);
        else cmd_expand(cfg, report);
        rc = report.all_pass() ? 0 : 1;
    } catch (const ConfigError& e) {
        std::cerr << "configuration error: " << e.what() << "\n";
        return 2;
    } catch (const DomainError& e) {
        std::cerr << "invalid input: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        rc = 3;
        report.metrics["error"] = e.what();
    }

    json summary;
    summary["command"] = cmd;
    summary["config"] = root;
    summary["seed"] = cfg.seed;
    summary["threads"] = thread_cap();
    summary["status"] = rc == 0 ? "pass" : rc == 1 ? "fail" : "error";
    summary["checks"] = report.checks;
    summary["metrics"] = report.metrics;
    summary["files"] = report.files;
    summary["timings"] = report.timings;
    std::cout << summary.dump(2) << std::endl;
    return rc;
}
