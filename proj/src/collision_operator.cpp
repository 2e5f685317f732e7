#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "kinetic/collision.hpp"

namespace kinetic {

namespace {

constexpr double kPi = std::numbers::pi;

struct Monomials {
    std::vector<std::array<int, 3>> alpha;
    int degree = 0;

    explicit Monomials(int p) : degree(p) {
        for (int t = 0; t <= p; ++t)
            for (int a = t; a >= 0; --a)
                for (int b = t - a; b >= 0; --b) alpha.push_back({a, b, t - a - b});
    }
    int size() const { return static_cast<int>(alpha.size()); }

    // out[k] += s * d^alpha_k
    void accumulate(const Vec3& d, double s, double* out) const {
        double px[16], py[16], pz[16];
        px[0] = py[0] = pz[0] = 1.0;
        for (int k = 1; k <= degree; ++k) {
            px[k] = px[k - 1] * d[0];
            py[k] = py[k - 1] * d[1];
            pz[k] = pz[k - 1] * d[2];
        }
        for (int k = 0; k < size(); ++k) out[k] += s * px[alpha[k][0]] * py[alpha[k][1]] * pz[alpha[k][2]];
    }

    void accumulate(const Vec3& d, double s, double* out, const std::vector<int>& subset) const {
        double px[16], py[16], pz[16];
        px[0] = py[0] = pz[0] = 1.0;
        for (int k = 1; k <= degree; ++k) {
            px[k] = px[k - 1] * d[0];
            py[k] = py[k - 1] * d[1];
            pz[k] = pz[k - 1] * d[2];
        }
        for (int k : subset) out[k] += s * px[alpha[k][0]] * py[alpha[k][1]] * pz[alpha[k][2]];
    }
};

}  // namespace

double collision_frequency(const Vec3& v, const CollisionParams& params) {
    params.validate();
    const double r = v.norm();
    double bracket;
    if (r < 1e-3) {
        bracket = 2.0 + 2.0 * r * r / 3.0;
    } else {
        const double integral = 0.5 * std::sqrt(kPi) * std::erf(r);
        bracket = (2.0 * r + 1.0 / r) * integral + std::exp(-r * r);
    }
    return kPi * kPi * params.q0 * bracket;
}

double kernel_k1(const Vec3& u, const Vec3& v, const CollisionParams& params) {
    return kPi * params.q0 * (u - v).norm() * std::exp(-0.5 * (u.squaredNorm() + v.squaredNorm()));
}

double kernel_k2(const Vec3& u, const Vec3& v, const CollisionParams& params) {
    const double r2 = (u - v).squaredNorm();
    if (r2 == 0.0) throw DomainError("kernel_k2: singular at u == v");
    const double s = u.squaredNorm() - v.squaredNorm();
    return 2.0 * kPi * params.q0 / std::sqrt(r2) * std::exp(-0.25 * r2 - 0.25 * s * s / r2);
}

double kernel_value(const Vec3& u, const Vec3& v, const CollisionParams& params) {
    params.validate();
    return kernel_k2(u, v, params) - kernel_k1(u, v, params);
}

double collision_frequency_unit(double speed, double q0) {
    CollisionParams p;
    p.q0 = q0;
    return collision_frequency(Vec3(speed / std::numbers::sqrt2, 0.0, 0.0), p);
}

double kernel_unit(const Vec3& u, const Vec3& v, double q0) {
    const double uu = u.squaredNorm();
    const double vv = v.squaredNorm();
    const double r2 = (u - v).squaredNorm();
    const double r = std::sqrt(r2);
    const double s = uu - vv;
    const double k2 = kPi * q0 / r * std::exp(-0.125 * r2 - 0.125 * s * s / r2);
    const double k1 = 0.25 * kPi * q0 * r * std::exp(-0.25 * (uu + vv));
    return k2 - k1;
}

// Near-diagonal corrections for pairs of nodes. The correction for the pair
// (v_i, v_j) is calibrated for the kernel frozen at the pair midpoint,
// F_m(w) = k(m + w/2, m - w/2), which is even in w; the correction matrix is
// therefore symmetric. Midpoints live on the half-lattice and are stored once
// per orbit of the octahedral group.
class CorrectionTable {
public:
    CorrectionTable(const VelocityGrid& g, double q0, const SingularCorrection& c) : corr_(c) {
        const int n = g.per_axis_count;
        span_ = n;  // folded half-lattice indices run over 0..n-1
        side_ = 2 * c.half_width + 1;
        h3_ = g.h * g.h * g.h;
        const Monomials mono(c.degree);
        const int nm = mono.size();
        const double h = g.h;
        const double sigma = c.window * h;
        auto window = [&](double r2) { return std::exp(-0.5 * r2 / (sigma * sigma)); };

        const int ns = side_ * side_ * side_;
        Matrix phi(nm, ns);
        for (int a = 0; a < side_; ++a)
            for (int b = 0; b < side_; ++b)
                for (int d = 0; d < side_; ++d) {
                    const Vec3 x = Vec3(a - c.half_width, b - c.half_width, d - c.half_width) * h;
                    std::vector<double> col(nm, 0.0);
                    mono.accumulate(x / sigma, window(x.squaredNorm()), col.data());
                    for (int k = 0; k < nm; ++k) phi(k, (a * side_ + b) * side_ + d) = col[k];
                }
        const Matrix pinv = Eigen::CompleteOrthogonalDecomposition<Matrix>(phi).pseudoInverse();

        // Membership is decided in integer units so that it cannot depend on
        // how h rounds.
        const int lim = static_cast<int>(std::floor(c.cutoff * c.window + 1e-9));
        std::vector<Vec3> lattice;
        for (int a = -lim; a <= lim; ++a)
            for (int b = -lim; b <= lim; ++b)
                for (int d = -lim; d <= lim; ++d)
                    if ((a || b || d) && a * a + b * b + d * d <= lim * lim) lattice.push_back(Vec3(a, b, d) * h);

        const Rule1D rr = gauss_legendre(c.radial_nodes, 0.0, lim * h);
        const Rule1D rt = gauss_legendre(c.polar_nodes, -1.0, 1.0);
        const double dphi = 2.0 * kPi / c.azimuth_nodes;
        std::vector<double> cph(c.azimuth_nodes), sph(c.azimuth_nodes);
        for (int ip = 0; ip < c.azimuth_nodes; ++ip) {
            cph[ip] = std::cos((ip + 0.5) * dphi);
            sph[ip] = std::sin((ip + 0.5) * dphi);
        }

        // Only even-degree moments survive: the frozen kernel and the window are even.
        std::vector<int> even_idx;
        for (int k = 0; k < nm; ++k)
            if ((mono.alpha[k][0] + mono.alpha[k][1] + mono.alpha[k][2]) % 2 == 0) even_idx.push_back(k);
        std::vector<Vec3> half_lattice;
        for (const Vec3& x : lattice)
            if (x[0] > 0 || (x[0] == 0 && (x[1] > 0 || (x[1] == 0 && x[2] > 0)))) half_lattice.push_back(x / sigma);
        std::vector<double> lattice_window;
        for (const Vec3& x : half_lattice) lattice_window.push_back(2.0 * h3_ * window(sigma * sigma * x.squaredNorm()));

        table_.assign(static_cast<size_t>(span_) * span_ * span_, {});
        std::vector<double> exact(nm), lat(nm), ring(nm);
        std::vector<double> hp(c.degree + 1);
        for (int a = 0; a < span_; ++a)
            for (int b = 0; b <= a; ++b)
                for (int d = 0; d <= b; ++d) {
                    const Vec3 m = Vec3(a, b, d) * (0.5 * h);
                    auto frozen = [&](const Vec3& w) { return kernel_unit(m + 0.5 * w, m - 0.5 * w, q0); };
                    std::fill(exact.begin(), exact.end(), 0.0);
                    std::fill(lat.begin(), lat.end(), 0.0);
                    // The frozen kernel is axisymmetric about m, so each polar ring
                    // needs one kernel value per radius and one azimuthal sum.
                    const Vec3 ax = m.norm() > 0.0 ? Vec3(m.normalized()) : Vec3(0, 0, 1);
                    const Vec3 t0 = std::abs(ax[0]) < 0.9 ? Vec3(1, 0, 0) : Vec3(0, 1, 0);
                    const Vec3 b1 = ax.cross(t0).normalized();
                    const Vec3 b2 = ax.cross(b1);
                    for (int it = 0; it < c.polar_nodes; ++it) {
                        const double ct = rt.x[it];
                        const double st = std::sqrt(std::max(0.0, 1.0 - ct * ct));
                        std::fill(hp.begin(), hp.end(), 0.0);
                        for (int ir = 0; ir < c.radial_nodes; ++ir) {
                            const double r = rr.x[ir];
                            double wr = rr.w[ir] * r * r * window(r * r) * rt.w[it] * dphi *
                                        frozen(r * ct * ax + r * st * b1);
                            for (int p = 0; p <= c.degree; ++p, wr *= r / sigma) hp[p] += wr;
                        }
                        std::fill(ring.begin(), ring.end(), 0.0);
                        for (int ip = 0; ip < c.azimuth_nodes; ++ip)
                            mono.accumulate(ct * ax + st * (cph[ip] * b1 + sph[ip] * b2), 1.0, ring.data(), even_idx);
                        for (int k : even_idx) {
                            const auto& al = mono.alpha[k];
                            exact[k] += ring[k] * hp[al[0] + al[1] + al[2]];
                        }
                    }
                    for (size_t l = 0; l < half_lattice.size(); ++l)
                        mono.accumulate(half_lattice[l], lattice_window[l] * frozen(sigma * half_lattice[l]),
                                        lat.data(), even_idx);
                    Vector rhs = Vector::Zero(nm);
                    for (int k : even_idx) rhs[k] = exact[k] - lat[k];
                    const Vector cw = pinv * rhs;
                    std::vector<double> even(ns);
                    for (int o = 0; o < ns; ++o) even[o] = 0.5 * (cw[o] + cw[ns - 1 - o]);
                    table_[key(a, b, d)] = std::move(even);
                }
    }

    int half_width() const { return corr_.half_width; }

    // Correction for the pair (ti, ti + o), in units of the cell volume.
    double weight(const std::array<int, 3>& ti, const std::array<int, 3>& o) const {
        int f[3], s[3];
        for (int q = 0; q < 3; ++q) {
            const int k = 2 * ti[q] + o[q] - (span_ - 1);
            f[q] = std::abs(k);
            s[q] = k < 0 ? -1 : 1;
        }
        int perm[3] = {0, 1, 2};
        std::sort(perm, perm + 3, [&](int x, int y) { return f[x] > f[y] || (f[x] == f[y] && x < y); });
        int oc[3];
        for (int q = 0; q < 3; ++q) oc[q] = s[perm[q]] * o[perm[q]] + corr_.half_width;
        const auto& cw = table_[key(f[perm[0]], f[perm[1]], f[perm[2]])];
        return cw[(oc[0] * side_ + oc[1]) * side_ + oc[2]] / h3_;
    }

private:
    size_t key(int a, int b, int d) const { return (static_cast<size_t>(a) * span_ + b) * span_ + d; }

    SingularCorrection corr_;
    int span_ = 0;
    int side_ = 0;
    double h3_ = 1.0;
    std::vector<std::vector<double>> table_;
};

RowEvaluator::RowEvaluator(std::shared_ptr<const VelocityGrid> grid, const CollisionParams& params,
                           const SingularCorrection& corr)
    : grid_(std::move(grid)), params_(params) {
    params_.validate();
    if (corr.half_width >= grid_->per_axis_count / 2) throw DomainError("correction stencil wider than the grid");
    table_ = std::make_unique<CorrectionTable>(*grid_, params_.q0, corr);
}

RowEvaluator::~RowEvaluator() = default;

double RowEvaluator::nu(int i) const { return collision_frequency_unit(grid_->nodes[i].norm(), params_.q0); }

void RowEvaluator::kernel_row(int i, double* row) const {
    const VelocityGrid& g = *grid_;
    const Vec3& v = g.nodes[i];
    for (int j = 0; j < g.size(); ++j) row[j] = (j == i) ? 0.0 : g.weights[j] * kernel_unit(g.nodes[j], v, params_.q0);
    const int n = g.per_axis_count;
    const int hw = table_->half_width();
    const auto t = g.triple(i);
    for (int a = -hw; a <= hw; ++a)
        for (int b = -hw; b <= hw; ++b)
            for (int d = -hw; d <= hw; ++d) {
                const int x = t[0] + a, y = t[1] + b, z = t[2] + d;
                if (x < 0 || y < 0 || z < 0 || x >= n || y >= n || z >= n) continue;
                const int j = g.index(x, y, z);
                row[j] += g.weights[j] * table_->weight(t, {a, b, d});
            }
}

Vector KernelOperator::apply(const Vector& f) const {
    if (f.size() != size()) throw DomainError("apply_L: dimension mismatch");
    return nu_diag.cwiseProduct(f) - k_matrix * f;
}

Vector apply_L(const KernelOperator& op, const Vector& f) { return op.apply(f); }

KernelOperator assemble_collision(std::shared_ptr<const VelocityGrid> grid, const CollisionParams& params,
                                  const SingularCorrection& corr) {
    const MomentReport mr = gaussian_moments(*grid);
    if (!mr.weights_positive || mr.max_rel_error > 1e-6)
        throw DomainError("assemble_collision: grid does not reproduce Gaussian moments");
    RowEvaluator rows(grid, params, corr);
    KernelOperator op;
    op.grid = grid;
    op.params = params;
    const int n = grid->size();
    op.nu_diag.resize(n);
    op.k_matrix.resize(n, n);
    // Column j of K^T is row j of K; the column-major fill is contiguous.
    for (int i = 0; i < n; ++i) {
        op.nu_diag[i] = rows.nu(i);
        rows.kernel_row(i, op.k_matrix.col(i).data());
    }
    op.k_matrix.transposeInPlace();
    return op;
}

namespace {

int orbit_size(int a, int b, int c) {
    int perms = 6;
    if (a == b && b == c)
        perms = 1;
    else if (a == b || b == c || a == c)
        perms = 3;
    return 8 * perms;
}

NullResidualReport finish_report(const std::array<double, 5>& sq, const std::array<double, 5>& norm2) {
    NullResidualReport r;
    for (int k = 0; k < 5; ++k) {
        r.relative[k] = std::sqrt(sq[k] / norm2[k]);
        r.max_relative = std::max(r.max_relative, r.relative[k]);
    }
    return r;
}

}  // namespace

NullResidualReport null_residuals_matrix_free(std::shared_ptr<const VelocityGrid> grid, const CollisionParams& params,
                                              const SingularCorrection& corr) {
    RowEvaluator rows(grid, params, corr);
    const VelocityGrid& g = *grid;
    const NullBasis basis = make_null_basis(g);
    const int n = g.per_axis_count, half = n / 2, N = g.size();
    std::vector<double> row(N);
    double s0 = 0.0, s4 = 0.0, s123 = 0.0;
    for (int a = 0; a < half; ++a)
        for (int b = 0; b <= a; ++b)
            for (int c = 0; c <= b; ++c) {
                const int i = g.index(half + a, half + b, half + c);
                rows.kernel_row(i, row.data());
                const double nu = rows.nu(i);
                double r[5];
                for (int k = 0; k < 5; ++k) {
                    double kf = 0.0;
                    for (int j = 0; j < N; ++j) kf += row[j] * basis.vectors[k][j];
                    r[k] = nu * basis.vectors[k][i] - kf;
                }
                const double wgt = orbit_size(a, b, c) * g.weights[i];
                s0 += wgt * r[0] * r[0];
                s4 += wgt * r[4] * r[4];
                s123 += wgt * (r[1] * r[1] + r[2] * r[2] + r[3] * r[3]);
            }
    std::array<double, 5> sq{s0, s123 / 3, s123 / 3, s123 / 3, s4};
    std::array<double, 5> n2{};
    for (int k = 0; k < 5; ++k) n2[k] = g.dot(basis.vectors[k], basis.vectors[k]);
    return finish_report(sq, n2);
}

NullResidualReport null_residuals(const KernelOperator& op, const NullBasis& basis) {
    std::array<double, 5> sq{}, n2{};
    for (int k = 0; k < 5; ++k) {
        const Vector r = op.apply(basis.vectors[k]);
        sq[k] = op.grid->dot(r, r);
        n2[k] = op.grid->dot(basis.vectors[k], basis.vectors[k]);
    }
    return finish_report(sq, n2);
}

Matrix conservative_matrix(const KernelOperator& op, const NullBasis& basis) {
    const int n = op.size();
    const VelocityGrid& g = *op.grid;
    // P = E G^{-1} E^T W
    Matrix E(n, 5);
    for (int k = 0; k < 5; ++k) E.col(k) = basis.vectors[k];
    Matrix EtW = E.transpose();
    for (int j = 0; j < n; ++j) EtW.col(j) *= g.weights[j];
    const Matrix P = E * basis.gram_inverse * EtW;
    Matrix L = -op.k_matrix;
    L.diagonal() += op.nu_diag;
    const Matrix Q = Matrix::Identity(n, n) - P;
    return Q * L * Q;
}

double adjointness_defect(const KernelOperator& op, const Vector& f, const Vector& g) {
    const VelocityGrid& grid = *op.grid;
    const double lhs = grid.dot(op.apply(f), g);
    const double rhs = grid.dot(f, op.apply(g));
    return std::abs(lhs - rhs) / (grid.norm(f) * grid.norm(g));
}

std::pair<double, double> collision_frequency_bounds(const KernelOperator& op) {
    double lo = 1e300, hi = 0.0;
    for (int i = 0; i < op.size(); ++i) {
        const double bracket = std::sqrt(1.0 + op.grid->nodes[i].squaredNorm());
        lo = std::min(lo, op.nu_diag[i] / bracket);
        hi = std::max(hi, op.nu_diag[i] / bracket);
    }
    return {lo, hi};
}

SpectralGapReport spectral_gap(const KernelOperator& op, const NullBasis& basis, int max_iter, double tol,
                               unsigned seed) {
    const VelocityGrid& g = *op.grid;
    const int n = op.size();
    Vector sw(n), isw(n);
    for (int i = 0; i < n; ++i) {
        sw[i] = std::sqrt(g.weights[i]);
        isw[i] = 1.0 / sw[i];
    }
    // Euclidean-orthonormal image of the null basis under W^{1/2}.
    Matrix E(n, 5);
    for (int k = 0; k < 5; ++k) E.col(k) = basis.vectors[k].cwiseProduct(sw);
    Eigen::HouseholderQR<Matrix> qr(E);
    const Matrix Q0 = qr.householderQ() * Matrix::Identity(n, 5);

    auto deflate = [&](Vector& x) { x -= Q0 * (Q0.transpose() * x); };
    auto matvec = [&](const Vector& x) {
        Vector y = op.apply(x.cwiseProduct(isw)).cwiseProduct(sw);
        deflate(y);
        return y;
    };

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd;
    Vector q(n);
    for (int i = 0; i < n; ++i) q[i] = nd(rng);
    deflate(q);
    q.normalize();

    std::vector<Vector> V{q};
    std::vector<double> alpha, beta;
    SpectralGapReport rep;
    rep.nu_min = op.nu_diag.minCoeff();
    double prev = 0.0;
    for (int it = 0; it < max_iter; ++it) {
        Vector w = matvec(V.back());
        const double a = V.back().dot(w);
        alpha.push_back(a);
        w -= a * V.back();
        if (V.size() > 1) w -= beta.back() * V[V.size() - 2];
        for (int pass = 0; pass < 2; ++pass)
            for (const Vector& u : V) w -= u.dot(w) * u;
        deflate(w);
        const double b = w.norm();
        const int m = static_cast<int>(alpha.size());
        Matrix T = Matrix::Zero(m, m);
        for (int k = 0; k < m; ++k) {
            T(k, k) = alpha[k];
            if (k + 1 < m) T(k, k + 1) = T(k + 1, k) = beta[k];
        }
        Eigen::SelfAdjointEigenSolver<Matrix> es(T);
        const double theta = es.eigenvalues()[0];
        const double resid = std::abs(b * es.eigenvectors()(m - 1, 0));
        rep.lambda_min = theta;
        rep.iterations = m;
        if (m > 5 && resid < tol * std::abs(theta) && std::abs(theta - prev) < tol * std::abs(theta)) {
            rep.converged = true;
            break;
        }
        prev = theta;
        if (b < 1e-14) {
            rep.converged = true;
            break;
        }
        beta.push_back(b);
        V.push_back(w / b);
    }
    return rep;
}

}  // namespace kinetic
