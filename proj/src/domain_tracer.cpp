#include <array>
#include <cmath>

#include "kinetic/parallel.hpp"

#include "kinetic/tracer.hpp"

namespace kinetic {

double hitting_time(const ConvexDomain& d, const Vec3& x, const Vec3& v, double eps) {
    if (!(eps > 0.0)) throw DomainError("hitting_time: eps must be positive");
    const double vv = v.squaredNorm();
    if (vv == 0.0) throw DomainError("hitting_time: zero velocity");
    const Vec3 r = x - d.center;
    const double R2 = d.radius * d.radius;
    const double c = r.squaredNorm() - R2;
    if (c > 1e-12 * R2) throw DomainError("hitting_time: start outside the domain");

    // |r - s v|^2 = R^2 with s = eps t.
    const double rv = r.dot(v);
    const bool on_boundary = std::abs(c) <= 1e-12 * R2;
    if (on_boundary) {
        const double cosang = rv / (r.norm() * std::sqrt(vv));
        if (cosang <= 1e-10) throw DomainError("hitting_time: grazing or outgoing velocity at a boundary start");
        return 2.0 * rv / vv / eps;
    }
    const double disc = rv * rv - vv * c;
    const double root = std::sqrt(disc);
    // Larger root of vv s^2 - 2 rv s + c, written without cancellation.
    const double s = rv >= 0.0 ? (rv + root) / vv : c / (rv - root);
    return s / eps;
}

Vec3 sample_diffuse_velocity(const Vec3& n, Rng& rng) {
    const double len = n.norm();
    if (!(len > 0.0)) throw DomainError("sample_diffuse_velocity: zero normal");
    const Vec3 e = n / len;
    const Vec3 seed = std::abs(e[0]) < 0.9 ? Vec3::UnitX() : Vec3::UnitY();
    const Vec3 t1 = e.cross(seed).normalized();
    const Vec3 t2 = e.cross(t1);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    std::normal_distribution<double> gauss(0.0, 1.0);
    const double s = std::sqrt(-2.0 * std::log1p(-uni(rng)));
    const double a = gauss(rng), b = gauss(rng);
    return s * e + a * t1 + b * t2;
}

std::vector<CycleTriple> generate_cycle(const ConvexDomain& d, const Vec3& x, const Vec3& v, int k, double eps,
                                        Rng& rng) {
    if (k < 1) throw DomainError("generate_cycle: k must be >= 1");
    std::vector<CycleTriple> out;
    out.reserve(k);
    double t = 0.0;
    Vec3 xc = x, vc = v;
    for (int i = 0; i < k; ++i) {
        if (i > 0) {
            // Redraw velocities that are too close to grazing for a stable exit time.
            int tries = 0;
            const Vec3 n = d.normal(xc);
            do {
                vc = sample_diffuse_velocity(n, rng);
                if (++tries > 100) throw NumericalFailure("generate_cycle: no admissible velocity after 100 draws");
            } while (vc.dot(n) <= 1e-10 * vc.norm());
        }
        const double tb = hitting_time(d, xc, vc, eps);
        t += tb;
        xc = xc - eps * tb * vc;
        // Snap back onto the sphere to keep round-off from accumulating.
        xc = d.center + d.radius * d.normal(xc);
        out.push_back({t, xc, vc});
    }
    return out;
}

ExitEstimate estimate_exit_measure(const ConvexDomain& d, double T0, int k, double eps, long n_samples, Rng& rng) {
    if (n_samples < 1000) throw DomainError("estimate_exit_measure: need at least 1000 samples");
    if (!(T0 >= 0.0)) throw DomainError("estimate_exit_measure: T0 must be non-negative");
    const Vec3 x0 = d.center + d.radius * Vec3::UnitZ();
    const Vec3 n0 = d.normal(x0);

    // A fixed number of shards, each with its own stream seeded from rng, so
    // the estimate does not depend on how many threads run them.
    constexpr int kShards = 16;
    std::array<Rng::result_type, kShards> seeds;
    for (auto& s : seeds) s = rng();
    std::array<long, kShards> hits{};
    parallel_for(kShards, [&](int shard) {
        Rng local(seeds[shard]);
        const long begin = n_samples * shard / kShards, end = n_samples * (shard + 1) / kShards;
        for (long s = begin; s < end; ++s) {
            const Vec3 v0 = sample_diffuse_velocity(n0, local);
            const auto cyc = generate_cycle(d, x0, v0, k, eps, local);
            if (cyc.back().t < T0 / eps) ++hits[shard];
        }
    });
    long total = 0;
    for (long h : hits) total += h;
    ExitEstimate e;
    e.samples = n_samples;
    e.probability = static_cast<double>(total) / n_samples;
    e.ci = wilson_interval(total, n_samples);
    return e;
}

double diffuse_normal_pvalue(long n_samples, int n_bins, Rng& rng) {
    if (n_bins < 2 || n_samples < n_bins) throw DomainError("diffuse_normal_pvalue: bad sample or bin count");
    const Vec3 n = Vec3::UnitZ();
    std::vector<long> counts(n_bins, 0);
    for (long i = 0; i < n_samples; ++i) {
        const double s = sample_diffuse_velocity(n, rng).dot(n);
        // CDF of the Rayleigh law maps the sample to a uniform variate.
        const double u = -std::expm1(-0.5 * s * s);
        counts[std::min(n_bins - 1, static_cast<int>(u * n_bins))]++;
    }
    const double expect = static_cast<double>(n_samples) / n_bins;
    double stat = 0.0;
    for (long c : counts) stat += (c - expect) * (c - expect) / expect;
    return chi_square_pvalue(stat, n_bins - 1);
}

}  // namespace kinetic
