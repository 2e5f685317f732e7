#include <doctest.h>

#include <cmath>

#include "kinetic/tracer.hpp"

using namespace kinetic;
using doctest::Approx;

TEST_CASE("hitting time") {
    const ConvexDomain ball{Vec3(0.5, -0.2, 1.0), 1.0};
    CHECK(hitting_time(ball, ball.center, Vec3(0, 0, 1), 0.1) == Approx(10.0).epsilon(1e-14));
    CHECK(hitting_time(ball, ball.center, Vec3(0, 3, 4), 0.1) == Approx(2.0).epsilon(1e-14));

    Rng rng(3);
    std::uniform_real_distribution<double> U(-1, 1);
    std::normal_distribution<double> N(0, 1);
    int checked = 0;
    while (checked < 500) {
        const Vec3 r(U(rng), U(rng), U(rng));
        if (r.norm() >= 0.99) continue;
        const Vec3 x = ball.center + r;
        const Vec3 v(N(rng), N(rng), N(rng));
        const double eps = 0.05;
        const double tb = hitting_time(ball, x, v, eps);
        CHECK(tb > 0.0);
        const Vec3 xb = x - eps * tb * v;
        CHECK(std::abs((xb - ball.center).norm() - ball.radius) <= 1e-12);
        // The backward ray leaves through x_b.
        CHECK((-v).dot(ball.normal(xb)) > 0.0);
        // Bisection on |x - eps t v - c| - R over [0, t_hi].
        double lo = 0.0, hi = 4.0 / (eps * v.norm());
        for (int i = 0; i < 200; ++i) {
            const double mid = 0.5 * (lo + hi);
            ((x - eps * mid * v - ball.center).norm() < ball.radius ? lo : hi) = mid;
        }
        CHECK(tb == Approx(lo).epsilon(1e-10));
        ++checked;
    }

    const Vec3 pole = ball.center + Vec3(0, 0, 1);
    CHECK(hitting_time(ball, pole, Vec3(0, 0, 1), 0.5) == Approx(4.0).epsilon(1e-14));
    CHECK_THROWS_AS(hitting_time(ball, pole, Vec3(1, 0, 0), 0.5), DomainError);   // grazing
    CHECK_THROWS_AS(hitting_time(ball, pole, Vec3(0, 0, -1), 0.5), DomainError);  // leaving backward
    CHECK_THROWS_AS(hitting_time(ball, ball.center, Vec3::Zero(), 0.5), DomainError);
}

TEST_CASE("diffuse sampler moments") {
    Rng rng(5);
    const Vec3 n = Vec3(1, 2, -2).normalized();
    const int N = 100000;
    double sn = 0, sn2 = 0, t1 = 0, t2 = 0;
    int positive = 0;
    const Vec3 a = n.cross(Vec3::UnitX()).normalized();
    const Vec3 b = n.cross(a);
    for (int i = 0; i < N; ++i) {
        const Vec3 v = sample_diffuse_velocity(n, rng);
        const double s = v.dot(n);
        positive += s > 0.0;
        sn += s;
        sn2 += s * s;
        t1 += v.dot(a);
        t2 += v.dot(b);
    }
    CHECK(positive == N);
    const double mean = sn / N;
    const double sd = std::sqrt(sn2 / N - mean * mean);
    CHECK(std::abs(mean - std::sqrt(M_PI / 2)) <= 3 * sd / std::sqrt(N));
    CHECK(std::abs(t1 / N) <= 3 / std::sqrt(N));
    CHECK(std::abs(t2 / N) <= 3 / std::sqrt(N));
    CHECK_THROWS_AS(sample_diffuse_velocity(Vec3::Zero(), rng), DomainError);
}

TEST_CASE("diffuse sampler chi-square") {
    Rng rng(17);
    CHECK(diffuse_normal_pvalue(100000, 20, rng) >= 0.01);
}

TEST_CASE("stochastic cycles") {
    const ConvexDomain ball{Vec3::Zero(), 2.0};
    Rng rng(9);
    const auto one = generate_cycle(ball, Vec3::Zero(), Vec3(0, 1, 0), 1, 0.25, rng);
    REQUIRE(one.size() == 1);
    CHECK(one[0].t == Approx(hitting_time(ball, Vec3::Zero(), Vec3(0, 1, 0), 0.25)).epsilon(1e-14));

    const auto cyc = generate_cycle(ball, Vec3(0.3, 0.1, 0), Vec3(1, -0.4, 0.2), 25, 0.25, rng);
    REQUIRE(cyc.size() == 25);
    for (size_t i = 0; i < cyc.size(); ++i) {
        CHECK(std::abs(cyc[i].x.norm() - 2.0) <= 1e-10);
        if (i > 0) {
            CHECK(cyc[i].t > cyc[i - 1].t);
            // Redrawn at x_{i-1} pointing into the domain for the backward flight.
            CHECK(cyc[i].v.dot(ball.normal(cyc[i - 1].x)) > 0.0);
        }
    }
    CHECK_THROWS_AS(generate_cycle(ball, Vec3::Zero(), Vec3(1, 0, 0), 0, 0.25, rng), DomainError);
}

TEST_CASE("exit measure") {
    const ConvexDomain ball{Vec3::Zero(), 1.0};
    SUBCASE("no time, no exits") {
        Rng rng(1);
        const ExitEstimate e = estimate_exit_measure(ball, 0.0, 1, 0.5, 2000, rng);
        CHECK(e.probability == 0.0);
        CHECK(e.ci.lo == 0.0);
        CHECK(e.samples == 2000);
    }
    SUBCASE("large time budget captures everything") {
        Rng rng(2);
        const ExitEstimate e = estimate_exit_measure(ball, 1e9, 3, 0.5, 2000, rng);
        CHECK(e.probability == 1.0);
        CHECK(e.ci.hi == 1.0);
    }
    SUBCASE("non-increasing in k") {
        Rng rng(3);
        double prev_lo = 1.0;
        double prev_p = 1.0;
        for (int k : {2, 4, 8}) {
            const ExitEstimate e = estimate_exit_measure(ball, 2.0, k, 0.5, 20000, rng);
            CHECK(e.ci.lo <= prev_lo + 1e-15);
            CHECK(e.probability <= prev_p);
            CHECK(e.ci.lo <= e.probability);
            CHECK(e.probability <= e.ci.hi);
            prev_lo = e.ci.lo;
            prev_p = e.probability;
        }
    }
    SUBCASE("reproducible from the seed") {
        Rng a(42), b(42);
        CHECK(estimate_exit_measure(ball, 2.0, 2, 0.5, 5000, a).probability ==
              estimate_exit_measure(ball, 2.0, 2, 0.5, 5000, b).probability);
    }
    Rng rng(0);
    CHECK_THROWS_AS(estimate_exit_measure(ball, 2.0, 2, 0.5, 999, rng), DomainError);
}
