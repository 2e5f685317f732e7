#include <cmath>

#include "kinetic/collision.hpp"
#include "kinetic/stats.hpp"

namespace kinetic {

InitialLayerResult initial_layer_solve(const Vector& z, const std::function<Vector(double)>& S, const Matrix& L,
                                       const VelocityGrid& grid, const NullBasis& basis, double tau_max, double dt,
                                       double tol) {
    if (!(dt > 0.0) || !(tau_max > 0.0)) throw DomainError("initial_layer_solve: dt and tau_max must be positive");
    const int n = grid.size();
    if (z.size() != n || L.rows() != n || L.cols() != n) throw DomainError("initial_layer_solve: dimension mismatch");

    // W^{1/2} L W^{-1/2} is symmetric for a W-self-adjoint L.
    Vector sw(n);
    for (int i = 0; i < n; ++i) sw[i] = std::sqrt(grid.weights[i]);
    Matrix A = sw.asDiagonal() * L * sw.cwiseInverse().asDiagonal();
    A = 0.5 * (A + A.transpose()).eval();
    Eigen::SelfAdjointEigenSolver<Matrix> es(A);
    if (es.info() != Eigen::Success) throw NumericalFailure("initial_layer_solve: eigensolver failed");
    const Matrix& U = es.eigenvectors();
    const Vector& lam = es.eigenvalues();

    // Exact propagator for piecewise-constant source sampled at the step midpoint.
    Vector decay(n), phi(n);
    for (int k = 0; k < n; ++k) {
        const double x = lam[k] * dt;
        decay[k] = std::exp(-x);
        phi[k] = std::abs(x) < 1e-12 ? dt : -std::expm1(-x) / lam[k];
    }

    const int steps = static_cast<int>(std::ceil(tau_max / dt - 1e-9));
    InitialLayerResult res;
    Vector y = U.transpose() * z.cwiseProduct(sw);
    auto record = [&](double t) {
        Vector g = (U * y).cwiseQuotient(sw);
        res.tau.push_back(t);
        res.orth_norm.push_back(grid.norm(project_orthogonal(g, basis, grid)));
        res.trajectory.push_back(std::move(g));
    };
    record(0.0);
    for (int s = 0; s < steps; ++s) {
        const double t = s * dt;
        Vector src = S ? S(t + 0.5 * dt) : Vector();
        y = y.cwiseProduct(decay);
        if (src.size() == n) y += phi.cwiseProduct(U.transpose() * src.cwiseProduct(sw));
        record(t + dt);
    }
    res.g_final = res.trajectory.back();
    res.g_inf = project_null(res.g_final, basis, grid).first;
    res.converged = res.orth_norm.back() <= tol * std::max(1.0, grid.norm(z));

    // Log-linear fit of the orthogonal part, from a quarter of the resolved
    // range on (the first instants mix many rates) down to the rounding floor.
    const double floor = 1e-12 * std::max(res.orth_norm.front(), 1e-300);
    int last = 0;
    while (last + 1 < static_cast<int>(res.tau.size()) && res.orth_norm[last + 1] > floor) ++last;
    const int first = last / 4;
    std::vector<double> xs, ys;
    for (int k = first; k <= last; ++k) {
        xs.push_back(res.tau[k]);
        ys.push_back(std::log(res.orth_norm[k]));
    }
    if (xs.size() >= 3) {
        const LinearFit fit = linear_fit(xs, ys);
        res.decay_rate = -fit.slope;
        res.decay_r2 = fit.r2;
    }
    return res;
}

}  // namespace kinetic
