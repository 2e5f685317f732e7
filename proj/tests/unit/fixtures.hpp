#pragma once

#include <memory>

#include "kinetic/collision.hpp"
#include "kinetic/milne.hpp"

namespace fixtures {

// A 10^3 grid on [-5, 5]^3: coarse, but enough for structural checks. Built once.
struct Small {
    std::shared_ptr<const kinetic::VelocityGrid> grid;
    kinetic::KernelOperator op;
    kinetic::NullBasis basis;
};

inline const Small& small() {
    static const Small s = [] {
        auto g = std::make_shared<const kinetic::VelocityGrid>(kinetic::make_velocity_grid(10, 5.0));
        kinetic::KernelOperator op = kinetic::assemble_collision(g, kinetic::CollisionParams{});
        kinetic::NullBasis b = kinetic::make_null_basis(*g);
        return Small{g, std::move(op), std::move(b)};
    }();
    return s;
}

inline std::shared_ptr<const kinetic::MilneOperators> milne_ops() {
    static const auto ops = kinetic::make_milne_operators(small().op);
    return ops;
}

inline kinetic::Vector sqrt_mu(const kinetic::VelocityGrid& g) {
    const kinetic::CollisionParams unit;
    return g.sample([&](const kinetic::Vec3& v) { return std::sqrt(kinetic::maxwellian(v, unit)); });
}

}  // namespace fixtures
