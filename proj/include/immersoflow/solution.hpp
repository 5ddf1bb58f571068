#pragma once

#include <optional>

#include <Eigen/Dense>

#include "immersoflow/weakform.hpp"

namespace immersoflow {

/// Velocity and pressure coefficients. uhat is component-major (2n entries),
/// phat has n entries; lambda is the pressure-mean multiplier when used.
struct FlowSolution {
    Eigen::VectorXd uhat;
    Eigen::VectorXd phat;
    std::optional<double> lambda;

    static FlowSolution zero(int n)
    {
        return {Eigen::VectorXd::Zero(2 * n), Eigen::VectorXd::Zero(n), std::nullopt};
    }
};

/// Velocity, velocity gradient (grad[i][j] = d u_i / d x_j) and pressure at one point.
struct FieldSample {
    Vec2 u{};
    std::array<Vec2, 2> grad{};
    double p = 0;
};

/// Fields at x, using the basis of a prescribed cell (x may lie on its boundary).
inline FieldSample sample_on_cell(const Discretization& d, const FlowSolution& s, std::array<int, 2> cell,
    const Point& x)
{
    const LocalBasisEval e = eval_tensor_on_cell(d.basis, cell, x, 1);
    const int n = d.n();
    FieldSample out;
    for (int l = 0; l < e.count(); ++l) {
        const int c = d.functions.toCompact[e.global_index(l)];
        if (c < 0) {
            continue;
        }
        const double v = e.value(l);
        const double gx = e.derivative(l, 1, 0);
        const double gy = e.derivative(l, 0, 1);
        const double ux = s.uhat[c];
        const double uy = s.uhat[n + c];
        out.u[0] += v * ux;
        out.u[1] += v * uy;
        out.grad[0][0] += gx * ux;
        out.grad[0][1] += gy * ux;
        out.grad[1][0] += gx * uy;
        out.grad[1][1] += gy * uy;
        out.p += v * s.phat[c];
    }
    return out;
}

inline FieldSample sample(const Discretization& d, const FlowSolution& s, const Point& x)
{
    return sample_on_cell(d, s, cell_of(d.basis, x), x);
}

} // namespace immersoflow
