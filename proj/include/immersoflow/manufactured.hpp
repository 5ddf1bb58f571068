#pragma once

#include <array>
#include <cmath>
#include <functional>
#include <numbers>
#include <string>

#include "immersoflow/errors.hpp"
#include "immersoflow/splines.hpp"

namespace immersoflow {

/// Second-order forward-mode jet in two variables: value, gradient, Hessian.
struct Jet {
    double v = 0;
    std::array<double, 2> g{};
    std::array<std::array<double, 2>, 2> h{};

    Jet() = default;
    Jet(double value) // NOLINT(google-explicit-constructor): constants mix freely with jets
        : v(value)
    {}

    static Jet variable(double value, int index)
    {
        Jet j(value);
        j.g[index] = 1.0;
        return j;
    }

    /// f(this) given f, f', f'' at this->v.
    Jet apply(double f, double df, double d2f) const
    {
        Jet r(f);
        for (int i = 0; i < 2; ++i) {
            r.g[i] = df * g[i];
            for (int j = 0; j < 2; ++j) {
                r.h[i][j] = df * h[i][j] + d2f * g[i] * g[j];
            }
        }
        return r;
    }
};

inline Jet operator+(const Jet& a, const Jet& b)
{
    Jet r(a.v + b.v);
    for (int i = 0; i < 2; ++i) {
        r.g[i] = a.g[i] + b.g[i];
        for (int j = 0; j < 2; ++j) {
            r.h[i][j] = a.h[i][j] + b.h[i][j];
        }
    }
    return r;
}
inline Jet operator-(const Jet& a) { return a.apply(-a.v, -1.0, 0.0); }
inline Jet operator-(const Jet& a, const Jet& b) { return a + (-b); }
inline Jet operator*(const Jet& a, const Jet& b)
{
    Jet r(a.v * b.v);
    for (int i = 0; i < 2; ++i) {
        r.g[i] = a.v * b.g[i] + b.v * a.g[i];
        for (int j = 0; j < 2; ++j) {
            r.h[i][j] = a.v * b.h[i][j] + b.v * a.h[i][j] + a.g[i] * b.g[j] + b.g[i] * a.g[j];
        }
    }
    return r;
}
inline Jet operator/(const Jet& a, const Jet& b)
{
    const double x = b.v;
    return a * b.apply(1.0 / x, -1.0 / (x * x), 2.0 / (x * x * x));
}
inline Jet exp(const Jet& a)
{
    const double e = std::exp(a.v);
    return a.apply(e, e, e);
}
inline Jet sqrt(const Jet& a)
{
    const double s = std::sqrt(a.v);
    return a.apply(s, 0.5 / s, -0.25 / (s * a.v));
}
inline Jet pow(const Jet& a, double p)
{
    return a.apply(std::pow(a.v, p), p * std::pow(a.v, p - 1.0), p * (p - 1.0) * std::pow(a.v, p - 2.0));
}

using Tensor2 = std::array<std::array<double, 2>, 2>;

/// Exact velocity/pressure pair with derivatives and the consistent body force
/// f = div(u (x) u) - div(2 mu sym grad u) + grad p (convective part optional).
class ManufacturedSolution {
public:
    using VelocityFn = std::function<std::array<Jet, 2>(const Jet&, const Jet&)>;
    using PressureFn = std::function<Jet(const Jet&, const Jet&)>;

    ManufacturedSolution(std::string name, VelocityFn velocity, PressureFn pressure, double viscosity,
        bool convectiveForcing)
        : name_(std::move(name))
        , velocity_(std::move(velocity))
        , pressure_(std::move(pressure))
        , viscosity_(viscosity)
        , convective_(convectiveForcing)
    {}

    const std::string& name() const { return name_; }
    double viscosity() const { return viscosity_; }
    bool convective_forcing() const { return convective_; }

    std::array<Jet, 2> velocity_jet(const Point& x) const
    {
        return velocity_(Jet::variable(x[0], 0), Jet::variable(x[1], 1));
    }
    Jet pressure_jet(const Point& x) const { return pressure_(Jet::variable(x[0], 0), Jet::variable(x[1], 1)); }

    std::array<double, 2> velocity(const Point& x) const
    {
        const auto u = velocity_jet(x);
        return {u[0].v, u[1].v};
    }
    /// grad[i][j] = d u_i / d x_j
    Tensor2 velocity_gradient(const Point& x) const
    {
        const auto u = velocity_jet(x);
        return {{{u[0].g[0], u[0].g[1]}, {u[1].g[0], u[1].g[1]}}};
    }
    double pressure(const Point& x) const { return pressure_jet(x).v; }
    std::array<double, 2> pressure_gradient(const Point& x) const { return pressure_jet(x).g; }

    std::array<double, 2> body_force(const Point& x) const
    {
        const auto u = velocity_jet(x);
        const Jet p = pressure_jet(x);
        const double div = u[0].g[0] + u[1].g[1];
        std::array<double, 2> f{};
        for (int i = 0; i < 2; ++i) {
            const double lap = u[i].h[0][0] + u[i].h[1][1];
            const double gradDiv = u[0].h[i][0] + u[1].h[i][1];
            f[i] = -viscosity_ * (lap + gradDiv) + p.g[i];
            if (convective_) {
                f[i] += u[0].v * u[i].g[0] + u[1].v * u[i].g[1] + u[i].v * div;
            }
        }
        return f;
    }

    /// Traction (2 mu sym grad u - p I) n.
    std::array<double, 2> traction(const Point& x, const std::array<double, 2>& n) const
    {
        const Tensor2 g = velocity_gradient(x);
        const double p = pressure(x);
        std::array<double, 2> t{};
        for (int i = 0; i < 2; ++i) {
            for (int j = 0; j < 2; ++j) {
                t[i] += viscosity_ * (g[i][j] + g[j][i]) * n[j];
            }
            t[i] -= p * n[i];
        }
        return t;
    }

private:
    std::string name_;
    VelocityFn velocity_;
    PressureFn pressure_;
    double viscosity_;
    bool convective_;
};

/// Quarter annulus R1 = 1, R2 = 4: velocity vanishes on the whole boundary and
/// the pressure has zero mean.
inline ManufacturedSolution quarter_annulus_solution(double viscosity, bool convectiveForcing)
{
    auto velocity = [](const Jet& x, const Jet& y) -> std::array<Jet, 2> {
        const Jet x2 = x * x;
        const Jet y2 = y * y;
        const Jet r2 = x2 + y2;
        const Jet ring = (r2 - 1.0) * (r2 - 16.0);
        const Jet y4 = y2 * y2;
        const Jet u1 = 1e-6 * x2 * y4 * ring
            * (5.0 * x2 * x2 + 18.0 * x2 * y2 - 85.0 * x2 + 13.0 * y4 - 153.0 * y2 + 80.0);
        const Jet u2 = 1e-6 * x * y4 * y * ring
            * (102.0 * x2 + 34.0 * y2 - 10.0 * x2 * x2 - 12.0 * x2 * y2 - 2.0 * y4 - 32.0);
        return {u1, u2};
    };
    auto pressure = [](const Jet& x, const Jet& y) -> Jet {
        const Jet x2 = x * x;
        const Jet y2 = y * y;
        const Jet r2 = x2 + y2;
        const Jet a = r2 - 16.0;
        const Jet b = r2 - 1.0;
        return 1e-7 * x * y * (y2 - x2) * a * a * b * b * exp(14.0 / sqrt(r2));
    };
    return ManufacturedSolution("quarterAnnulus", velocity, pressure, viscosity, convectiveForcing);
}

/// Unit square with a cylinder of radius 1/8 at its center; velocity vanishes
/// on the square's boundary.
inline ManufacturedSolution square_cylinder_solution(double viscosity, bool convectiveForcing)
{
    auto velocity = [](const Jet& x, const Jet& y) -> std::array<Jet, 2> {
        const Jet ex = exp(x);
        const Jet xm = x - 1.0;
        const Jet ym = y - 1.0;
        const Jet u1 = 2.0 * ex * xm * xm * x * x * (y * y - y) * (2.0 * y - 1.0);
        const Jet u2 = -(ex * xm * x * (x * (x + 3.0) - 2.0) * ym * ym * y * y);
        return {u1, u2};
    };
    auto pressure = [](const Jet& x, const Jet& y) -> Jet {
        const Jet s = y * y - y;
        const Jet inner = 456.0 + x * x * (228.0 - 5.0 * s) + 2.0 * x * (-228.0 + s)
            + 2.0 * x * x * x * (-36.0 + s) + x * x * x * x * (12.0 + s);
        return -424.0 + 156.0 * std::numbers::e + s * (-456.0 + exp(x) * inner);
    };
    return ManufacturedSolution("squareCylinder", velocity, pressure, viscosity, convectiveForcing);
}

inline ManufacturedSolution manufactured(const std::string& name, double viscosity, bool convectiveForcing)
{
    if (name == "quarterAnnulus") {
        return quarter_annulus_solution(viscosity, convectiveForcing);
    }
    if (name == "squareCylinder") {
        return square_cylinder_solution(viscosity, convectiveForcing);
    }
    throw InvalidInput("unknown manufactured solution '" + name + "'");
}

} // namespace immersoflow
