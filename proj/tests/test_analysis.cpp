#include <cmath>
#include <memory>
#include <numbers>
#include <sstream>
#include <string>

#include <gtest/gtest.h>

#include "immersoflow/analysis.hpp"
#include "immersoflow/manufactured.hpp"
#include "immersoflow/solver.hpp"

using namespace immersoflow;

namespace {

Discretization annulus(int cells, int k, int rho = 4)
{
    TensorBSplineBasis basis(open_knot_vector(-0.03, 4.47, cells, k), open_knot_vector(-0.03, 4.47, cells, k));
    ImmersionParams p;
    p.rhoMax = rho;
    p.gaussOrder = k + 1;
    return make_discretization(std::move(basis), std::make_shared<QuarterAnnulus>(1.0, 4.0), p);
}

Discretization square_cylinder(int cells, int k)
{
    TensorBSplineBasis basis(open_knot_vector(0, 1, cells, k), open_knot_vector(0, 1, cells, k));
    ImmersionParams p;
    p.rhoMax = 6;
    p.gaussOrder = k + 1;
    return make_discretization(std::move(basis), std::make_shared<DiskComplement>(Point{0.5, 0.5}, 0.125), p);
}

double greville(const KnotVector& kv, int i)
{
    double s = 0.0;
    for (int j = 1; j <= kv.degree(); ++j) {
        s += kv.values()[i + j];
    }
    return s / kv.degree();
}

Eigen::VectorXd linear_field(const Discretization& d, double a, double b, double c)
{
    Eigen::VectorXd v(d.n());
    for (int i = 0; i < d.n(); ++i) {
        const auto mi = d.basis.multi_index(d.functions.toGlobal[i]);
        v[i] = a + b * greville(d.basis.knots(0), mi[0]) + c * greville(d.basis.knots(1), mi[1]);
    }
    return v;
}

PhysicalSetup manufactured_setup(const ManufacturedSolution& m, bool convection)
{
    PhysicalSetup s;
    s.viscosity = m.viscosity();
    s.bodyForce = [m](const Point& x) { return m.body_force(x); };
    s.dirichlet = [m](const Point& x, BoundaryTag) { return m.velocity(x); };
    s.includeConvection = convection;
    s.pressureMeanZero = true;
    return s;
}

} // namespace

class ManufacturedCheck : public ::testing::TestWithParam<std::string> {};

TEST_P(ManufacturedCheck, DerivativesAndForcingMatchFiniteDifferences)
{
    const double mu = 0.3;
    const ManufacturedSolution m = manufactured(GetParam(), mu, true);
    const ManufacturedSolution stokes = manufactured(GetParam(), mu, false);
    const bool annulus = GetParam() == "quarterAnnulus";
    const std::vector<Point> pts = annulus
        ? std::vector<Point>{{1.5, 0.7}, {0.4, 2.9}, {2.2, 2.2}, {3.1, 0.3}}
        : std::vector<Point>{{0.2, 0.3}, {0.8, 0.15}, {0.33, 0.9}, {0.7, 0.7}};
    const double e = 1e-4;
    for (const Point& x : pts) {
        auto u = [&](double dx, double dy) { return m.velocity({x[0] + dx, x[1] + dy}); };
        auto p = [&](double dx, double dy) { return m.pressure({x[0] + dx, x[1] + dy}); };
        const auto g = m.velocity_gradient(x);
        const auto gp = m.pressure_gradient(x);
        double scale = 0.0;
        std::array<std::array<double, 2>, 2> fdGrad{};
        std::array<double, 2> lap{};
        std::array<std::array<double, 2>, 2> mixed{};
        for (int i = 0; i < 2; ++i) {
            fdGrad[i][0] = (u(e, 0)[i] - u(-e, 0)[i]) / (2 * e);
            fdGrad[i][1] = (u(0, e)[i] - u(0, -e)[i]) / (2 * e);
            lap[i] = (u(e, 0)[i] + u(-e, 0)[i] + u(0, e)[i] + u(0, -e)[i] - 4 * u(0, 0)[i]) / (e * e);
            mixed[i][0] = (u(e, 0)[i] - 2 * u(0, 0)[i] + u(-e, 0)[i]) / (e * e);
            mixed[i][1] = (u(e, e)[i] - u(e, -e)[i] - u(-e, e)[i] + u(-e, -e)[i]) / (4 * e * e);
            scale = std::max({scale, std::abs(fdGrad[i][0]), std::abs(fdGrad[i][1]), std::abs(lap[i])});
        }
        const double fdp[2] = {(p(e, 0) - p(-e, 0)) / (2 * e), (p(0, e) - p(0, -e)) / (2 * e)};
        scale = std::max({scale, std::abs(fdp[0]), std::abs(fdp[1]), 1e-12});
        for (int i = 0; i < 2; ++i) {
            for (int j = 0; j < 2; ++j) {
                EXPECT_NEAR(g[i][j], fdGrad[i][j], 1e-5 * scale);
            }
            EXPECT_NEAR(gp[i], fdp[i], 1e-5 * scale);
        }
        // Divergence free, so grad div u = 0 and f = -mu lap u + grad p + (u . grad) u.
        EXPECT_NEAR(g[0][0] + g[1][1], 0.0, 1e-9 * scale);
        const auto f = m.body_force(x);
        const auto fs = stokes.body_force(x);
        const auto v = m.velocity(x);
        for (int i = 0; i < 2; ++i) {
            const double expectStokes = -mu * lap[i] + fdp[i];
            EXPECT_NEAR(fs[i], expectStokes, 1e-5 * scale);
            EXPECT_NEAR(f[i], expectStokes + v[0] * fdGrad[i][0] + v[1] * fdGrad[i][1], 1e-5 * scale);
        }
        // Traction with a unit normal.
        const std::array<double, 2> n{0.6, 0.8};
        const auto t = m.traction(x, n);
        for (int i = 0; i < 2; ++i) {
            double expect = -m.pressure(x) * n[i];
            for (int j = 0; j < 2; ++j) {
                expect += mu * (fdGrad[i][j] + fdGrad[j][i]) * n[j];
            }
            EXPECT_NEAR(t[i], expect, 1e-5 * scale);
        }
    }
}

INSTANTIATE_TEST_SUITE_P(Solutions, ManufacturedCheck, ::testing::Values("quarterAnnulus", "squareCylinder"));

TEST(Manufactured, BoundaryValuesAndSymmetry)
{
    const ManufacturedSolution qa = quarter_annulus_solution(1.0, false);
    for (double t : {0.1, 0.7, 1.3}) {
        for (double r : {1.0, 4.0}) {
            const auto u = qa.velocity({r * std::cos(t), r * std::sin(t)});
            EXPECT_NEAR(u[0], 0.0, 1e-12);
            EXPECT_NEAR(u[1], 0.0, 1e-12);
        }
    }
    for (double s : {1.2, 2.5, 3.9}) {
        EXPECT_NEAR(std::hypot(qa.velocity({s, 0.0})[0], qa.velocity({s, 0.0})[1]), 0.0, 1e-14);
        EXPECT_NEAR(std::hypot(qa.velocity({0.0, s})[0], qa.velocity({0.0, s})[1]), 0.0, 1e-14);
        // p(x, y) = -p(y, x): zero mean over the symmetric domain.
        EXPECT_NEAR(qa.pressure({s, 0.4 * s}), -qa.pressure({0.4 * s, s}), 1e-12 * (1 + std::abs(qa.pressure({s, 0.4 * s}))));
    }
    const ManufacturedSolution sc = square_cylinder_solution(1.0, false);
    for (double s : {0.0, 0.3, 0.77, 1.0}) {
        for (const Point& x : {Point{0.0, s}, Point{1.0, s}, Point{s, 0.0}, Point{s, 1.0}}) {
            EXPECT_NEAR(std::hypot(sc.velocity(x)[0], sc.velocity(x)[1]), 0.0, 1e-14);
        }
    }
    EXPECT_THROW(manufactured("nope", 1.0, false), InvalidInput);
    EXPECT_EQ(manufactured("squareCylinder", 2.0, true).name(), "squareCylinder");
}

TEST(ConvergenceRates, ExactPowerLaws)
{
    const std::vector<double> h{1.0, 0.5, 0.25, 0.125};
    std::vector<double> e;
    for (double x : h) {
        e.push_back(3.0 * x * x * x);
    }
    const ConvergenceRates r = convergence_rates(h, e);
    ASSERT_EQ(r.pairwise.size(), 3u);
    for (double p : r.pairwise) {
        EXPECT_NEAR(p, 3.0, 1e-12);
    }
    EXPECT_NEAR(r.leastSquares, 3.0, 1e-12);

    // Rates (1, 2, 2) on halving meshes: least squares over the last three rows is 2.
    const std::vector<double> mixed{1.0, 0.5, 0.125, 0.03125};
    const ConvergenceRates m = convergence_rates(h, mixed);
    EXPECT_NEAR(m.pairwise[0], 1.0, 1e-12);
    EXPECT_NEAR(m.pairwise[1], 2.0, 1e-12);
    EXPECT_NEAR(m.leastSquares, 2.0, 1e-12);

    EXPECT_THROW(convergence_rates({1.0}, {1.0}), InvalidInput);
    EXPECT_THROW(convergence_rates({1.0, 0.5}, {1.0}), InvalidInput);
    EXPECT_THROW(convergence_rates({1.0, 0.5}, {1.0, 0.0}), InvalidInput);
    EXPECT_THROW(convergence_rates({0.5, 1.0}, {1.0, 0.5}), InvalidInput);
}

TEST(ConvergenceTable, CsvLayout)
{
    ConvergenceTable t({"eu"}, {"picard"});
    t.add_row(1.0, 10, {{"eu", 0.4}, {"picard", 3}});
    t.add_row(0.5, 40, {{"eu", 0.1}});
    EXPECT_THROW(t.add_row(0.6, 50, {{"eu", 0.05}}), InvalidInput);
    EXPECT_THROW(t.add_row(0.25, 50, {}), InvalidInput);
    std::ostringstream os;
    t.write_csv(os);
    EXPECT_EQ(os.str(), "h,nDof,eu,rate_eu,picard\n1,10,0.4,,3\n0.5,40,0.1,2,\n");
    EXPECT_NEAR(t.rates("eu").leastSquares, 2.0, 1e-12);
    EXPECT_TRUE(std::isnan(t.column("picard")[1]));
}

TEST(ErrorNorms, ExactAndKnownErrors)
{
    const Discretization d = annulus(7, 2);
    // Linear exact fields are represented exactly by their Greville coefficients.
    const ManufacturedSolution lin(
        "linear", [](const Jet& x, const Jet& y) { return std::array<Jet, 2>{x + 2.0 * y, 3.0 * x - y}; },
        [](const Jet& x, const Jet& y) { return 4.0 * x - y; }, 1.0, false);
    FlowSolution s = FlowSolution::zero(d.n());
    s.uhat << linear_field(d, 0, 1, 2), linear_field(d, 0, 3, -1);
    s.phat = linear_field(d, 0, 4, -1);
    const ErrorNorms e = error_norms(d, s, lin, d.quadrature, false);
    EXPECT_LT(e.velocityL2, 1e-12);
    EXPECT_LT(e.velocityH1, 1e-12);
    EXPECT_LT(e.pressureL2, 1e-12);
    // Constant pressure offsets disappear when means are subtracted.
    s.phat.array() += 5.0;
    EXPECT_LT(error_norms(d, s, lin, d.quadrature, true).pressureL2, 1e-11);
    EXPECT_NEAR(error_norms(d, s, lin, d.quadrature, false).pressureL2, 5.0 * std::sqrt(d.quadrature.volume()), 1e-10);

    const ManufacturedSolution unit(
        "unit", [](const Jet& x, const Jet&) { return std::array<Jet, 2>{x * 0.0 + 1.0, x * 0.0}; },
        [](const Jet& x, const Jet&) { return x * 0.0; }, 1.0, false);
    const ErrorNorms z = error_norms(d, FlowSolution::zero(d.n()), unit, d.quadrature, false);
    EXPECT_NEAR(z.velocityL2, std::sqrt(d.quadrature.volume()), 1e-12);
    EXPECT_NEAR(z.velocityH1, 0.0, 1e-14);

    const PressureExtrema px = pressure_extrema(d, s);
    EXPECT_GT(px.interior, 5.0);
    EXPECT_LE(px.interior, 5.0 + 4.0 * 4.47 + 0.03 + 1e-9);
}

TEST(QoI, AlgebraicResidualMatchesQuadrature)
{
    for (bool convection : {false, true}) {
        const Discretization d = square_cylinder(8, 2);
        const ManufacturedSolution m = square_cylinder_solution(1.0, convection);
        PhysicalSetup setup = manufactured_setup(m, convection);
        setup.kind = [](BoundaryTag) { return BoundaryKind::Dirichlet; };
        const SystemBlocks b = assemble_system(d, setup, recommended_stabilization(2));
        FlowSolution s;
        SparseMatrix c;
        if (convection) {
            const PicardResult r = solve_navier_stokes(b, setup, [&](const Eigen::VectorXd& u) { return assemble_convection(d, u); }, {});
            ASSERT_TRUE(r.converged);
            s = r.solution;
            c = assemble_convection(d, s.uhat);
        } else {
            s = solve_stokes(b, setup);
        }
        for (int comp = 0; comp < 2; ++comp) {
            const Eigen::VectorXd ell = extraction_field(d, setup, 0, comp);
            EXPECT_EQ(ell.segment((1 - comp) * d.n(), d.n()).norm(), 0.0);
            EXPECT_GT((ell.array() != 0.0).count(), 0);
            const double algebraic = residual_functional(b, convection ? &c : nullptr, s, ell);
            const double quadrature = residual_functional_quadrature(d, setup, s, ell);
            EXPECT_NEAR(algebraic, quadrature, 1e-10 * (1.0 + std::abs(quadrature))) << "component " << comp;
        }
        EXPECT_THROW(extraction_field(d, setup, 7, 0), InvalidInput);
        EXPECT_THROW(extraction_field(d, setup, 0, 2), InvalidInput);
    }
}

TEST(QoI, DragAndLiftApproachTheExactForce)
{
    const ManufacturedSolution m = square_cylinder_solution(1.0, false);
    const Vec2 exact = exact_obstacle_force(m, {0.5, 0.5}, 0.125);
    double previous = std::numeric_limits<double>::infinity();
    for (int cells : {6, 12, 24}) {
        const Discretization d = square_cylinder(cells, 2);
        PhysicalSetup setup = manufactured_setup(m, false);
        setup.kind = [](BoundaryTag) { return BoundaryKind::Dirichlet; };
        const SystemBlocks b = assemble_system(d, setup, recommended_stabilization(2));
        const FlowSolution s = solve_stokes(b, setup);
        QoIConfig qoi;
        const DragLift dl = qoi_drag_lift(d, b, setup, qoi, s, nullptr);
        const double err = std::hypot(dl.drag - exact[0], dl.lift - exact[1]);
        EXPECT_LT(err, previous) << cells << " cells";
        previous = err;
    }
    EXPECT_LT(previous, 1e-2 * std::hypot(exact[0], exact[1]));
    QoIConfig bad;
    bad.normalization = 0.0;
    EXPECT_THROW(bad.validate(), InvalidInput);
}

TEST(QoI, ExactForceOfLinearPressure)
{
    // u = 0, p = x: the force -int p n over the circle equals -(pi R^2, 0).
    const ManufacturedSolution m(
        "p=x", [](const Jet& x, const Jet&) { return std::array<Jet, 2>{x * 0.0, x * 0.0}; },
        [](const Jet& x, const Jet&) { return x; }, 1.0, false);
    const Vec2 f = exact_obstacle_force(m, {0.3, -0.2}, 0.5, 64, 5);
    EXPECT_NEAR(f[0], -std::numbers::pi * 0.25, 1e-12);
    EXPECT_NEAR(f[1], 0.0, 1e-12);
}

TEST(PressureDrop, LinearFieldAndProbeValidation)
{
    const Discretization d = annulus(7, 2);
    FlowSolution s = FlowSolution::zero(d.n());
    s.phat = linear_field(d, 1.0, 2.0, -3.0);
    EXPECT_NEAR(pressure_drop(d, s, {2.0, 1.0}, {1.0, 2.0}), (2 * 2.0 - 3 * 1.0) - (2 * 1.0 - 3 * 2.0), 1e-12);
    EXPECT_NO_THROW(pressure_drop(d, s, {1.0, 0.0}, {0.0, 4.0}));
    EXPECT_THROW(pressure_drop(d, s, {0.2, 0.2}, {2.0, 2.0}), InvalidInput);
    EXPECT_THROW(pressure_drop(d, s, {2.0, 2.0}, {9.0, 2.0}), InvalidInput);
}

TEST(Export, MaskedFractionAndFormats)
{
    const Discretization d = annulus(9, 2);
    FlowSolution s = FlowSolution::zero(d.n());
    s.uhat << linear_field(d, 0, 1, 0), linear_field(d, 0, 0, 1);
    s.phat = linear_field(d, 2.0, 0, 0);
    std::ostringstream vtk;
    std::ostringstream csv;
    const int spc = 6;
    const FieldExportStats st = export_fields(d, s, spc, vtk, csv);
    EXPECT_EQ(st.samples, 9L * 9 * spc * spc);
    const double expected = 1.0 - QuarterAnnulus(1.0, 4.0).area() / (4.5 * 4.5);
    EXPECT_NEAR(st.masked_fraction(), expected, 0.02);

    std::istringstream v(vtk.str());
    std::string line;
    std::getline(v, line);
    EXPECT_EQ(line, "# vtk DataFile Version 3.0");
    std::string word;
    long dims[3] = {0, 0, 0};
    long pointData = 0;
    int scalarBlocks = 0;
    bool vectors = false;
    while (v >> word) {
        if (word == "DIMENSIONS") {
            v >> dims[0] >> dims[1] >> dims[2];
        } else if (word == "POINT_DATA") {
            v >> pointData;
        } else if (word == "SCALARS") {
            ++scalarBlocks;
        } else if (word == "VECTORS") {
            vectors = true;
        } else if (word == "DATASET") {
            v >> word;
            EXPECT_EQ(word, "STRUCTURED_POINTS");
        }
    }
    EXPECT_EQ(dims[0] * dims[1] * dims[2], st.samples);
    EXPECT_EQ(pointData, st.samples);
    EXPECT_EQ(scalarBlocks, 3);
    EXPECT_TRUE(vectors);

    std::istringstream c(csv.str());
    std::getline(c, line);
    EXPECT_EQ(line, "x,y,inside,ux,uy,p");
    long rows = 0;
    long outside = 0;
    while (std::getline(c, line)) {
        ++rows;
        double x, y, in, ux, uy, p;
        char sep;
        std::istringstream r(line);
        r >> x >> sep >> y >> sep >> in >> sep >> ux >> sep >> uy >> sep >> p;
        if (in == 0.0) {
            ++outside;
            EXPECT_EQ(ux, 0.0);
            EXPECT_EQ(p, 0.0);
        } else {
            EXPECT_NEAR(ux, x, 1e-9);
            EXPECT_NEAR(uy, y, 1e-9);
            EXPECT_NEAR(p, 2.0, 1e-9);
        }
    }
    EXPECT_EQ(rows, st.samples);
    EXPECT_EQ(outside, st.masked);
    EXPECT_THROW(export_fields(d, s, 0, vtk, csv), InvalidInput);
}
