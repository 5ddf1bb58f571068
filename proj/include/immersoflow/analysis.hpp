#pragma once

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "immersoflow/manufactured.hpp"
#include "immersoflow/solution.hpp"
#include "immersoflow/weakform.hpp"

namespace immersoflow {

struct ErrorNorms {
    double velocityL2 = 0;
    double velocityH1 = 0; ///< seminorm
    double pressureL2 = 0;
};

namespace detail {

/// Per-cell partial sums reduced in cell order, so results do not depend on
/// the thread count.
template <typename Fn>
std::vector<double> cell_sums(const MeshQuadrature& quad, int width, Fn&& fn)
{
    std::vector<std::vector<double>> partial(quad.cells.size(), std::vector<double>(width, 0.0));
    parallel_for(quad.cells.size(), [&](std::size_t a) { fn(quad.cells[a], partial[a]); });
    std::vector<double> total(width, 0.0);
    for (const auto& p : partial) {
        for (int i = 0; i < width; ++i) {
            total[i] += p[i];
        }
    }
    return total;
}

} // namespace detail

/// Errors over the tessellated domain of `quad`. With `subtractPressureMean`
/// both pressures are shifted to zero mean before the L2 pressure error.
inline ErrorNorms error_norms(const Discretization& d, const FlowSolution& s, const ManufacturedSolution& exact,
    const MeshQuadrature& quad, bool subtractPressureMean)
{
    double meanExact = 0;
    double meanDiscrete = 0;
    if (subtractPressureMean) {
        const auto m = detail::cell_sums(quad, 3, [&](const CellQuadrature& q, std::vector<double>& acc) {
            const auto lat = d.mesh.grid.lattice(q.cell);
            for (std::size_t p = 0; p < q.points.size(); ++p) {
                acc[0] += q.weights[p] * exact.pressure(q.points[p]);
                acc[1] += q.weights[p] * sample_on_cell(d, s, lat, q.points[p]).p;
                acc[2] += q.weights[p];
            }
        });
        meanExact = m[0] / m[2];
        meanDiscrete = m[1] / m[2];
    }
    const auto e = detail::cell_sums(quad, 3, [&](const CellQuadrature& q, std::vector<double>& acc) {
        const auto lat = d.mesh.grid.lattice(q.cell);
        for (std::size_t p = 0; p < q.points.size(); ++p) {
            const Point& x = q.points[p];
            const double w = q.weights[p];
            const FieldSample h = sample_on_cell(d, s, lat, x);
            const auto u = exact.velocity(x);
            const auto g = exact.velocity_gradient(x);
            for (int i = 0; i < 2; ++i) {
                acc[0] += w * std::pow(u[i] - h.u[i], 2);
                for (int j = 0; j < 2; ++j) {
                    acc[1] += w * std::pow(g[i][j] - h.grad[i][j], 2);
                }
            }
            acc[2] += w * std::pow((exact.pressure(x) - meanExact) - (h.p - meanDiscrete), 2);
        }
    });
    return {std::sqrt(e[0]), std::sqrt(e[1]), std::sqrt(e[2])};
}

/// Largest |p_h| at quadrature points of cut cells and of interior cells.
struct PressureExtrema {
    double cut = 0;
    double interior = 0;
};

inline PressureExtrema pressure_extrema(const Discretization& d, const FlowSolution& s)
{
    PressureExtrema out;
    for (const CellQuadrature& q : d.quadrature.cells) {
        const auto lat = d.mesh.grid.lattice(q.cell);
        double& target = q.cls == CellClass::Cut ? out.cut : out.interior;
        for (const Point& x : q.points) {
            target = std::max(target, std::abs(sample_on_cell(d, s, lat, x).p));
        }
    }
    return out;
}

struct QoIConfig {
    BoundaryTag target = 0;    ///< immersed boundary whose force is extracted
    double normalization = 1;  ///< rho * Ubar^2 * R
    std::optional<std::array<Point, 2>> probes;

    void validate() const { detail::require(normalization > 0.0, "QoI normalization must be positive"); }
};

/// Coefficients (length 2n) of the discrete extraction field for force
/// component `component`: -1 for functions supported on a cell cut by the
/// target boundary, 0 for functions with a nonzero trace on any other
/// Dirichlet boundary, 0 elsewhere.
inline Eigen::VectorXd extraction_field(const Discretization& d, const PhysicalSetup& setup, BoundaryTag target,
    int component)
{
    detail::require(component == 0 || component == 1, "extraction component must be 0 or 1");
    const int n = d.n();
    std::vector<char> on(static_cast<std::size_t>(n), 0);
    std::vector<char> blocked(static_cast<std::size_t>(n), 0);
    bool found = false;
    for (const CellQuadrature& q : d.quadrature.cells) {
        const bool hasTarget = std::any_of(q.facets.begin(), q.facets.end(),
            [&](const BoundaryFacet& f) { return f.tag == target; });
        const std::vector<int> dofs = detail::cell_dofs(d, q.cell);
        if (hasTarget) {
            found = true;
            for (int c : dofs) {
                on[c] = 1;
            }
        }
        const auto lat = d.mesh.grid.lattice(q.cell);
        for (const BoundaryPoint& bp : boundary_points(d, q, setup, d.immersion.gaussOrder)) {
            if (bp.tag == target || setup.kind(bp.tag) != BoundaryKind::Dirichlet) {
                continue;
            }
            const LocalBasisEval e = eval_tensor_on_cell(d.basis, lat, bp.x, 0);
            for (int l = 0; l < e.count(); ++l) {
                if (std::abs(e.value(l)) > 1e-13) {
                    blocked[dofs[l]] = 1;
                }
            }
        }
    }
    if (!found) {
        throw InvalidInput("extraction field: no cut cell carries the target boundary tag");
    }
    Eigen::VectorXd ell = Eigen::VectorXd::Zero(2 * n);
    int count = 0;
    for (int i = 0; i < n; ++i) {
        if (on[i] && !blocked[i]) {
            ell[component * n + i] = -1.0;
            ++count;
        }
    }
    if (count == 0) {
        throw InvalidInput("extraction field vanishes: target support overlaps another Dirichlet boundary");
    }
    return ell;
}

/// Weak residual R(u, p; ell) from the assembled blocks:
/// ell^T [(C + Avol + K^T) u + Bvol^T p - fBody - fSym].
inline double residual_functional(const SystemBlocks& b, const SparseMatrix* convection, const FlowSolution& s,
    const Eigen::VectorXd& ell)
{
    const SparseMatrix kt = b.Knitsche.transpose();
    Eigen::VectorXd r = b.Avol * s.uhat + kt * s.uhat + b.Bvol.transpose() * s.phat - b.fBody - b.fSymmetry;
    if (convection) {
        r += *convection * s.uhat;
    }
    return ell.dot(r);
}

/// Same functional by direct quadrature of
/// c(u; u, l) + 2 mu (sym grad u, sym grad l) - 2 mu <sym grad l . n, u - g>_D - (p, div l) - (f, l).
inline double residual_functional_quadrature(const Discretization& d, const PhysicalSetup& setup,
    const FlowSolution& s, const Eigen::VectorXd& ell)
{
    const double mu = setup.viscosity;
    const FlowSolution lf{ell, Eigen::VectorXd::Zero(d.n()), std::nullopt};
    const auto total = detail::cell_sums(d.quadrature, 1, [&](const CellQuadrature& q, std::vector<double>& acc) {
        const auto lat = d.mesh.grid.lattice(q.cell);
        for (std::size_t p = 0; p < q.points.size(); ++p) {
            const Point& x = q.points[p];
            const FieldSample u = sample_on_cell(d, s, lat, x);
            const FieldSample l = sample_on_cell(d, lf, lat, x);
            const Vec2 f = setup.bodyForce(x);
            double v = -u.p * (l.grad[0][0] + l.grad[1][1]);
            for (int i = 0; i < 2; ++i) {
                for (int j = 0; j < 2; ++j) {
                    v += 0.5 * mu * (u.grad[i][j] + u.grad[j][i]) * (l.grad[i][j] + l.grad[j][i]);
                }
                v -= f[i] * l.u[i];
                if (setup.includeConvection) {
                    v += (u.u[0] * u.grad[i][0] + u.u[1] * u.grad[i][1]) * l.u[i];
                }
            }
            acc[0] += q.weights[p] * v;
        }
        for (const BoundaryPoint& bp : boundary_points(d, q, setup, d.immersion.gaussOrder)) {
            if (setup.kind(bp.tag) != BoundaryKind::Dirichlet) {
                continue;
            }
            const FieldSample u = sample_on_cell(d, s, lat, bp.x);
            const FieldSample l = sample_on_cell(d, lf, lat, bp.x);
            const Vec2 g = setup.dirichlet(bp.x, bp.tag);
            double v = 0;
            for (int i = 0; i < 2; ++i) {
                double symN = 0;
                for (int j = 0; j < 2; ++j) {
                    symN += 0.5 * (l.grad[i][j] + l.grad[j][i]) * bp.normal[j];
                }
                v -= 2.0 * mu * symN * (u.u[i] - g[i]);
            }
            acc[0] += bp.weight * v;
        }
    });
    return total[0];
}

struct DragLift {
    double drag = 0;
    double lift = 0;
};

/// Drag and lift coefficients from the assembled residual; `convection` is the
/// matrix C(u_h) for Navier-Stokes solutions, null for Stokes.
inline DragLift qoi_drag_lift(const Discretization& d, const SystemBlocks& blocks, const PhysicalSetup& setup,
    const QoIConfig& qoi, const FlowSolution& s, const SparseMatrix* convection)
{
    qoi.validate();
    const Eigen::VectorXd l1 = extraction_field(d, setup, qoi.target, 0);
    const Eigen::VectorXd l2 = extraction_field(d, setup, qoi.target, 1);
    return {residual_functional(blocks, convection, s, l1) / qoi.normalization,
        residual_functional(blocks, convection, s, l2) / qoi.normalization};
}

/// Force on a circular obstacle, int sigma n ds with n pointing out of the
/// obstacle, by composite Gauss quadrature of the exact traction.
inline Vec2 exact_obstacle_force(const ManufacturedSolution& exact, Point center, double radius, int panels = 10000,
    int pointsPerPanel = 5)
{
    const GaussRule& g = gauss_legendre(pointsPerPanel);
    const double dt = 2.0 * std::numbers::pi / panels;
    Vec2 force{0.0, 0.0};
    for (int k = 0; k < panels; ++k) {
        for (std::size_t i = 0; i < g.points.size(); ++i) {
            const double t = (k + 0.5 * (g.points[i] + 1.0)) * dt;
            const Vec2 n{std::cos(t), std::sin(t)};
            const Point x{center[0] + radius * n[0], center[1] + radius * n[1]};
            const auto tr = exact.traction(x, n);
            const double w = 0.5 * dt * g.weights[i] * radius;
            force[0] += w * tr[0];
            force[1] += w * tr[1];
        }
    }
    return force;
}

/// p_h(p1) - p_h(p2); points on the boundary itself are accepted up to round-off.
inline double pressure_drop(const Discretization& d, const FlowSolution& s, const Point& p1, const Point& p2)
{
    const double tol = 1e-12 * std::hypot(d.mesh.grid.upper(0) - d.mesh.grid.lower(0),
                                   d.mesh.grid.upper(1) - d.mesh.grid.lower(1));
    for (const Point& x : {p1, p2}) {
        if (!d.basis.contains(x) || d.levelSet->value(x) < -tol) {
            throw InvalidInput("pressure probe point outside the physical domain");
        }
    }
    return sample(d, s, p1).p - sample(d, s, p2).p;
}

struct ConvergenceRates {
    std::vector<double> pairwise;
    double leastSquares = 0; ///< over the last min(3, rows) rows
};

inline ConvergenceRates convergence_rates(const std::vector<double>& h, const std::vector<double>& errors)
{
    detail::require(h.size() == errors.size(), "convergence rates: size mismatch");
    detail::require(h.size() >= 2, "convergence rates need at least two rows");
    for (std::size_t i = 0; i < h.size(); ++i) {
        detail::require(errors[i] > 0.0 && std::isfinite(errors[i]), "convergence rates need positive errors");
        detail::require(h[i] > 0.0, "mesh sizes must be positive");
        if (i > 0) {
            detail::require(h[i] < h[i - 1], "mesh sizes must strictly decrease");
        }
    }
    ConvergenceRates r;
    for (std::size_t i = 0; i + 1 < h.size(); ++i) {
        r.pairwise.push_back(std::log(errors[i] / errors[i + 1]) / std::log(h[i] / h[i + 1]));
    }
    const std::size_t m = std::min<std::size_t>(3, h.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = h.size() - m; i < h.size(); ++i) {
        const double x = std::log(h[i]);
        const double y = std::log(errors[i]);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    r.leastSquares = (m * sxy - sx * sy) / (m * sxx - sx * sx);
    return r;
}

/// Rows of (h, nDof, named values). Columns flagged as errors get rates.
class ConvergenceTable {
public:
    explicit ConvergenceTable(std::vector<std::string> errorColumns, std::vector<std::string> extraColumns = {})
        : errorColumns_(std::move(errorColumns))
        , extraColumns_(std::move(extraColumns))
    {}

    void add_row(double h, long nDof, const std::map<std::string, double>& values)
    {
        if (!h_.empty()) {
            detail::require(h < h_.back(), "convergence table: h must strictly decrease");
        }
        for (const auto& c : errorColumns_) {
            detail::require(values.count(c) == 1, "convergence table: missing column " + c);
        }
        h_.push_back(h);
        ndof_.push_back(nDof);
        values_.push_back(values);
    }

    std::size_t rows() const { return h_.size(); }
    const std::vector<double>& h() const { return h_; }
    const std::vector<long>& ndof() const { return ndof_; }
    const std::vector<std::string>& error_columns() const { return errorColumns_; }
    const std::vector<std::string>& extra_columns() const { return extraColumns_; }

    std::vector<double> column(const std::string& name) const
    {
        std::vector<double> out;
        for (const auto& v : values_) {
            const auto it = v.find(name);
            out.push_back(it == v.end() ? std::nan("") : it->second);
        }
        return out;
    }

    ConvergenceRates rates(const std::string& name) const { return convergence_rates(h_, column(name)); }

    void write_csv(std::ostream& os) const
    {
        os << "h,nDof";
        for (const auto& c : errorColumns_) {
            os << ',' << c << ",rate_" << c;
        }
        for (const auto& c : extraColumns_) {
            os << ',' << c;
        }
        os << '\n';
        std::map<std::string, std::vector<double>> pair;
        if (rows() >= 2) {
            for (const auto& c : errorColumns_) {
                const auto col = column(c);
                const bool ok = std::all_of(col.begin(), col.end(), [](double e) { return e > 0.0; });
                if (ok) {
                    pair[c] = rates(c).pairwise;
                }
            }
        }
        os << std::setprecision(12);
        for (std::size_t r = 0; r < rows(); ++r) {
            os << h_[r] << ',' << ndof_[r];
            for (const auto& c : errorColumns_) {
                os << ',' << values_[r].at(c) << ',';
                if (r > 0 && pair.count(c)) {
                    os << pair[c][r - 1];
                }
            }
            for (const auto& c : extraColumns_) {
                os << ',';
                if (const auto it = values_[r].find(c); it != values_[r].end()) {
                    os << it->second;
                }
            }
            os << '\n';
        }
    }

private:
    std::vector<std::string> errorColumns_;
    std::vector<std::string> extraColumns_;
    std::vector<double> h_;
    std::vector<long> ndof_;
    std::vector<std::map<std::string, double>> values_;
};

struct FieldExportStats {
    long samples = 0;
    long masked = 0;
    double masked_fraction() const { return samples ? static_cast<double>(masked) / samples : 0.0; }
};

/// Samples velocity and pressure at the midpoints of a samplesPerCell^2
/// sub-lattice of every ambient cell. Writes legacy-VTK structured points when
/// the grid is uniform (rectilinear grid otherwise) and an "x,y,inside,ux,uy,p"
/// point cloud. Samples outside the physical domain are zeroed and flagged.
inline FieldExportStats export_fields(const Discretization& d, const FlowSolution& s, int samplesPerCell,
    std::ostream& vtk, std::ostream& csv)
{
    detail::require(samplesPerCell >= 1, "samplesPerCell must be at least 1");
    const AmbientGrid& grid = d.mesh.grid;
    std::array<std::vector<double>, 2> coords;
    std::array<std::vector<int>, 2> element;
    bool uniform = true;
    for (int dir = 0; dir < 2; ++dir) {
        const double h0 = grid.spacing(dir, 0);
        for (int e = 0; e < grid.cells(dir); ++e) {
            const double h = grid.spacing(dir, e);
            uniform = uniform && std::abs(h - h0) <= 1e-12 * h0;
            for (int j = 0; j < samplesPerCell; ++j) {
                coords[dir].push_back(grid.breaks(dir)[e] + (j + 0.5) * h / samplesPerCell);
                element[dir].push_back(e);
            }
        }
    }
    const std::size_t nx = coords[0].size();
    const std::size_t ny = coords[1].size();
    std::vector<FieldSample> values(nx * ny);
    std::vector<char> inside(nx * ny, 0);
    parallel_for(ny, [&](std::size_t j) {
        for (std::size_t i = 0; i < nx; ++i) {
            const Point x{coords[0][i], coords[1][j]};
            const std::size_t id = i + nx * j;
            const int cell = grid.index(element[0][i], element[1][j]);
            if (d.levelSet->value(x) >= 0.0 && d.mesh.is_active(cell)) {
                inside[id] = 1;
                values[id] = sample_on_cell(d, s, {element[0][i], element[1][j]}, x);
            }
        }
    });

    vtk << "# vtk DataFile Version 3.0\nimmersoflow fields\nASCII\n";
    vtk << std::setprecision(12);
    if (uniform) {
        vtk << "DATASET STRUCTURED_POINTS\nDIMENSIONS " << nx << ' ' << ny << " 1\n";
        vtk << "ORIGIN " << coords[0][0] << ' ' << coords[1][0] << " 0\n";
        vtk << "SPACING " << grid.spacing(0, 0) / samplesPerCell << ' ' << grid.spacing(1, 0) / samplesPerCell
            << " 1\n";
    } else {
        vtk << "DATASET RECTILINEAR_GRID\nDIMENSIONS " << nx << ' ' << ny << " 1\n";
        for (int dir = 0; dir < 2; ++dir) {
            vtk << (dir == 0 ? "X" : "Y") << "_COORDINATES " << coords[dir].size() << " double\n";
            for (double c : coords[dir]) {
                vtk << c << '\n';
            }
        }
        vtk << "Z_COORDINATES 1 double\n0\n";
    }
    vtk << "POINT_DATA " << nx * ny << '\n';
    auto scalars = [&](const char* name, auto&& fn) {
        vtk << "SCALARS " << name << " double 1\nLOOKUP_TABLE default\n";
        for (std::size_t id = 0; id < nx * ny; ++id) {
            vtk << fn(id) << '\n';
        }
    };
    scalars("inside", [&](std::size_t id) { return inside[id] ? 1.0 : 0.0; });
    scalars("pressure", [&](std::size_t id) { return values[id].p; });
    scalars("velocity_magnitude", [&](std::size_t id) { return std::hypot(values[id].u[0], values[id].u[1]); });
    vtk << "VECTORS velocity double\n";
    for (std::size_t id = 0; id < nx * ny; ++id) {
        vtk << values[id].u[0] << ' ' << values[id].u[1] << " 0\n";
    }

    csv << "x,y,inside,ux,uy,p\n" << std::setprecision(12);
    FieldExportStats stats;
    for (std::size_t j = 0; j < ny; ++j) {
        for (std::size_t i = 0; i < nx; ++i) {
            const std::size_t id = i + nx * j;
            csv << coords[0][i] << ',' << coords[1][j] << ',' << int(inside[id]) << ',' << values[id].u[0] << ','
                << values[id].u[1] << ',' << values[id].p << '\n';
            ++stats.samples;
            stats.masked += inside[id] ? 0 : 1;
        }
    }
    if (!vtk || !csv) {
        throw Error("field export: write failed");
    }
    return stats;
}

} // namespace immersoflow
