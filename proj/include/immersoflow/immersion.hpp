#pragma once

#include <array>
#include <cmath>
#include <ostream>
#include <vector>

#include "immersoflow/gauss.hpp"
#include "immersoflow/levelset.hpp"
#include "immersoflow/mesh.hpp"
#include "immersoflow/parallel.hpp"

namespace immersoflow {

struct ImmersionParams {
    int rhoMax = 6;     ///< maximum bisection depth
    int gaussOrder = 3; ///< Gauss points per direction on sub-cells and per facet
    bool keepTessellation = false;

    void validate() const
    {
        detail::require(rhoMax >= 0 && rhoMax <= 12, "rhoMax must be in [0, 12]");
        detail::require(gaussOrder >= 1, "gaussOrder must be at least 1");
    }
};

/// Straight piece of the reconstructed immersed boundary inside one cell.
struct BoundaryFacet {
    Point a{};
    Point b{};
    Point normal{}; ///< unit, pointing out of the physical domain
    double length = 0;
    BoundaryTag tag = 0;
    std::vector<Point> points;
    std::vector<double> weights;
};

/// Part of a cell edge inside the physical domain, as parameter intervals
/// along the edge coordinate. Edge order: 0 left (x = x0), 1 right, 2 bottom, 3 top.
struct EdgeSegment {
    double lower = 0;
    double upper = 0;
};

struct CellQuadrature {
    int cell = -1;
    CellClass cls = CellClass::Exterior;
    std::vector<Point> points;
    std::vector<double> weights;
    std::vector<BoundaryFacet> facets;
    std::array<std::vector<EdgeSegment>, 4> edges;
    std::vector<std::array<Point, 3>> triangles; ///< tessellation, only with keepTessellation

    double volume() const
    {
        double v = 0;
        for (double w : weights) {
            v += w;
        }
        return v;
    }
};

inline constexpr std::array<Point, 4> kEdgeNormals{{{-1.0, 0.0}, {1.0, 0.0}, {0.0, -1.0}, {0.0, 1.0}}};

namespace detail {

/// Level-set samples on the (2^rho + 1)^2 vertex lattice of one cell.
class CellLattice {
public:
    CellLattice(const LevelSet& ls, Point lower, Point upper, int rho)
        : n_((1 << rho) + 1)
        , lower_(lower)
        , step_{(upper[0] - lower[0]) / (n_ - 1), (upper[1] - lower[1]) / (n_ - 1)}
        , values_(static_cast<std::size_t>(n_) * n_)
        , insideCount_(static_cast<std::size_t>(n_ + 1) * (n_ + 1), 0)
    {
        for (int j = 0; j < n_; ++j) {
            for (int i = 0; i < n_; ++i) {
                values_[i + n_ * j] = ls.value(vertex(i, j));
            }
        }
        // 2D prefix sums of inside / outside vertex counts.
        outsideCount_.assign(insideCount_.size(), 0);
        for (int j = 0; j < n_; ++j) {
            for (int i = 0; i < n_; ++i) {
                const int in = inside(i, j) ? 1 : 0;
                const int out = value(i, j) < 0.0 ? 1 : 0;
                auto at = [&](std::vector<int>& v, int a, int b) -> int& { return v[a + (n_ + 1) * b]; };
                at(insideCount_, i + 1, j + 1) = in + at(insideCount_, i, j + 1) + at(insideCount_, i + 1, j)
                    - at(insideCount_, i, j);
                at(outsideCount_, i + 1, j + 1) = out + at(outsideCount_, i, j + 1) + at(outsideCount_, i + 1, j)
                    - at(outsideCount_, i, j);
                strictlyInside_ += value(i, j) > 0.0 ? 1 : 0;
            }
        }
    }

    int size() const { return n_; }
    double value(int i, int j) const { return values_[i + n_ * j]; }
    /// Zero samples count as inside (the "+epsilon" convention) while crossings
    /// are still placed with the exact sample value.
    bool inside(int i, int j) const { return value(i, j) >= 0.0; }
    Point vertex(int i, int j) const { return {lower_[0] + step_[0] * i, lower_[1] + step_[1] * j}; }
    Point step() const { return step_; }

    /// Counts over the closed vertex block [i0, i0+s] x [j0, j0+s].
    int inside_in(int i0, int j0, int s) const { return block(insideCount_, i0, j0, s); }
    int outside_in(int i0, int j0, int s) const { return block(outsideCount_, i0, j0, s); }
    int strictly_inside_total() const { return strictlyInside_; }

private:
    int block(const std::vector<int>& v, int i0, int j0, int s) const
    {
        auto at = [&](int a, int b) { return v[a + (n_ + 1) * b]; };
        const int i1 = i0 + s + 1;
        const int j1 = j0 + s + 1;
        return at(i1, j1) - at(i0, j1) - at(i1, j0) + at(i0, j0);
    }

    int n_;
    Point lower_;
    Point step_;
    std::vector<double> values_;
    std::vector<int> insideCount_;
    std::vector<int> outsideCount_;
    int strictlyInside_ = 0;
};

inline void add_rectangle_rule(CellQuadrature& q, Point lo, Point hi, int order)
{
    const GaussRule& g = gauss_legendre(order);
    const double hx = hi[0] - lo[0];
    const double hy = hi[1] - lo[1];
    for (std::size_t j = 0; j < g.points.size(); ++j) {
        const double y = lo[1] + 0.5 * hy * (g.points[j] + 1.0);
        for (std::size_t i = 0; i < g.points.size(); ++i) {
            q.points.push_back({lo[0] + 0.5 * hx * (g.points[i] + 1.0), y});
            q.weights.push_back(0.25 * hx * hy * g.weights[i] * g.weights[j]);
        }
    }
}

inline void add_triangle_rule(CellQuadrature& q, const Point& a, const Point& b, const Point& c, int order,
    bool keep)
{
    const double area2 = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]);
    if (!(area2 > 0.0)) {
        return; // degenerate sliver from a crossing that coincides with a vertex
    }
    const TriangleRule& t = triangle_rule(order);
    for (std::size_t i = 0; i < t.weights.size(); ++i) {
        const double s = t.points[i][0];
        const double r = t.points[i][1];
        q.points.push_back({a[0] + s * (b[0] - a[0]) + r * (c[0] - a[0]), a[1] + s * (b[1] - a[1]) + r * (c[1] - a[1])});
        q.weights.push_back(area2 * t.weights[i]);
    }
    if (keep) {
        q.triangles.push_back({a, b, c});
    }
}

inline void add_facet(CellQuadrature& q, const LevelSet& ls, const Point& a, const Point& b, int order, double tiny)
{
    const double dx = b[0] - a[0];
    const double dy = b[1] - a[1];
    const double len = std::hypot(dx, dy);
    if (!(len > tiny)) {
        return;
    }
    BoundaryFacet f;
    f.a = a;
    f.b = b;
    f.length = len;
    // Facets are traversed from the point where the boundary walk leaves the
    // domain to where it re-enters, counter-clockwise, so the outward normal
    // is on the right.
    f.normal = {dy / len, -dx / len};
    f.tag = ls.boundary_tag({0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])});
    const GaussRule& g = gauss_legendre(order);
    for (std::size_t i = 0; i < g.points.size(); ++i) {
        const double s = 0.5 * (g.points[i] + 1.0);
        f.points.push_back({a[0] + s * dx, a[1] + s * dy});
        f.weights.push_back(0.5 * len * g.weights[i]);
    }
    q.facets.push_back(std::move(f));
}

struct PolyVertex {
    Point x;
    int kind; ///< 0 corner, 1 leaving crossing, 2 entering crossing
};

/// Marching-squares closure on one deepest-level sub-cell with corner indices
/// (i, j)..(i+1, j+1) of the lattice.
inline void tessellate_square(CellQuadrature& q, const LevelSet& ls, const CellLattice& lat, int i, int j,
    int order, bool keep, double tiny)
{
    const std::array<std::array<int, 2>, 4> c{{{i, j}, {i + 1, j}, {i + 1, j + 1}, {i, j + 1}}};
    std::array<Point, 4> x{};
    std::array<double, 4> v{};
    std::array<bool, 4> in{};
    for (int a = 0; a < 4; ++a) {
        x[a] = lat.vertex(c[a][0], c[a][1]);
        v[a] = lat.value(c[a][0], c[a][1]);
        in[a] = lat.inside(c[a][0], c[a][1]);
    }
    auto crossing = [&](int a) {
        const int b = (a + 1) % 4;
        const double t = v[a] / (v[a] - v[b]);
        return Point{x[a][0] + t * (x[b][0] - x[a][0]), x[a][1] + t * (x[b][1] - x[a][1])};
    };

    std::vector<std::vector<PolyVertex>> polygons;
    const bool saddle = in[0] == in[2] && in[1] == in[3] && in[0] != in[1];
    bool split = false;
    if (saddle) {
        const Point mid{0.5 * (x[0][0] + x[2][0]), 0.5 * (x[0][1] + x[2][1])};
        split = ls.value(mid) < 0.0;
    }
    if (split) {
        for (int a = 0; a < 4; ++a) {
            if (in[a]) {
                const int prev = (a + 3) % 4;
                polygons.push_back({{crossing(prev), 2}, {x[a], 0}, {crossing(a), 1}});
            }
        }
    } else {
        std::vector<PolyVertex> poly;
        for (int a = 0; a < 4; ++a) {
            const int b = (a + 1) % 4;
            if (in[a]) {
                poly.push_back({x[a], 0});
            }
            if (in[a] != in[b]) {
                poly.push_back({crossing(a), in[a] ? 1 : 2});
            }
        }
        polygons.push_back(std::move(poly));
    }

    for (const auto& poly : polygons) {
        const std::size_t m = poly.size();
        for (std::size_t t = 1; t + 1 < m; ++t) {
            add_triangle_rule(q, poly[0].x, poly[t].x, poly[t + 1].x, order, keep);
        }
        for (std::size_t t = 0; t < m; ++t) {
            const PolyVertex& p0 = poly[t];
            const PolyVertex& p1 = poly[(t + 1) % m];
            if (p0.kind == 1 && p1.kind == 2) {
                add_facet(q, ls, p0.x, p1.x, order, tiny);
            }
        }
    }
}

inline void bisect(CellQuadrature& q, const LevelSet& ls, const CellLattice& lat, int i0, int j0, int s, int order,
    bool keep, double tiny)
{
    const int total = (s + 1) * (s + 1);
    if (lat.inside_in(i0, j0, s) == total) {
        const Point lo = lat.vertex(i0, j0);
        const Point hi = lat.vertex(i0 + s, j0 + s);
        add_rectangle_rule(q, lo, hi, order);
        if (keep) {
            q.triangles.push_back({lo, Point{hi[0], lo[1]}, hi});
            q.triangles.push_back({lo, hi, Point{lo[0], hi[1]}});
        }
        return;
    }
    if (lat.outside_in(i0, j0, s) == total) {
        return;
    }
    if (s == 1) {
        tessellate_square(q, ls, lat, i0, j0, order, keep, tiny);
        return;
    }
    const int h = s / 2;
    bisect(q, ls, lat, i0, j0, h, order, keep, tiny);
    bisect(q, ls, lat, i0 + h, j0, h, order, keep, tiny);
    bisect(q, ls, lat, i0, j0 + h, h, order, keep, tiny);
    bisect(q, ls, lat, i0 + h, j0 + h, h, order, keep, tiny);
}

/// Inside portions of the four cell edges under the same piecewise-linear
/// interpolation of the lattice samples.
inline void trim_edges(CellQuadrature& q, const CellLattice& lat)
{
    const int n = lat.size();
    for (int e = 0; e < 4; ++e) {
        const bool vertical = e < 2; // left/right edges run along y
        auto index = [&](int t) -> std::array<int, 2> {
            switch (e) {
            case 0: return {0, t};
            case 1: return {n - 1, t};
            case 2: return {t, 0};
            default: return {t, n - 1};
            }
        };
        auto coord = [&](int t) {
            const auto [i, j] = index(t);
            return lat.vertex(i, j)[vertical ? 1 : 0];
        };
        auto& out = q.edges[e];
        bool open = false;
        double start = 0;
        for (int t = 0; t + 1 < n; ++t) {
            const auto [i0, j0] = index(t);
            const auto [i1, j1] = index(t + 1);
            const bool in0 = lat.inside(i0, j0);
            const bool in1 = lat.inside(i1, j1);
            if (in0 && !open) {
                open = true;
                start = coord(t);
            }
            if (in0 != in1) {
                const double v0 = lat.value(i0, j0);
                const double v1 = lat.value(i1, j1);
                const double s = coord(t) + v0 / (v0 - v1) * (coord(t + 1) - coord(t));
                if (in0) {
                    if (s > start) {
                        out.push_back({start, s});
                    }
                    open = false;
                } else {
                    open = true;
                    start = s;
                }
            }
        }
        if (open && coord(n - 1) > start) {
            out.push_back({start, coord(n - 1)});
        }
    }
}

} // namespace detail

/// Classifies a cell by the signs of the level set on its depth-rhoMax vertex
/// lattice: interior if no sample is negative, exterior if none is positive,
/// cut otherwise.
inline CellClass classify_cell(const LevelSet& ls, const AmbientGrid& grid, int cell, const ImmersionParams& params)
{
    const Point lo = grid.cell_lower(cell);
    const Point hi = grid.cell_upper(cell);
    if (const double lip = ls.lipschitz(); lip > 0.0) {
        const Point mid{0.5 * (lo[0] + hi[0]), 0.5 * (lo[1] + hi[1])};
        const double reach = lip * 0.5 * std::hypot(hi[0] - lo[0], hi[1] - lo[1]) * (1.0 + 1e-9);
        const double v = ls.value(mid);
        if (v > reach) {
            return CellClass::Interior;
        }
        if (v < -reach) {
            return CellClass::Exterior;
        }
    }
    const detail::CellLattice lat(ls, lo, hi, params.rhoMax);
    const int total = lat.size() * lat.size();
    if (lat.inside_in(0, 0, lat.size() - 1) == total) {
        return CellClass::Interior;
    }
    if (lat.strictly_inside_total() == 0) {
        return CellClass::Exterior;
    }
    return CellClass::Cut;
}

/// Volume rule, immersed facets, and trimmed edges of one active cell.
inline CellQuadrature cell_quadrature(const LevelSet& ls, const AmbientGrid& grid, int cell, CellClass cls,
    const ImmersionParams& params)
{
    CellQuadrature q;
    q.cell = cell;
    q.cls = cls;
    const Point lo = grid.cell_lower(cell);
    const Point hi = grid.cell_upper(cell);
    if (cls == CellClass::Exterior) {
        return q;
    }
    if (cls == CellClass::Interior) {
        detail::add_rectangle_rule(q, lo, hi, params.gaussOrder);
        q.edges[0] = q.edges[1] = {{lo[1], hi[1]}};
        q.edges[2] = q.edges[3] = {{lo[0], hi[0]}};
        if (params.keepTessellation) {
            q.triangles.push_back({lo, Point{hi[0], lo[1]}, hi});
            q.triangles.push_back({lo, hi, Point{lo[0], hi[1]}});
        }
        return q;
    }
    const detail::CellLattice lat(ls, lo, hi, params.rhoMax);
    const double tiny = 1e-14 * std::max(hi[0] - lo[0], hi[1] - lo[1]);
    detail::bisect(q, ls, lat, 0, 0, lat.size() - 1, params.gaussOrder, params.keepTessellation, tiny);
    detail::trim_edges(q, lat);
    return q;
}

/// Interior rule of a cell (tensor Gauss on untrimmed cells, bisection plus
/// marching-squares closure on cut cells).
inline CellQuadrature volume_quadrature(const LevelSet& ls, const AmbientGrid& grid, int cell,
    const ImmersionParams& params)
{
    return cell_quadrature(ls, grid, cell, classify_cell(ls, grid, cell, params), params);
}

/// Immersed-boundary facets of a cut cell, with outward normals.
inline std::vector<BoundaryFacet> surface_quadrature(const LevelSet& ls, const AmbientGrid& grid, int cell,
    const ImmersionParams& params)
{
    return volume_quadrature(ls, grid, cell, params).facets;
}

/// Quadrature for every active cell of a background mesh, in activeCells order.
struct MeshQuadrature {
    std::vector<CellQuadrature> cells;

    double volume() const
    {
        double v = 0;
        for (const auto& c : cells) {
            v += c.volume();
        }
        return v;
    }
    double boundary_length() const
    {
        double v = 0;
        for (const auto& c : cells) {
            for (const auto& f : c.facets) {
                v += f.length;
            }
        }
        return v;
    }
};

inline MeshQuadrature build_quadrature(const BackgroundMesh& mesh, const LevelSet& ls, const ImmersionParams& params)
{
    params.validate();
    MeshQuadrature out;
    out.cells.resize(mesh.activeCells.size());
    parallel_for(mesh.activeCells.size(), [&](std::size_t a) {
        const int c = mesh.activeCells[a];
        out.cells[a] = cell_quadrature(ls, mesh.grid, c, mesh.classification[c], params);
    });
    return out;
}

inline BackgroundMesh build_background(const AmbientGrid& grid, const LevelSet& ls, const ImmersionParams& params)
{
    params.validate();
    std::vector<CellClass> cls(static_cast<std::size_t>(grid.num_cells()));
    parallel_for(cls.size(), [&](std::size_t c) { cls[c] = classify_cell(ls, grid, static_cast<int>(c), params); });
    return build_background(grid, [&](int c) { return cls[c]; });
}

/// Legacy-VTK polydata with the tessellation triangles and the boundary facets.
/// Requires quadrature built with keepTessellation.
inline void write_tessellation_vtk(const MeshQuadrature& quad, std::ostream& os)
{
    std::vector<Point> pts;
    std::size_t nTri = 0;
    std::size_t nSeg = 0;
    for (const auto& c : quad.cells) {
        nTri += c.triangles.size();
        nSeg += c.facets.size();
    }
    os << "# vtk DataFile Version 3.0\nimmersed tessellation\nASCII\nDATASET POLYDATA\n";
    os << "POINTS " << 3 * nTri + 2 * nSeg << " double\n";
    for (const auto& c : quad.cells) {
        for (const auto& t : c.triangles) {
            for (const auto& p : t) {
                os << p[0] << ' ' << p[1] << " 0\n";
            }
        }
    }
    for (const auto& c : quad.cells) {
        for (const auto& f : c.facets) {
            os << f.a[0] << ' ' << f.a[1] << " 0\n" << f.b[0] << ' ' << f.b[1] << " 0\n";
        }
    }
    os << "POLYGONS " << nTri << ' ' << 4 * nTri << '\n';
    for (std::size_t t = 0; t < nTri; ++t) {
        os << "3 " << 3 * t << ' ' << 3 * t + 1 << ' ' << 3 * t + 2 << '\n';
    }
    os << "LINES " << nSeg << ' ' << 3 * nSeg << '\n';
    for (std::size_t s = 0; s < nSeg; ++s) {
        os << "2 " << 3 * nTri + 2 * s << ' ' << 3 * nTri + 2 * s + 1 << '\n';
    }
}

} // namespace immersoflow
