#pragma once

#include <algorithm>
#include <array>
#include <functional>
#include <ostream>
#include <vector>

#include "immersoflow/splines.hpp"

namespace immersoflow {

enum class CellClass { Exterior, Interior, Cut };

inline const char* to_string(CellClass c)
{
    switch (c) {
    case CellClass::Exterior: return "exterior";
    case CellClass::Interior: return "interior";
    case CellClass::Cut: return "cut";
    }
    return "?";
}

/// Tensor grid over the ambient box; per-direction spacing may vary.
/// Cell (i, j) has flat index i + nx * j.
class AmbientGrid {
public:
    AmbientGrid() = default;

    explicit AmbientGrid(std::array<std::vector<double>, 2> breaks)
        : breaks_(std::move(breaks))
    {
        for (const auto& b : breaks_) {
            detail::require(b.size() >= 2, "ambient grid needs at least one cell per direction");
            for (std::size_t i = 1; i < b.size(); ++i) {
                detail::require(b[i] > b[i - 1], "ambient grid spacing must be positive");
            }
        }
    }

    static AmbientGrid uniform(Point lower, Point upper, std::array<int, 2> cells)
    {
        std::array<std::vector<double>, 2> breaks;
        for (int d = 0; d < 2; ++d) {
            breaks[d] = open_knot_vector(lower[d], upper[d], cells[d], 1).breakpoints();
        }
        return AmbientGrid(std::move(breaks));
    }

    static AmbientGrid from_basis(const TensorBSplineBasis& basis)
    {
        return AmbientGrid({basis.knots(0).breakpoints(), basis.knots(1).breakpoints()});
    }

    int cells(int dir) const { return static_cast<int>(breaks_[dir].size()) - 1; }
    int num_cells() const { return cells(0) * cells(1); }
    const std::vector<double>& breaks(int dir) const { return breaks_[dir]; }
    double spacing(int dir, int element) const { return breaks_[dir][element + 1] - breaks_[dir][element]; }
    double lower(int dir) const { return breaks_[dir].front(); }
    double upper(int dir) const { return breaks_[dir].back(); }

    int index(int i, int j) const { return i + cells(0) * j; }
    std::array<int, 2> lattice(int cell) const { return {cell % cells(0), cell / cells(0)}; }

    Point cell_lower(int cell) const
    {
        const auto [i, j] = lattice(cell);
        return {breaks_[0][i], breaks_[1][j]};
    }
    Point cell_upper(int cell) const
    {
        const auto [i, j] = lattice(cell);
        return {breaks_[0][i + 1], breaks_[1][j + 1]};
    }
    std::array<double, 2> cell_size(int cell) const
    {
        const auto [i, j] = lattice(cell);
        return {spacing(0, i), spacing(1, j)};
    }

private:
    std::array<std::vector<double>, 2> breaks_;
};

/// Interior face between two active cells. "plus" is the cell with the smaller
/// flat index; the normal is the unit vector along `axis` pointing from plus
/// to minus.
struct Face {
    int plus = -1;
    int minus = -1;
    int axis = 0;
    int breakIndex = 0;    ///< grid-line index along `axis`
    int transverse = 0;    ///< element index along the other direction
    double coordinate = 0; ///< position of the grid line
    std::array<double, 2> extent{};
    double normal_size = 0; ///< element size in the face-normal direction (mean of both sides)

    double measure() const { return extent[1] - extent[0]; }
};

/// The cells of the ambient grid that meet the physical domain, plus the
/// skeleton (faces shared by two such cells) and the ghost faces (skeleton
/// faces of cut cells).
struct BackgroundMesh {
    AmbientGrid grid;
    std::vector<CellClass> classification; ///< per ambient cell
    std::vector<int> activeCells;          ///< ambient indices, increasing
    std::vector<int> activeIndex;          ///< ambient -> position in activeCells or -1
    std::vector<Face> skeletonFaces;
    std::vector<bool> ghost;               ///< per skeleton face
    /// skeleton face lookup: faceIndex[axis][breakIndex * (transverse count) + transverse]
    std::array<std::vector<int>, 2> faceLookup;

    bool is_active(int cell) const { return activeIndex[cell] >= 0; }
    int num_cut() const
    {
        return static_cast<int>(std::count(classification.begin(), classification.end(), CellClass::Cut));
    }
    std::vector<int> ghost_faces() const
    {
        std::vector<int> out;
        for (std::size_t f = 0; f < ghost.size(); ++f) {
            if (ghost[f]) {
                out.push_back(static_cast<int>(f));
            }
        }
        return out;
    }
    /// Skeleton face index on grid line `breakIndex` of `axis` at transverse element, or -1.
    int face_at(int axis, int breakIndex, int transverse) const
    {
        const int other = 1 - axis;
        if (breakIndex < 0 || breakIndex > grid.cells(axis) || transverse < 0 || transverse >= grid.cells(other)) {
            return -1;
        }
        return faceLookup[axis][breakIndex * grid.cells(other) + transverse];
    }
};

/// Builds the background mesh from a per-cell classification.
inline BackgroundMesh build_background(const AmbientGrid& grid, const std::function<CellClass(int)>& classifier)
{
    BackgroundMesh mesh;
    mesh.grid = grid;
    const int n = grid.num_cells();
    mesh.classification.resize(n);
    mesh.activeIndex.assign(n, -1);
    for (int c = 0; c < n; ++c) {
        mesh.classification[c] = classifier(c);
        if (mesh.classification[c] != CellClass::Exterior) {
            mesh.activeIndex[c] = static_cast<int>(mesh.activeCells.size());
            mesh.activeCells.push_back(c);
        }
    }
    if (mesh.activeCells.empty()) {
        throw InvalidInput("no active cells: the physical domain does not meet the ambient grid");
    }

    for (int axis = 0; axis < 2; ++axis) {
        const int other = 1 - axis;
        mesh.faceLookup[axis].assign(static_cast<std::size_t>(grid.cells(axis) + 1) * grid.cells(other), -1);
    }
    // Faces are enumerated axis-major, then by grid line, then transverse.
    for (int axis = 0; axis < 2; ++axis) {
        const int other = 1 - axis;
        for (int b = 1; b < grid.cells(axis); ++b) {
            for (int t = 0; t < grid.cells(other); ++t) {
                std::array<int, 2> lo{};
                std::array<int, 2> hi{};
                lo[axis] = b - 1;
                hi[axis] = b;
                lo[other] = hi[other] = t;
                const int cLo = grid.index(lo[0], lo[1]);
                const int cHi = grid.index(hi[0], hi[1]);
                if (!mesh.is_active(cLo) || !mesh.is_active(cHi)) {
                    continue;
                }
                Face f;
                f.plus = std::min(cLo, cHi);
                f.minus = std::max(cLo, cHi);
                f.axis = axis;
                f.breakIndex = b;
                f.transverse = t;
                f.coordinate = grid.breaks(axis)[b];
                f.extent = {grid.breaks(other)[t], grid.breaks(other)[t + 1]};
                f.normal_size = 0.5 * (grid.spacing(axis, b - 1) + grid.spacing(axis, b));
                mesh.faceLookup[axis][b * grid.cells(other) + t] = static_cast<int>(mesh.skeletonFaces.size());
                mesh.skeletonFaces.push_back(f);
                mesh.ghost.push_back(mesh.classification[cLo] == CellClass::Cut
                    || mesh.classification[cHi] == CellClass::Cut);
            }
        }
    }
    return mesh;
}

/// Compact numbering of the basis functions whose support meets an active cell.
struct ActiveFunctionMap {
    std::vector<int> toCompact; ///< global -> compact, -1 when discarded
    std::vector<int> toGlobal;  ///< compact -> global

    int size() const { return static_cast<int>(toGlobal.size()); }
};

inline ActiveFunctionMap active_functions(const BackgroundMesh& mesh, const TensorBSplineBasis& basis)
{
    detail::require(basis.num_elements(0) == mesh.grid.cells(0) && basis.num_elements(1) == mesh.grid.cells(1),
        "basis and background mesh must share the ambient grid");
    const int k = basis.degree();
    std::vector<char> used(static_cast<std::size_t>(basis.size()), 0);
    for (int c : mesh.activeCells) {
        const auto [ex, ey] = mesh.grid.lattice(c);
        for (int jy = ey; jy <= ey + k; ++jy) {
            for (int jx = ex; jx <= ex + k; ++jx) {
                used[basis.index(jx, jy)] = 1;
            }
        }
    }
    ActiveFunctionMap map;
    map.toCompact.assign(used.size(), -1);
    for (int g = 0; g < basis.size(); ++g) {
        if (used[g]) {
            map.toCompact[g] = static_cast<int>(map.toGlobal.size());
            map.toGlobal.push_back(g);
        }
    }
    return map;
}

/// Skeleton faces on which the k-th normal-derivative jump of global function
/// `function` can be nonzero: grid lines in the closure of its support
/// (k+2 per direction) restricted to the support's transverse extent.
inline std::vector<int> faces_of_support(const BackgroundMesh& mesh, const TensorBSplineBasis& basis, int function)
{
    const auto mi = basis.multi_index(function);
    std::vector<int> out;
    for (int axis = 0; axis < 2; ++axis) {
        const int other = 1 - axis;
        const auto [a0, a1] = basis.knots(axis).support(mi[axis]);
        const auto [t0, t1] = basis.knots(other).support(mi[other]);
        for (int b = a0; b <= a1; ++b) {
            for (int t = t0; t < t1; ++t) {
                if (const int f = mesh.face_at(axis, b, t); f >= 0) {
                    out.push_back(f);
                }
            }
        }
    }
    std::sort(out.begin(), out.end());
    return out;
}

/// Debug dump of the classification ("cell,i,j,class") and the faces
/// ("axis,coordinate,lower,upper,ghost").
inline void write_mesh_csv(const BackgroundMesh& mesh, std::ostream& cells, std::ostream& faces)
{
    cells << "cell,i,j,class\n";
    for (int c = 0; c < mesh.grid.num_cells(); ++c) {
        const auto [i, j] = mesh.grid.lattice(c);
        cells << c << ',' << i << ',' << j << ',' << to_string(mesh.classification[c]) << '\n';
    }
    faces << "axis,coordinate,lower,upper,ghost\n";
    for (std::size_t f = 0; f < mesh.skeletonFaces.size(); ++f) {
        const Face& face = mesh.skeletonFaces[f];
        faces << face.axis << ',' << face.coordinate << ',' << face.extent[0] << ',' << face.extent[1] << ','
              << (mesh.ghost[f] ? 1 : 0) << '\n';
    }
}

} // namespace immersoflow
