#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>
#include <string>

#include <gtest/gtest.h>

#include "immersoflow/mesh.hpp"

using namespace immersoflow;

namespace {

CellClass pattern(int i, int j)
{
    if (i + j >= 8) {
        return CellClass::Exterior;
    }
    if (i + j == 7 || (i == 0 && j == 0)) {
        return CellClass::Cut;
    }
    return CellClass::Interior;
}

BackgroundMesh pattern_mesh(const AmbientGrid& grid)
{
    return build_background(grid, [&](int c) {
        const auto [i, j] = grid.lattice(c);
        return pattern(i, j);
    });
}

} // namespace

TEST(AmbientGrid, UniformGeometry)
{
    const AmbientGrid g = AmbientGrid::uniform({-1.0, 0.0}, {1.0, 3.0}, {4, 6});
    EXPECT_EQ(g.num_cells(), 24);
    EXPECT_EQ(g.index(3, 2), 11);
    EXPECT_EQ(g.lattice(11), (std::array<int, 2>{3, 2}));
    EXPECT_DOUBLE_EQ(g.cell_lower(11)[0], 0.5);
    EXPECT_DOUBLE_EQ(g.cell_upper(11)[1], 1.5);
    EXPECT_DOUBLE_EQ(g.cell_size(0)[0], 0.5);
    EXPECT_THROW(AmbientGrid({std::vector<double>{0.0, 0.0}, std::vector<double>{0.0, 1.0}}), InvalidInput);
}

TEST(BackgroundMesh, FaceAndGhostCountsMatchBruteForce)
{
    const AmbientGrid grid = AmbientGrid::uniform({0.0, 0.0}, {6.0, 5.0}, {6, 5});
    const BackgroundMesh mesh = pattern_mesh(grid);

    int active = 0;
    int cut = 0;
    int faces = 0;
    int ghosts = 0;
    for (int j = 0; j < 5; ++j) {
        for (int i = 0; i < 6; ++i) {
            active += pattern(i, j) != CellClass::Exterior;
            cut += pattern(i, j) == CellClass::Cut;
            const std::array<std::array<int, 2>, 2> nb{{{i + 1, j}, {i, j + 1}}};
            for (const auto& [a, b] : nb) {
                if (a >= 6 || b >= 5) {
                    continue;
                }
                if (pattern(i, j) == CellClass::Exterior || pattern(a, b) == CellClass::Exterior) {
                    continue;
                }
                ++faces;
                ghosts += pattern(i, j) == CellClass::Cut || pattern(a, b) == CellClass::Cut;
            }
        }
    }
    EXPECT_EQ(static_cast<int>(mesh.activeCells.size()), active);
    EXPECT_EQ(mesh.num_cut(), cut);
    EXPECT_EQ(static_cast<int>(mesh.skeletonFaces.size()), faces);
    EXPECT_EQ(static_cast<int>(mesh.ghost_faces().size()), ghosts);
    EXPECT_TRUE(std::is_sorted(mesh.activeCells.begin(), mesh.activeCells.end()));

    for (std::size_t f = 0; f < mesh.skeletonFaces.size(); ++f) {
        const Face& face = mesh.skeletonFaces[f];
        EXPECT_LT(face.plus, face.minus);
        EXPECT_EQ(mesh.face_at(face.axis, face.breakIndex, face.transverse), static_cast<int>(f));
        EXPECT_DOUBLE_EQ(face.measure(), 1.0);
        EXPECT_DOUBLE_EQ(face.normal_size, 1.0);
        const auto lp = grid.lattice(face.plus);
        const auto lm = grid.lattice(face.minus);
        EXPECT_EQ(lm[face.axis] - lp[face.axis], 1);
        EXPECT_EQ(lm[1 - face.axis], lp[1 - face.axis]);
    }
    EXPECT_EQ(mesh.face_at(0, 0, 0), -1);
    EXPECT_EQ(mesh.face_at(1, 9, 0), -1);
}

TEST(BackgroundMesh, NoActiveCellsIsInvalid)
{
    const AmbientGrid grid = AmbientGrid::uniform({0.0, 0.0}, {1.0, 1.0}, {2, 2});
    EXPECT_THROW(build_background(grid, [](int) { return CellClass::Exterior; }), InvalidInput);
}

TEST(ActiveFunctions, KeepsFunctionsMeetingActiveCells)
{
    const int k = 2;
    const TensorBSplineBasis basis(open_knot_vector(0.0, 6.0, 6, k), open_knot_vector(0.0, 5.0, 5, k));
    const BackgroundMesh mesh = pattern_mesh(AmbientGrid::from_basis(basis));
    const ActiveFunctionMap map = active_functions(mesh, basis);
    int expected = 0;
    for (int g = 0; g < basis.size(); ++g) {
        const auto mi = basis.multi_index(g);
        const auto sx = basis.knots(0).support(mi[0]);
        const auto sy = basis.knots(1).support(mi[1]);
        bool used = false;
        for (int i = sx.first; i < sx.second; ++i) {
            for (int j = sy.first; j < sy.second; ++j) {
                used = used || pattern(i, j) != CellClass::Exterior;
            }
        }
        expected += used;
        EXPECT_EQ(map.toCompact[g] >= 0, used);
        if (used) {
            EXPECT_EQ(map.toGlobal[map.toCompact[g]], g);
        }
    }
    EXPECT_EQ(map.size(), expected);
}

class SupportFaces : public ::testing::TestWithParam<int> {};

TEST_P(SupportFaces, InteriorFunctionCountAndJumpCoverage)
{
    const int k = GetParam();
    const int n = 3 * k + 4;
    const TensorBSplineBasis basis(open_knot_vector(0.0, 1.0, n, k), open_knot_vector(0.0, 1.0, n, k));
    const BackgroundMesh mesh
        = build_background(AmbientGrid::from_basis(basis), [](int) { return CellClass::Interior; });
    EXPECT_EQ(static_cast<int>(mesh.skeletonFaces.size()), 2 * n * (n - 1));

    const int mid = basis.index(n / 2, n / 2);
    EXPECT_EQ(static_cast<int>(faces_of_support(mesh, basis, mid).size()), 2 * (k + 2) * (k + 1));

    // Every face where a k-th normal jump of the function is nonzero is listed.
    for (int g = 0; g < basis.size(); ++g) {
        const std::vector<int> listed = faces_of_support(mesh, basis, g);
        const std::set<int> listedSet(listed.begin(), listed.end());
        for (std::size_t f = 0; f < mesh.skeletonFaces.size(); ++f) {
            const Face& face = mesh.skeletonFaces[f];
            bool nonzero = false;
            for (double s : {0.25, 0.5, 0.75}) {
                const double along = face.extent[0] + s * face.measure();
                const NormalJump j = kth_normal_jump(basis, face.axis, face.breakIndex, along);
                for (std::size_t i = 0; i < j.indices.size(); ++i) {
                    nonzero = nonzero || (j.indices[i] == g && std::abs(j.values[i]) > 1e-12);
                }
            }
            if (nonzero) {
                EXPECT_TRUE(listedSet.count(static_cast<int>(f))) << "function " << g << " face " << f;
            }
        }
    }
}

INSTANTIATE_TEST_SUITE_P(Degrees, SupportFaces, ::testing::Values(1, 2, 3));

TEST(BackgroundMesh, CsvDump)
{
    const AmbientGrid grid = AmbientGrid::uniform({0.0, 0.0}, {6.0, 5.0}, {6, 5});
    const BackgroundMesh mesh = pattern_mesh(grid);
    std::ostringstream cells;
    std::ostringstream faces;
    write_mesh_csv(mesh, cells, faces);
    const std::string c = cells.str();
    const std::string f = faces.str();
    EXPECT_EQ(std::count(c.begin(), c.end(), '\n'), grid.num_cells() + 1);
    EXPECT_EQ(std::count(f.begin(), f.end(), '\n'), static_cast<long>(mesh.skeletonFaces.size()) + 1);
    EXPECT_EQ(c.rfind("cell,i,j,class\n", 0), 0u);
}
