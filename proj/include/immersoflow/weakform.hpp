#pragma once

#include <cmath>
#include <functional>
#include <ostream>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "immersoflow/immersion.hpp"
#include "immersoflow/parallel.hpp"
#include "immersoflow/splines.hpp"

namespace immersoflow {

using Vec2 = std::array<double, 2>;
using SparseMatrix = Eigen::SparseMatrix<double>;
using Triplets = std::vector<Eigen::Triplet<double>>;

/// Tags of the four sides of the ambient box, used when a side of the
/// physical domain conforms to the grid (left, right, bottom, top).
inline constexpr BoundaryTag kAmbientLeft = 100;
inline constexpr BoundaryTag kAmbientRight = 101;
inline constexpr BoundaryTag kAmbientBottom = 102;
inline constexpr BoundaryTag kAmbientTop = 103;

enum class BoundaryKind { None, Dirichlet, Neumann };

/// Everything needed to discretize one geometry: basis, background mesh,
/// active functions and the cut-cell quadrature.
struct Discretization {
    TensorBSplineBasis basis;
    LevelSetPtr levelSet;
    ImmersionParams immersion;
    BackgroundMesh mesh;
    ActiveFunctionMap functions;
    MeshQuadrature quadrature;

    int n() const { return functions.size(); }
    int degree() const { return basis.degree(); }
};

inline Discretization make_discretization(TensorBSplineBasis basis, LevelSetPtr levelSet, ImmersionParams immersion)
{
    detail::require(levelSet != nullptr, "discretization needs a level set");
    Discretization d;
    d.basis = std::move(basis);
    d.levelSet = std::move(levelSet);
    d.immersion = immersion;
    d.mesh = build_background(AmbientGrid::from_basis(d.basis), *d.levelSet, immersion);
    d.functions = active_functions(d.mesh, d.basis);
    d.quadrature = build_quadrature(d.mesh, *d.levelSet, immersion);
    return d;
}

/// Same geometry and mesh, quadrature regenerated with another Gauss order.
inline MeshQuadrature requadrature(const Discretization& d, int gaussOrder)
{
    ImmersionParams p = d.immersion;
    p.gaussOrder = gaussOrder;
    p.keepTessellation = false;
    return build_quadrature(d.mesh, *d.levelSet, p);
}

struct PhysicalSetup {
    double viscosity = 1.0;
    std::function<Vec2(const Point&)> bodyForce = [](const Point&) { return Vec2{0.0, 0.0}; };
    std::function<Vec2(const Point&, BoundaryTag)> dirichlet = [](const Point&, BoundaryTag) { return Vec2{0.0, 0.0}; };
    std::function<Vec2(const Point&, BoundaryTag)> neumann = [](const Point&, BoundaryTag) { return Vec2{0.0, 0.0}; };
    /// Boundary condition carried by each tag; immersed facets use the level
    /// set's tags, conforming ambient sides use kAmbientLeft..kAmbientTop.
    std::function<BoundaryKind(BoundaryTag)> kind = [](BoundaryTag t) {
        return t >= kAmbientLeft ? BoundaryKind::None : BoundaryKind::Dirichlet;
    };
    bool includeConvection = false;
    bool pressureMeanZero = false;
};

struct StabilizationParams {
    double beta = 54.0;        ///< Nitsche penalty
    double gamma = 0.1;        ///< skeleton penalty (pressure)
    double gammaTilde = 1e-3;  ///< ghost penalty (velocity)

    void validate() const
    {
        detail::require(beta > 0.0, "Nitsche parameter beta must be positive");
        detail::require(gamma >= 0.0, "skeleton penalty gamma must be non-negative");
        detail::require(gammaTilde >= 0.0, "ghost penalty gammaTilde must be non-negative");
    }
};

/// beta = 6 (k+1)^2, gamma = 10 / 0.1 / 5e-4 for k = 1 / 2 / 3, gammaTilde = 10^(-k-1).
inline StabilizationParams recommended_stabilization(int degree)
{
    StabilizationParams s;
    s.beta = 6.0 * (degree + 1) * (degree + 1);
    switch (degree) {
    case 1: s.gamma = 10.0; break;
    case 2: s.gamma = 0.1; break;
    case 3: s.gamma = 5e-4; break;
    default: s.gamma = 5e-4 * std::pow(1e-2, degree - 3); break;
    }
    s.gammaTilde = std::pow(10.0, -degree - 1);
    return s;
}

/// Quadrature point on the physical boundary of one cell.
struct BoundaryPoint {
    Point x;
    double weight;
    Vec2 normal;
    BoundaryTag tag;
    double h; ///< mesh size used by the Nitsche penalty
};

/// Immersed facets and trimmed conforming ambient edges of an active cell
/// (position `a` in mesh.activeCells) carrying a boundary condition.
inline std::vector<BoundaryPoint> boundary_points(const Discretization& d, const CellQuadrature& q,
    const PhysicalSetup& setup, int gaussOrder)
{
    std::vector<BoundaryPoint> out;
    const auto size = d.mesh.grid.cell_size(q.cell);
    const double hImmersed = std::min(size[0], size[1]);
    for (const auto& f : q.facets) {
        if (setup.kind(f.tag) == BoundaryKind::None) {
            continue;
        }
        for (std::size_t i = 0; i < f.points.size(); ++i) {
            out.push_back({f.points[i], f.weights[i], f.normal, f.tag, hImmersed});
        }
    }
    const auto [ci, cj] = d.mesh.grid.lattice(q.cell);
    const bool onSide[4] = {ci == 0, ci == d.mesh.grid.cells(0) - 1, cj == 0, cj == d.mesh.grid.cells(1) - 1};
    const Point lo = d.mesh.grid.cell_lower(q.cell);
    const Point hi = d.mesh.grid.cell_upper(q.cell);
    const GaussRule& g = gauss_legendre(gaussOrder);
    for (int e = 0; e < 4; ++e) {
        const BoundaryTag tag = kAmbientLeft + e;
        if (!onSide[e] || setup.kind(tag) == BoundaryKind::None) {
            continue;
        }
        const bool vertical = e < 2;
        const double fixed = (e == 0) ? lo[0] : (e == 1) ? hi[0] : (e == 2) ? lo[1] : hi[1];
        const double hNormal = vertical ? size[0] : size[1];
        for (const EdgeSegment& s : q.edges[e]) {
            const double len = s.upper - s.lower;
            for (std::size_t i = 0; i < g.points.size(); ++i) {
                const double t = s.lower + 0.5 * len * (g.points[i] + 1.0);
                const Point x = vertical ? Point{fixed, t} : Point{t, fixed};
                out.push_back({x, 0.5 * len * g.weights[i], kEdgeNormals[e], tag, hNormal});
            }
        }
    }
    return out;
}

/// All sparse blocks and load vectors of the stabilized saddle-point system.
/// Velocity unknowns are ordered component-major: dof (i, comp) = comp * n + i.
struct SystemBlocks {
    int n = 0; ///< scalar function count; n_u = 2n, n_p = n

    SparseMatrix A;       ///< viscous + Nitsche
    SparseMatrix Avol;    ///< 2 mu (sym grad, sym grad)
    SparseMatrix Knitsche;///< -2 mu <sym grad(trial) n, test>_D; A = Avol + K + K^T + P
    SparseMatrix Pnitsche;///< mu beta / h <trial, test>_D
    SparseMatrix B;       ///< n_p x n_u: -(q, div w) + <q, w.n>_D
    SparseMatrix Bvol;
    SparseMatrix Sghost;  ///< n_u x n_u
    SparseMatrix Sskel;   ///< n_p x n_p
    SparseMatrix Mpp;     ///< pressure mass + skeleton term
    SparseMatrix Mass;    ///< plain L2 mass (scalar)
    Eigen::VectorXd f1, f2;
    Eigen::VectorXd fBody, fNeumann, fSymmetry, fPenalty;
    Eigen::VectorXd meanVec;
    double measure = 0; ///< |Omega| of the tessellated domain

    int nu() const { return 2 * n; }
    int np() const { return n; }
};

namespace detail {

/// Deterministic chunked accumulation: per-item triplet buffers are filled in
/// parallel and appended in item order.
template <typename Item>
void accumulate_chunks(std::size_t count, std::vector<Triplets*> targets, Item&& item)
{
    constexpr std::size_t chunk = 256;
    std::vector<std::vector<Triplets>> local;
    for (std::size_t begin = 0; begin < count; begin += chunk) {
        const std::size_t end = std::min(count, begin + chunk);
        local.assign(end - begin, std::vector<Triplets>(targets.size()));
        parallel_for(end - begin, [&](std::size_t i) { item(begin + i, local[i]); });
        for (auto& buffers : local) {
            for (std::size_t t = 0; t < targets.size(); ++t) {
                targets[t]->insert(targets[t]->end(), buffers[t].begin(), buffers[t].end());
            }
        }
    }
}

inline SparseMatrix to_sparse(int rows, int cols, const Triplets& t)
{
    SparseMatrix m(rows, cols);
    m.setFromTriplets(t.begin(), t.end());
    m.makeCompressed();
    return m;
}

/// Compact indices of the (k+1)^2 functions supported on a cell.
inline std::vector<int> cell_dofs(const Discretization& d, int cell)
{
    const int k = d.degree();
    const auto [ex, ey] = d.mesh.grid.lattice(cell);
    std::vector<int> dofs;
    dofs.reserve(static_cast<std::size_t>((k + 1) * (k + 1)));
    for (int ly = 0; ly <= k; ++ly) {
        for (int lx = 0; lx <= k; ++lx) {
            dofs.push_back(d.functions.toCompact[d.basis.index(ex + lx, ey + ly)]);
        }
    }
    return dofs;
}

inline void scatter(Triplets& t, const Eigen::MatrixXd& local, const std::vector<int>& rows,
    const std::vector<int>& cols, double drop = 0.0)
{
    for (Eigen::Index j = 0; j < local.cols(); ++j) {
        for (Eigen::Index i = 0; i < local.rows(); ++i) {
            const double v = local(i, j);
            if (std::abs(v) > drop) {
                t.emplace_back(rows[i], cols[j], v);
            }
        }
    }
}

} // namespace detail

/// Volume and boundary terms: A (with its Nitsche parts), B, f1, f2, plus the
/// pressure mass matrix, the mean-value vector and |Omega|.
inline void assemble_saddle(const Discretization& d, const PhysicalSetup& setup, const StabilizationParams& stab,
    SystemBlocks& blocks)
{
    stab.validate();
    detail::require(setup.viscosity > 0.0, "viscosity must be positive");
    const int n = d.n();
    const int k = d.degree();
    const int nl = (k + 1) * (k + 1);
    const double mu = setup.viscosity;
    blocks.n = n;

    Triplets tAvol, tK, tP, tBvol, tBbnd, tM;
    Eigen::VectorXd fBody = Eigen::VectorXd::Zero(2 * n);
    Eigen::VectorXd fNeu = Eigen::VectorXd::Zero(2 * n);
    Eigen::VectorXd fSym = Eigen::VectorXd::Zero(2 * n);
    Eigen::VectorXd fPen = Eigen::VectorXd::Zero(2 * n);
    Eigen::VectorXd f2 = Eigen::VectorXd::Zero(n);
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(n);
    double measure = 0;

    struct CellVectors {
        Eigen::VectorXd body, neu, sym, pen, f2, mean;
        double measure = 0;
    };
    std::vector<CellVectors> vectors(d.quadrature.cells.size());

    detail::accumulate_chunks(d.quadrature.cells.size(), {&tAvol, &tK, &tP, &tBvol, &tBbnd, &tM},
        [&](std::size_t a, std::vector<Triplets>& out) {
            const CellQuadrature& q = d.quadrature.cells[a];
            const auto lat = d.mesh.grid.lattice(q.cell);
            const std::vector<int> dofs = detail::cell_dofs(d, q.cell);
            std::vector<int> vdofs(2 * nl);
            for (int l = 0; l < nl; ++l) {
                vdofs[l] = dofs[l];
                vdofs[nl + l] = n + dofs[l];
            }
            Eigen::MatrixXd avol = Eigen::MatrixXd::Zero(2 * nl, 2 * nl);
            Eigen::MatrixXd kn = Eigen::MatrixXd::Zero(2 * nl, 2 * nl);
            Eigen::MatrixXd pn = Eigen::MatrixXd::Zero(2 * nl, 2 * nl);
            Eigen::MatrixXd bvol = Eigen::MatrixXd::Zero(nl, 2 * nl);
            Eigen::MatrixXd bbnd = Eigen::MatrixXd::Zero(nl, 2 * nl);
            Eigen::MatrixXd mass = Eigen::MatrixXd::Zero(nl, nl);
            CellVectors& cv = vectors[a];
            cv.body = cv.neu = cv.sym = cv.pen = Eigen::VectorXd::Zero(2 * nl);
            cv.f2 = cv.mean = Eigen::VectorXd::Zero(nl);

            Eigen::VectorXd phi(nl), dx(nl), dy(nl);
            for (std::size_t p = 0; p < q.points.size(); ++p) {
                const LocalBasisEval e = eval_tensor_on_cell(d.basis, lat, q.points[p], 1);
                const double w = q.weights[p];
                for (int l = 0; l < nl; ++l) {
                    phi[l] = e.value(l);
                    dx[l] = e.derivative(l, 1, 0);
                    dy[l] = e.derivative(l, 0, 1);
                }
                // mu [delta_ab grad(test).grad(trial) + d_b(test) d_a(trial)] with a = test comp, b = trial comp
                const Eigen::MatrixXd lap = w * mu * (dx * dx.transpose() + dy * dy.transpose());
                avol.block(0, 0, nl, nl) += lap + w * mu * dx * dx.transpose();
                avol.block(nl, nl, nl, nl) += lap + w * mu * dy * dy.transpose();
                avol.block(0, nl, nl, nl) += w * mu * dy * dx.transpose();
                avol.block(nl, 0, nl, nl) += w * mu * dx * dy.transpose();
                bvol.block(0, 0, nl, nl) -= w * phi * dx.transpose();
                bvol.block(0, nl, nl, nl) -= w * phi * dy.transpose();
                mass += w * phi * phi.transpose();
                cv.mean += w * phi;
                cv.measure += w;
                const Vec2 f = setup.bodyForce(q.points[p]);
                cv.body.head(nl) += w * f[0] * phi;
                cv.body.tail(nl) += w * f[1] * phi;
            }

            for (const BoundaryPoint& bp : boundary_points(d, q, setup, d.immersion.gaussOrder)) {
                const LocalBasisEval e = eval_tensor_on_cell(d.basis, lat, bp.x, 1);
                const double w = bp.weight;
                const Vec2& nv = bp.normal;
                for (int l = 0; l < nl; ++l) {
                    phi[l] = e.value(l);
                    dx[l] = e.derivative(l, 1, 0);
                    dy[l] = e.derivative(l, 0, 1);
                }
                const BoundaryKind kind = setup.kind(bp.tag);
                if (kind == BoundaryKind::Neumann) {
                    const Vec2 h = setup.neumann(bp.x, bp.tag);
                    cv.neu.head(nl) += w * h[0] * phi;
                    cv.neu.tail(nl) += w * h[1] * phi;
                    continue;
                }
                const Eigen::VectorXd dn = nv[0] * dx + nv[1] * dy;
                const std::array<const Eigen::VectorXd*, 2> grad{&dx, &dy};
                // K(test (a,alpha), trial (b,beta)) = -mu phi_a (delta dn_b + n_beta d_alpha phi_b)
                for (int alpha = 0; alpha < 2; ++alpha) {
                    for (int beta = 0; beta < 2; ++beta) {
                        Eigen::MatrixXd blk = nv[beta] * (phi * grad[alpha]->transpose());
                        if (alpha == beta) {
                            blk += phi * dn.transpose();
                        }
                        kn.block(alpha * nl, beta * nl, nl, nl) -= w * mu * blk;
                    }
                    pn.block(alpha * nl, alpha * nl, nl, nl) += w * mu * stab.beta / bp.h * phi * phi.transpose();
                    bbnd.block(0, alpha * nl, nl, nl) += w * nv[alpha] * phi * phi.transpose();
                }
                const Vec2 g = setup.dirichlet(bp.x, bp.tag);
                const double gn = g[0] * nv[0] + g[1] * nv[1];
                const Eigen::VectorXd gGrad = g[0] * dx + g[1] * dy;
                for (int alpha = 0; alpha < 2; ++alpha) {
                    cv.sym.segment(alpha * nl, nl) -= w * mu * (g[alpha] * dn + nv[alpha] * gGrad);
                    cv.pen.segment(alpha * nl, nl) += w * mu * stab.beta / bp.h * g[alpha] * phi;
                }
                cv.f2 += w * gn * phi;
            }
            detail::scatter(out[0], avol, vdofs, vdofs);
            detail::scatter(out[1], kn, vdofs, vdofs);
            detail::scatter(out[2], pn, vdofs, vdofs);
            detail::scatter(out[3], bvol, dofs, vdofs);
            detail::scatter(out[4], bbnd, dofs, vdofs);
            detail::scatter(out[5], mass, dofs, dofs);
        });

    for (std::size_t a = 0; a < vectors.size(); ++a) {
        const std::vector<int> dofs = detail::cell_dofs(d, d.quadrature.cells[a].cell);
        const CellVectors& cv = vectors[a];
        for (int l = 0; l < nl; ++l) {
            for (int c = 0; c < 2; ++c) {
                const int row = c * n + dofs[l];
                fBody[row] += cv.body[c * nl + l];
                fNeu[row] += cv.neu[c * nl + l];
                fSym[row] += cv.sym[c * nl + l];
                fPen[row] += cv.pen[c * nl + l];
            }
            f2[dofs[l]] += cv.f2[l];
            mean[dofs[l]] += cv.mean[l];
        }
        measure += cv.measure;
    }

    blocks.Avol = detail::to_sparse(2 * n, 2 * n, tAvol);
    blocks.Knitsche = detail::to_sparse(2 * n, 2 * n, tK);
    blocks.Pnitsche = detail::to_sparse(2 * n, 2 * n, tP);
    blocks.Bvol = detail::to_sparse(n, 2 * n, tBvol);
    const SparseMatrix bbnd = detail::to_sparse(n, 2 * n, tBbnd);
    blocks.Mass = detail::to_sparse(n, n, tM);
    const SparseMatrix kt = blocks.Knitsche.transpose();
    blocks.A = blocks.Avol + blocks.Knitsche + kt + blocks.Pnitsche;
    blocks.B = blocks.Bvol + bbnd;
    blocks.fBody = fBody;
    blocks.fNeumann = fNeu;
    blocks.fSymmetry = fSym;
    blocks.fPenalty = fPen;
    blocks.f1 = fBody + fNeu + fSym + fPen;
    blocks.f2 = f2;
    blocks.meanVec = mean;
    blocks.measure = measure;
}

/// Convection matrix C(u)_ij = (u . grad N_j, N_i) for the velocity field with
/// coefficients `uhat` (length 2n).
inline SparseMatrix assemble_convection(const Discretization& d, const Eigen::VectorXd& uhat)
{
    const int n = d.n();
    if (uhat.size() != 2 * n) {
        throw InvalidInput("convection: velocity coefficient length mismatch");
    }
    const int k = d.degree();
    const int nl = (k + 1) * (k + 1);
    Triplets t;
    detail::accumulate_chunks(d.quadrature.cells.size(), {&t}, [&](std::size_t a, std::vector<Triplets>& out) {
        const CellQuadrature& q = d.quadrature.cells[a];
        const auto lat = d.mesh.grid.lattice(q.cell);
        const std::vector<int> dofs = detail::cell_dofs(d, q.cell);
        Eigen::VectorXd ux(nl), uy(nl);
        for (int l = 0; l < nl; ++l) {
            ux[l] = uhat[dofs[l]];
            uy[l] = uhat[n + dofs[l]];
        }
        Eigen::MatrixXd c = Eigen::MatrixXd::Zero(nl, nl);
        Eigen::VectorXd phi(nl), adv(nl);
        for (std::size_t p = 0; p < q.points.size(); ++p) {
            const LocalBasisEval e = eval_tensor_on_cell(d.basis, lat, q.points[p], 1);
            for (int l = 0; l < nl; ++l) {
                phi[l] = e.value(l);
            }
            const double vx = phi.dot(ux);
            const double vy = phi.dot(uy);
            for (int l = 0; l < nl; ++l) {
                adv[l] = vx * e.derivative(l, 1, 0) + vy * e.derivative(l, 0, 1);
            }
            c += q.weights[p] * phi * adv.transpose();
        }
        std::vector<int> vdofs(dofs);
        detail::scatter(out[0], c, dofs, dofs);
        for (int& v : vdofs) {
            v += n;
        }
        detail::scatter(out[0], c, vdofs, vdofs);
    });
    return detail::to_sparse(2 * n, 2 * n, t);
}

/// Sum over faces of h_F^power * int_F [[d_n^k N_i]] [[d_n^k N_j]] ds, scalar
/// functions, skeleton faces (ghostOnly = false) or ghost faces only.
inline SparseMatrix assemble_jump_matrix(const Discretization& d, int power, bool ghostOnly)
{
    const int n = d.n();
    const int k = d.degree();
    const int na = k + 2;
    const int nt = k + 1;
    const GaussRule& g = gauss_legendre(k + 1);
    const auto& faces = d.mesh.skeletonFaces;
    Triplets t;
    detail::accumulate_chunks(faces.size(), {&t}, [&](std::size_t f, std::vector<Triplets>& out) {
        if (ghostOnly && !d.mesh.ghost[f]) {
            return;
        }
        const Face& face = faces[f];
        const int other = 1 - face.axis;
        const UnivariateJump jump = univariate_jump(d.basis.knots(face.axis), face.breakIndex, k);
        Eigen::VectorXd jv(na * nt);
        Eigen::MatrixXd local = Eigen::MatrixXd::Zero(na * nt, na * nt);
        const double len = face.measure();
        for (std::size_t p = 0; p < g.points.size(); ++p) {
            const double s = face.extent[0] + 0.5 * len * (g.points[p] + 1.0);
            const UnivariateEval tr = eval_univariate_on_element(d.basis.knots(other), face.transverse, s, 0);
            for (int b = 0; b < nt; ++b) {
                for (int a = 0; a < na; ++a) {
                    jv[a + na * b] = jump.values[a] * tr.d[0][b];
                }
            }
            local += 0.5 * len * g.weights[p] * jv * jv.transpose();
        }
        local *= std::pow(face.normal_size, power);
        std::vector<int> dofs(static_cast<std::size_t>(na * nt));
        for (int b = 0; b < nt; ++b) {
            for (int a = 0; a < na; ++a) {
                std::array<int, 2> mi{};
                mi[face.axis] = jump.first + a;
                mi[other] = face.transverse + b;
                dofs[a + na * b] = d.functions.toCompact[d.basis.index(mi[0], mi[1])];
            }
        }
        detail::scatter(out[0], local, dofs, dofs);
    });
    return detail::to_sparse(n, n, t);
}

/// gamma / mu * sum_F h^(2k+1) int [[d_n^k p]] [[d_n^k q]] over all skeleton faces.
inline SparseMatrix assemble_skeleton_penalty(const Discretization& d, const StabilizationParams& stab, double mu)
{
    const int k = d.degree();
    return (stab.gamma / mu) * assemble_jump_matrix(d, 2 * k + 1, false);
}

/// gammaTilde * mu * sum_F h^(2k-1) int [[d_n^k u]] . [[d_n^k w]] over ghost faces,
/// block diagonal in the two velocity components.
inline SparseMatrix assemble_ghost_penalty(const Discretization& d, const StabilizationParams& stab, double mu)
{
    const int k = d.degree();
    const int n = d.n();
    const SparseMatrix s = (stab.gammaTilde * mu) * assemble_jump_matrix(d, 2 * k - 1, true);
    Triplets t;
    t.reserve(2 * static_cast<std::size_t>(s.nonZeros()));
    for (int c = 0; c < 2; ++c) {
        for (int col = 0; col < s.outerSize(); ++col) {
            for (SparseMatrix::InnerIterator it(s, col); it; ++it) {
                t.emplace_back(c * n + static_cast<int>(it.row()), c * n + col, it.value());
            }
        }
    }
    return detail::to_sparse(2 * n, 2 * n, t);
}

/// L2 mass plus the skeleton jump term with the same gamma: the pressure Gramian.
inline SparseMatrix assemble_pressure_gramian(const SparseMatrix& mass, const SparseMatrix& skeleton)
{
    SparseMatrix m = mass + skeleton;
    m.makeCompressed();
    return m;
}

/// meanVec_i = int_Omega N_i.
inline Eigen::VectorXd assemble_mean_constraint(const Discretization& d)
{
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(d.n());
    for (const CellQuadrature& q : d.quadrature.cells) {
        const auto lat = d.mesh.grid.lattice(q.cell);
        const std::vector<int> dofs = detail::cell_dofs(d, q.cell);
        for (std::size_t p = 0; p < q.points.size(); ++p) {
            const LocalBasisEval e = eval_tensor_on_cell(d.basis, lat, q.points[p], 0);
            for (int l = 0; l < e.count(); ++l) {
                mean[dofs[l]] += q.weights[p] * e.value(l);
            }
        }
    }
    return mean;
}

/// Every block of the linear(ized) system except the convection matrix.
inline SystemBlocks assemble_system(const Discretization& d, const PhysicalSetup& setup, const StabilizationParams& stab)
{
    SystemBlocks blocks;
    assemble_saddle(d, setup, stab, blocks);
    blocks.Sskel = assemble_skeleton_penalty(d, stab, setup.viscosity);
    blocks.Sghost = assemble_ghost_penalty(d, stab, setup.viscosity);
    blocks.Mpp = assemble_pressure_gramian(blocks.Mass, blocks.Sskel);
    return blocks;
}

/// MatrixMarket coordinate dump (general, real).
inline void write_matrix_market(const SparseMatrix& m, std::ostream& os)
{
    os << "%%MatrixMarket matrix coordinate real general\n";
    os << m.rows() << ' ' << m.cols() << ' ' << m.nonZeros() << '\n';
    os.precision(17);
    for (int col = 0; col < m.outerSize(); ++col) {
        for (SparseMatrix::InnerIterator it(m, col); it; ++it) {
            os << it.row() + 1 << ' ' << col + 1 << ' ' << it.value() << '\n';
        }
    }
}

} // namespace immersoflow
