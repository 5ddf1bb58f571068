#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <ostream>
#include <sstream>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseLU>
#ifdef IMMERSOFLOW_USE_UMFPACK
#include <Eigen/UmfPackSupport>
#endif

#include "immersoflow/solution.hpp"

namespace immersoflow {

#ifdef IMMERSOFLOW_USE_UMFPACK
using SparseFactorization = Eigen::UmfPackLU<SparseMatrix>;
#else
using SparseFactorization = Eigen::SparseLU<SparseMatrix, Eigen::COLAMDOrdering<int>>;
#endif

/// Assembles [[A + Sghost + C, B^T, 0], [B, -Sskel, m], [0, m^T, 0]]; the
/// multiplier row/column is present only with `meanConstraint`.
inline SparseMatrix saddle_matrix(const SystemBlocks& b, const SparseMatrix* convection, bool meanConstraint)
{
    const int nu = b.nu();
    const int np = b.np();
    const int size = nu + np + (meanConstraint ? 1 : 0);
    Triplets t;
    t.reserve(static_cast<std::size_t>(b.A.nonZeros() + b.Sghost.nonZeros() + 2 * b.B.nonZeros()
        + b.Sskel.nonZeros() + (convection ? convection->nonZeros() : 0) + 2 * np));
    auto add = [&](const SparseMatrix& m, int r0, int c0, double scale, bool transpose) {
        for (int col = 0; col < m.outerSize(); ++col) {
            for (SparseMatrix::InnerIterator it(m, col); it; ++it) {
                const int r = static_cast<int>(it.row());
                if (transpose) {
                    t.emplace_back(r0 + col, c0 + r, scale * it.value());
                } else {
                    t.emplace_back(r0 + r, c0 + col, scale * it.value());
                }
            }
        }
    };
    add(b.A, 0, 0, 1.0, false);
    add(b.Sghost, 0, 0, 1.0, false);
    if (convection) {
        add(*convection, 0, 0, 1.0, false);
    }
    add(b.B, 0, nu, 1.0, true);
    add(b.B, nu, 0, 1.0, false);
    add(b.Sskel, nu, nu, -1.0, false);
    if (meanConstraint) {
        for (int i = 0; i < np; ++i) {
            if (b.meanVec[i] != 0.0) {
                t.emplace_back(nu + i, nu + np, b.meanVec[i]);
                t.emplace_back(nu + np, nu + i, b.meanVec[i]);
            }
        }
    }
    return detail::to_sparse(size, size, t);
}

inline Eigen::VectorXd saddle_rhs(const SystemBlocks& b, bool meanConstraint)
{
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(b.nu() + b.np() + (meanConstraint ? 1 : 0));
    rhs.head(b.nu()) = b.f1;
    rhs.segment(b.nu(), b.np()) = b.f2;
    return rhs;
}

/// Direct factorization with a posteriori residual check and up to three
/// steps of iterative refinement.
class LinearSolver {
public:
    void factorize(const SparseMatrix& k)
    {
        matrix_ = k;
        if (!analyzed_ || k.rows() != rows_ || k.nonZeros() != nnz_) {
            solver_.analyzePattern(matrix_);
            analyzed_ = true;
            rows_ = k.rows();
            nnz_ = k.nonZeros();
        }
        solver_.factorize(matrix_);
        if (solver_.info() != Eigen::Success) {
            throw NumericalFailure("sparse factorization failed: system is singular or ill-posed");
        }
    }

    Eigen::VectorXd solve(const Eigen::VectorXd& rhs, double tolerance = 1e-9)
    {
        Eigen::VectorXd x = solver_.solve(rhs);
        if (solver_.info() != Eigen::Success || !x.allFinite()) {
            throw NumericalFailure("sparse solve failed (singular system)");
        }
        const double scale = std::max(rhs.lpNorm<Eigen::Infinity>(), 1e-300);
        Eigen::VectorXd r = rhs - matrix_ * x;
        for (int it = 0; it < 3 && r.lpNorm<Eigen::Infinity>() > tolerance * scale; ++it) {
            x += solver_.solve(r);
            r = rhs - matrix_ * x;
        }
        residual_ = rhs.lpNorm<Eigen::Infinity>() > 0 ? r.lpNorm<Eigen::Infinity>() / scale : r.lpNorm<Eigen::Infinity>();
        if (!(residual_ <= tolerance) && rhs.lpNorm<Eigen::Infinity>() > 0) {
            std::ostringstream msg;
            msg << "linear solve residual " << residual_ << " exceeds tolerance " << tolerance
                << " (near-singular system)";
            throw NumericalFailure(msg.str());
        }
        return x;
    }

    double last_residual() const { return residual_; }

private:
    SparseFactorization solver_;
    SparseMatrix matrix_;
    bool analyzed_ = false;
    Eigen::Index rows_ = 0;
    Eigen::Index nnz_ = 0;
    double residual_ = 0;
};

inline FlowSolution unpack(const SystemBlocks& b, const Eigen::VectorXd& x, bool meanConstraint)
{
    FlowSolution s;
    s.uhat = x.head(b.nu());
    s.phat = x.segment(b.nu(), b.np());
    if (meanConstraint) {
        s.lambda = x[b.nu() + b.np()];
    }
    return s;
}

/// Linear solve of the stabilized Stokes system (no convection).
inline FlowSolution solve_stokes(const SystemBlocks& blocks, const PhysicalSetup& setup, double* residual = nullptr)
{
    const bool mean = setup.pressureMeanZero;
    LinearSolver solver;
    solver.factorize(saddle_matrix(blocks, nullptr, mean));
    const Eigen::VectorXd x = solver.solve(saddle_rhs(blocks, mean));
    if (residual) {
        *residual = solver.last_residual();
    }
    return unpack(blocks, x, mean);
}

struct PicardConfig {
    double tolerance = 1e-10;
    int maxIterations = 50;
    double relaxation = 1.0;

    void validate() const
    {
        detail::require(tolerance > 0.0, "Picard tolerance must be positive");
        detail::require(maxIterations >= 1, "Picard needs at least one iteration");
        detail::require(relaxation > 0.0 && relaxation <= 1.0, "Picard relaxation must be in (0, 1]");
    }
};

struct PicardResult {
    FlowSolution solution;
    std::vector<double> increments; ///< relative velocity increment per iteration
    bool converged = false;
    int iterations = 0;
};

using ConvectionAssembler = std::function<SparseMatrix(const Eigen::VectorXd& uhat)>;

/// Picard iteration c(u_prev; u, w), started from the Stokes solution.
inline PicardResult solve_navier_stokes(const SystemBlocks& blocks, const PhysicalSetup& setup,
    const ConvectionAssembler& convection, const PicardConfig& config)
{
    config.validate();
    const bool mean = setup.pressureMeanZero;
    const Eigen::VectorXd rhs = saddle_rhs(blocks, mean);
    LinearSolver solver;
    solver.factorize(saddle_matrix(blocks, nullptr, mean));
    FlowSolution current = unpack(blocks, solver.solve(rhs), mean);

    PicardResult result;
    double best = std::numeric_limits<double>::infinity();
    FlowSolution bestSolution = current;
    for (int it = 1; it <= config.maxIterations; ++it) {
        const SparseMatrix c = convection(current.uhat);
        solver.factorize(saddle_matrix(blocks, &c, mean));
        FlowSolution next = unpack(blocks, solver.solve(rhs), mean);
        if (config.relaxation < 1.0) {
            next.uhat = config.relaxation * next.uhat + (1.0 - config.relaxation) * current.uhat;
            next.phat = config.relaxation * next.phat + (1.0 - config.relaxation) * current.phat;
        }
        const double norm = next.uhat.norm();
        const double inc = norm > 0.0 ? (next.uhat - current.uhat).norm() / norm : (next.uhat - current.uhat).norm();
        result.increments.push_back(inc);
        result.iterations = it;
        current = std::move(next);
        if (inc < best) {
            best = inc;
            bestSolution = current;
        }
        if (inc <= config.tolerance) {
            result.converged = true;
            result.solution = current;
            return result;
        }
    }
    result.solution = bestSolution;
    return result;
}

struct InfSupResult {
    double lambdaH = 0;
    std::vector<double> spectrum; ///< smallest generalized eigenvalues (lambda_h^2 values)
    int kernelModes = 0;
    bool zeroModeDetected = false;
};

/// Generalized eigenproblem (B K^-1 B^T + Sskel) q = lambda^2 Mpp q with the
/// velocity block K = A + Sghost. Eigenvalues below 1e-8 times the largest
/// are kernel modes.
inline InfSupResult infsup_constant(const SystemBlocks& blocks, int spectrumSize = 10)
{
    const SparseMatrix k = blocks.A + blocks.Sghost;
    LinearSolver solver;
    solver.factorize(k);
    const Eigen::MatrixXd bt = Eigen::MatrixXd(blocks.B.transpose());
    Eigen::MatrixXd x(bt.rows(), bt.cols());
    for (Eigen::Index j = 0; j < bt.cols(); ++j) {
        x.col(j) = solver.solve(bt.col(j));
    }
    Eigen::MatrixXd schur = blocks.B * x;
    schur += Eigen::MatrixXd(blocks.Sskel);
    schur = 0.5 * (schur + schur.transpose()).eval();
    Eigen::MatrixXd m = Eigen::MatrixXd(blocks.Mpp);
    m = 0.5 * (m + m.transpose()).eval();

    Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> eig(schur, m, Eigen::EigenvaluesOnly);
    if (eig.info() != Eigen::Success) {
        throw NumericalFailure("generalized eigensolver did not converge");
    }
    const Eigen::VectorXd ev = eig.eigenvalues();
    const double largest = ev.cwiseAbs().maxCoeff();
    InfSupResult r;
    for (Eigen::Index i = 0; i < ev.size(); ++i) {
        if (ev[i] < 1e-8 * largest) {
            ++r.kernelModes;
        } else if (r.lambdaH == 0.0) {
            r.lambdaH = std::sqrt(ev[i]);
        }
        if (static_cast<int>(r.spectrum.size()) < spectrumSize) {
            r.spectrum.push_back(ev[i]);
        }
    }
    r.zeroModeDetected = r.kernelModes > 0;
    return r;
}

/// "iteration,increment" rows.
inline void write_history_csv(const PicardResult& r, std::ostream& os)
{
    os << "iteration,increment\n";
    os.precision(10);
    for (std::size_t i = 0; i < r.increments.size(); ++i) {
        os << i + 1 << ',' << r.increments[i] << '\n';
    }
}

inline void write_spectrum_csv(const InfSupResult& r, std::ostream& os)
{
    os << "index,eigenvalue\n";
    os.precision(12);
    for (std::size_t i = 0; i < r.spectrum.size(); ++i) {
        os << i << ',' << r.spectrum[i] << '\n';
    }
}

} // namespace immersoflow
