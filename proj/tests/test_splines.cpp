#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "immersoflow/splines.hpp"

using namespace immersoflow;

namespace {

// Recursive Cox-de Boor definition on the full knot vector with the
// right-continuous convention and the last span closed.
double oracle_basis(const std::vector<double>& U, int i, int p, double x)
{
    if (p == 0) {
        const bool lastSpan = U[i + 1] == U.back() && U[i] < U[i + 1];
        if (U[i] <= x && (x < U[i + 1] || (lastSpan && x == U[i + 1]))) {
            return 1.0;
        }
        return 0.0;
    }
    double v = 0.0;
    if (U[i + p] > U[i]) {
        v += (x - U[i]) / (U[i + p] - U[i]) * oracle_basis(U, i, p - 1, x);
    }
    if (U[i + p + 1] > U[i + 1]) {
        v += (U[i + p + 1] - x) / (U[i + p + 1] - U[i + 1]) * oracle_basis(U, i + 1, p - 1, x);
    }
    return v;
}

// Derivative recursion N'_{i,p} = p/(u_{i+p}-u_i) N_{i,p-1} - p/(u_{i+p+1}-u_{i+1}) N_{i+1,p-1}.
double oracle_derivative(const std::vector<double>& U, int i, int p, double x, int order)
{
    if (order == 0) {
        return oracle_basis(U, i, p, x);
    }
    if (p == 0) {
        return 0.0;
    }
    double v = 0.0;
    if (U[i + p] > U[i]) {
        v += p / (U[i + p] - U[i]) * oracle_derivative(U, i, p - 1, x, order - 1);
    }
    if (U[i + p + 1] > U[i + 1]) {
        v -= p / (U[i + p + 1] - U[i + 1]) * oracle_derivative(U, i + 1, p - 1, x, order - 1);
    }
    return v;
}

} // namespace

TEST(KnotVector, OpenKnotsRepeatEndValues)
{
    const KnotVector kv = open_knot_vector(0.0, 1.0, 4, 2);
    const std::vector<double> expected{0, 0, 0, 0.25, 0.5, 0.75, 1, 1, 1};
    ASSERT_EQ(kv.values().size(), expected.size());
    for (std::size_t i = 0; i < expected.size(); ++i) {
        EXPECT_DOUBLE_EQ(kv.values()[i], expected[i]);
    }
    EXPECT_EQ(kv.num_functions(), 6);
    EXPECT_EQ(kv.element_of(0.5), 2);
    EXPECT_EQ(kv.element_of(1.0), 3);
    EXPECT_EQ(kv.support(0), std::make_pair(0, 1));
    EXPECT_EQ(kv.support(3), std::make_pair(1, 4));
}

TEST(KnotVector, RejectsInvalidInput)
{
    EXPECT_THROW(open_knot_vector(1.0, 0.0, 3, 2), InvalidInput);
    EXPECT_THROW(open_knot_vector(0.0, 1.0, 0, 2), InvalidInput);
    EXPECT_THROW(KnotVector({0.0, 0.5, 0.5, 1.0}, 2), InvalidInput);
    const KnotVector kv = open_knot_vector(0.0, 1.0, 3, 2);
    EXPECT_THROW(kv.element_of(1.5), InvalidInput);
    EXPECT_THROW(univariate_jump(kv, 0, 1), InvalidInput);
    EXPECT_THROW(univariate_jump(kv, 3, 1), InvalidInput);
}

TEST(Univariate, QuadraticMidpointValues)
{
    // Interior uniform quadratic B-splines at the middle of a span: 1/8, 3/4, 1/8.
    const KnotVector kv = open_knot_vector(0.0, 5.0, 5, 2);
    const UnivariateEval e = eval_univariate(kv, 2.5, 0);
    EXPECT_EQ(e.first, 2);
    EXPECT_NEAR(e.d[0][0], 0.125, 1e-15);
    EXPECT_NEAR(e.d[0][1], 0.75, 1e-15);
    EXPECT_NEAR(e.d[0][2], 0.125, 1e-15);
}

class UnivariateDegree : public ::testing::TestWithParam<int> {};

TEST_P(UnivariateDegree, MatchesRecursiveDefinition)
{
    const int p = GetParam();
    const KnotVector kv({0.0, 0.3, 0.45, 1.0, 1.2, 2.0}, p);
    const auto& U = kv.values();
    for (int s = 0; s <= 200; ++s) {
        const double x = 2.0 * s / 200.0;
        const UnivariateEval e = eval_univariate(kv, x, std::min(p + 1, kMaxDerivative));
        double sum = 0.0;
        for (int i = 0; i <= p; ++i) {
            sum += e.d[0][i];
            EXPECT_GE(e.d[0][i], -1e-15);
        }
        EXPECT_NEAR(sum, 1.0, 1e-13);
        for (int order = 0; order <= std::min(p + 1, kMaxDerivative); ++order) {
            for (int i = 0; i < kv.num_functions(); ++i) {
                const double expected = oracle_derivative(U, i, p, x, order);
                const int local = i - e.first;
                const double got = (local >= 0 && local <= p) ? e.d[order][local] : 0.0;
                EXPECT_NEAR(got, expected, 1e-9 * (1.0 + std::abs(expected))) << "x=" << x << " i=" << i
                                                                              << " order=" << order;
            }
        }
    }
}

TEST_P(UnivariateDegree, DerivativesMatchFiniteDifferences)
{
    const int p = GetParam();
    const KnotVector kv = open_knot_vector(-1.0, 2.0, 7, p);
    const double eps = 1e-6;
    for (double x : {-0.83, -0.1, 0.37, 1.05, 1.9}) {
        const int element = kv.element_of(x);
        const UnivariateEval c = eval_univariate_on_element(kv, element, x, 2);
        const UnivariateEval l = eval_univariate_on_element(kv, element, x - eps, 1);
        const UnivariateEval r = eval_univariate_on_element(kv, element, x + eps, 1);
        for (int i = 0; i <= p; ++i) {
            EXPECT_NEAR(c.d[1][i], (r.d[0][i] - l.d[0][i]) / (2 * eps), 1e-6 * (1 + std::abs(c.d[1][i])));
            EXPECT_NEAR(c.d[2][i], (r.d[1][i] - l.d[1][i]) / (2 * eps), 1e-4 * (1 + std::abs(c.d[2][i])));
        }
    }
}

TEST_P(UnivariateDegree, JumpsVanishBelowDegreeAndMatchOracleAtDegree)
{
    const int p = GetParam();
    const KnotVector kv({0.0, 0.25, 0.7, 1.0, 1.6}, p);
    const auto& U = kv.values();
    for (int b = 1; b < kv.num_elements(); ++b) {
        const double x = kv.breakpoints()[b];
        for (int order = 0; order <= p; ++order) {
            const UnivariateJump j = univariate_jump(kv, b, order);
            EXPECT_EQ(j.first, b - 1);
            EXPECT_EQ(j.count, p + 2);
            for (int a = 0; a < j.count; ++a) {
                const int i = j.first + a;
                double expected = 0.0;
                if (order == p && i < kv.num_functions()) {
                    // k-th derivative is constant per span: sample just inside each side.
                    const double hl = x - kv.breakpoints()[b - 1];
                    const double hr = kv.breakpoints()[b + 1] - x;
                    expected = oracle_derivative(U, i, p, x - 0.5 * hl, p) - oracle_derivative(U, i, p, x + 0.5 * hr, p);
                }
                EXPECT_NEAR(j.values[a], expected, 1e-8 * (1.0 + std::abs(expected)))
                    << "break " << b << " order " << order << " function " << i;
            }
        }
    }
}

INSTANTIATE_TEST_SUITE_P(Degrees, UnivariateDegree, ::testing::Values(1, 2, 3, 4));

TEST(TensorBasis, IndexingAndPartitionOfUnity)
{
    const TensorBSplineBasis basis(open_knot_vector(0.0, 1.0, 4, 2), open_knot_vector(-1.0, 1.0, 3, 2));
    EXPECT_EQ(basis.size(), 6 * 5);
    EXPECT_EQ(basis.index(2, 3), 2 + 6 * 3);
    EXPECT_EQ(basis.multi_index(basis.index(4, 1)), (std::array<int, 2>{4, 1}));
    const Point x{0.61, 0.2};
    const LocalBasisEval e = eval_tensor(basis, x, 1);
    double sum = 0.0;
    double gx = 0.0;
    double gy = 0.0;
    const auto& U = basis.knots(0).values();
    const auto& V = basis.knots(1).values();
    for (int l = 0; l < e.count(); ++l) {
        sum += e.value(l);
        gx += e.gradient(l)[0];
        gy += e.gradient(l)[1];
        const auto mi = basis.multi_index(e.global_index(l));
        EXPECT_NEAR(e.value(l), oracle_basis(U, mi[0], 2, x[0]) * oracle_basis(V, mi[1], 2, x[1]), 1e-14);
    }
    EXPECT_NEAR(sum, 1.0, 1e-14);
    EXPECT_NEAR(gx, 0.0, 1e-12);
    EXPECT_NEAR(gy, 0.0, 1e-12);
    EXPECT_THROW(eval_tensor(basis, {1.5, 0.0}, 0), InvalidInput);
}

TEST(TensorBasis, NormalJumpOfSplineFieldMatchesOneSidedDerivatives)
{
    const int k = 3;
    const TensorBSplineBasis basis(open_knot_vector(0.0, 1.0, 5, k), open_knot_vector(0.0, 1.0, 4, k));
    std::vector<double> coef(static_cast<std::size_t>(basis.size()));
    for (std::size_t i = 0; i < coef.size(); ++i) {
        coef[i] = std::sin(1.7 * static_cast<double>(i)) + 0.1 * static_cast<double>(i % 5);
    }
    for (int axis = 0; axis < 2; ++axis) {
        const int other = 1 - axis;
        for (int b = 1; b < basis.num_elements(axis); ++b) {
            const double along = 0.37;
            const double line = basis.knots(axis).breakpoints()[b];
            Point x{};
            x[axis] = line;
            x[other] = along;
            std::array<int, 2> left = cell_of(basis, x);
            left[axis] = b - 1;
            std::array<int, 2> right = left;
            right[axis] = b;
            for (int order = 0; order <= k; ++order) {
                const NormalJump nj = normal_jump(basis, axis, b, along, order);
                double jump = 0.0;
                for (std::size_t i = 0; i < nj.indices.size(); ++i) {
                    jump += coef[nj.indices[i]] * nj.values[i];
                }
                const LocalBasisEval el = eval_tensor_on_cell(basis, left, x, k);
                const LocalBasisEval er = eval_tensor_on_cell(basis, right, x, k);
                double fl = 0.0;
                double fr = 0.0;
                for (int l = 0; l < el.count(); ++l) {
                    const int dx = axis == 0 ? order : 0;
                    const int dy = axis == 1 ? order : 0;
                    fl += coef[el.global_index(l)] * el.derivative(l, dx, dy);
                    fr += coef[er.global_index(l)] * er.derivative(l, dx, dy);
                }
                const double scale = 1.0 + std::abs(fl) + std::abs(fr);
                EXPECT_NEAR(jump, fl - fr, 1e-9 * scale);
                if (order < k) {
                    EXPECT_NEAR(jump, 0.0, 1e-8 * scale);
                }
            }
            EXPECT_EQ(kth_normal_jump(basis, axis, b, along).indices.size(),
                static_cast<std::size_t>((k + 1) * (k + 2)));
        }
    }
}
