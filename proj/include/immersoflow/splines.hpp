#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "immersoflow/errors.hpp"

namespace immersoflow {

/// Largest supported polynomial degree. Tables are fixed-size so that basis
/// evaluation never allocates.
inline constexpr int kMaxDegree = 5;
inline constexpr int kMaxBasis = kMaxDegree + 1;
inline constexpr int kMaxDerivative = kMaxDegree + 1;

using Point = std::array<double, 2>;

/// Open knot vector of degree k with maximal regularity: the end knots are
/// repeated k+1 times and interior knots are simple.
class KnotVector {
public:
    KnotVector() = default;

    KnotVector(std::vector<double> breakpoints, int degree)
        : breakpoints_(std::move(breakpoints))
        , degree_(degree)
    {
        detail::require(degree_ >= 0 && degree_ <= kMaxDegree,
            "degree must be in [0, " + std::to_string(kMaxDegree) + "]");
        detail::require(breakpoints_.size() >= 2, "knot vector needs at least two distinct knots");
        for (std::size_t i = 1; i < breakpoints_.size(); ++i) {
            detail::require(breakpoints_[i] > breakpoints_[i - 1],
                "breakpoints must be strictly increasing (repeated interior knots are not supported)");
        }
        values_.reserve(breakpoints_.size() + 2 * static_cast<std::size_t>(degree_));
        values_.insert(values_.end(), static_cast<std::size_t>(degree_), breakpoints_.front());
        values_.insert(values_.end(), breakpoints_.begin(), breakpoints_.end());
        values_.insert(values_.end(), static_cast<std::size_t>(degree_), breakpoints_.back());
    }

    /// Full knot vector including the repeated end knots.
    const std::vector<double>& values() const { return values_; }
    /// Unique knot values.
    const std::vector<double>& breakpoints() const { return breakpoints_; }
    int degree() const { return degree_; }
    int num_elements() const { return static_cast<int>(breakpoints_.size()) - 1; }
    int num_functions() const { return num_elements() + degree_; }
    double lower() const { return breakpoints_.front(); }
    double upper() const { return breakpoints_.back(); }
    double element_size(int e) const { return breakpoints_[e + 1] - breakpoints_[e]; }

    bool contains(double x) const { return x >= lower() && x <= upper(); }

    /// Element containing x; right-continuous at interior knots, the last
    /// element is used at the right end point.
    int element_of(double x) const
    {
        if (!contains(x)) {
            throw InvalidInput("coordinate " + std::to_string(x) + " outside knot range");
        }
        const auto it = std::upper_bound(breakpoints_.begin(), breakpoints_.end(), x);
        const int e = static_cast<int>(it - breakpoints_.begin()) - 1;
        return std::min(e, num_elements() - 1);
    }

    /// First function supported on element e; functions first..first+k are nonzero there.
    int first_function(int element) const { return element; }

    /// Elements [first, last) in the support of function i.
    std::pair<int, int> support(int function) const
    {
        return {std::max(0, function - degree_), std::min(num_elements(), function + 1)};
    }

private:
    std::vector<double> breakpoints_;
    std::vector<double> values_;
    int degree_ = 0;
};

/// Uniform open knot vector on [a, b] with `elements` spans.
inline KnotVector open_knot_vector(double a, double b, int elements, int degree)
{
    if (!(a < b)) {
        throw InvalidInput("invalid interval: lower bound must be below upper bound");
    }
    if (elements < 1) {
        throw InvalidInput("knot vector needs at least one element");
    }
    detail::require(degree >= 1, "degree must be at least 1");
    std::vector<double> breaks(static_cast<std::size_t>(elements) + 1);
    const double h = (b - a) / elements;
    for (int i = 0; i <= elements; ++i) {
        breaks[i] = a + h * i;
    }
    breaks.back() = b;
    return KnotVector(std::move(breaks), degree);
}

/// Values and derivatives of the k+1 functions supported at a point.
/// `d[q][i]` is the q-th derivative of function `first + i`.
struct UnivariateEval {
    int first = 0;
    int degree = 0;
    int order = 0;
    std::array<std::array<double, kMaxBasis>, kMaxDerivative + 1> d{};
};

/// Cox-de Boor evaluation with derivatives on a prescribed element (The NURBS
/// Book, A2.3). Derivatives of order above the degree are zero.
inline UnivariateEval eval_univariate_on_element(const KnotVector& kv, int element, double x, int maxDeriv)
{
    const int p = kv.degree();
    detail::require(maxDeriv >= 0 && maxDeriv <= kMaxDerivative, "derivative order out of range");
    detail::require(element >= 0 && element < kv.num_elements(), "element index out of range");
    const std::vector<double>& U = kv.values();
    const int span = element + p;

    UnivariateEval out;
    out.first = element;
    out.degree = p;
    out.order = maxDeriv;

    std::array<std::array<double, kMaxBasis>, kMaxBasis> ndu{};
    std::array<double, kMaxBasis> left{};
    std::array<double, kMaxBasis> right{};
    ndu[0][0] = 1.0;
    for (int j = 1; j <= p; ++j) {
        left[j] = x - U[span + 1 - j];
        right[j] = U[span + j] - x;
        double saved = 0.0;
        for (int r = 0; r < j; ++r) {
            ndu[j][r] = right[r + 1] + left[j - r];
            const double temp = ndu[r][j - 1] / ndu[j][r];
            ndu[r][j] = saved + right[r + 1] * temp;
            saved = left[j - r] * temp;
        }
        ndu[j][j] = saved;
    }
    for (int j = 0; j <= p; ++j) {
        out.d[0][j] = ndu[j][p];
    }

    const int n = std::min(maxDeriv, p);
    std::array<std::array<double, kMaxBasis>, 2> a{};
    for (int r = 0; r <= p; ++r) {
        int s1 = 0;
        int s2 = 1;
        a[0][0] = 1.0;
        for (int k = 1; k <= n; ++k) {
            double d = 0.0;
            const int rk = r - k;
            const int pk = p - k;
            if (r >= k) {
                a[s2][0] = a[s1][0] / ndu[pk + 1][rk];
                d = a[s2][0] * ndu[rk][pk];
            }
            const int j1 = rk >= -1 ? 1 : -rk;
            const int j2 = (r - 1 <= pk) ? k - 1 : p - r;
            for (int j = j1; j <= j2; ++j) {
                a[s2][j] = (a[s1][j] - a[s1][j - 1]) / ndu[pk + 1][rk + j];
                d += a[s2][j] * ndu[rk + j][pk];
            }
            if (r <= pk) {
                a[s2][k] = -a[s1][k - 1] / ndu[pk + 1][r];
                d += a[s2][k] * ndu[r][pk];
            }
            out.d[k][r] = d;
            std::swap(s1, s2);
        }
    }
    double factor = p;
    for (int k = 1; k <= n; ++k) {
        for (int j = 0; j <= p; ++j) {
            out.d[k][j] *= factor;
        }
        factor *= (p - k);
    }
    return out;
}

/// Evaluation at x using the right-continuous element convention.
inline UnivariateEval eval_univariate(const KnotVector& kv, double x, int maxDeriv)
{
    return eval_univariate_on_element(kv, kv.element_of(x), x, maxDeriv);
}

/// Jump f(left) - f(right) of the `order`-th derivative of every function
/// supported on either element adjacent to interior breakpoint `breakIndex`.
/// Covers functions first..first+k+1.
struct UnivariateJump {
    int first = 0;
    int count = 0;
    std::array<double, kMaxBasis + 1> values{};
};

inline UnivariateJump univariate_jump(const KnotVector& kv, int breakIndex, int order)
{
    if (breakIndex <= 0 || breakIndex >= kv.num_elements()) {
        throw InvalidInput("jump requested at a boundary knot (no two-sided trace)");
    }
    const double x = kv.breakpoints()[breakIndex];
    const UnivariateEval left = eval_univariate_on_element(kv, breakIndex - 1, x, order);
    const UnivariateEval right = eval_univariate_on_element(kv, breakIndex, x, order);
    UnivariateJump jump;
    jump.first = breakIndex - 1;
    jump.count = kv.degree() + 2;
    for (int i = 0; i <= kv.degree(); ++i) {
        jump.values[i] += left.d[order][i];
        jump.values[i + 1] -= right.d[order][i];
    }
    return jump;
}

/// Tensor-product B-spline basis on a rectangle, identical degree in both directions.
/// Function (ix, iy) has flat index ix + nx * iy.
class TensorBSplineBasis {
public:
    TensorBSplineBasis() = default;

    TensorBSplineBasis(KnotVector kx, KnotVector ky)
        : knots_{std::move(kx), std::move(ky)}
    {
        detail::require(knots_[0].degree() == knots_[1].degree(), "all directions must share the same degree");
    }

    int degree() const { return knots_[0].degree(); }
    const KnotVector& knots(int dir) const { return knots_[dir]; }
    int num_functions(int dir) const { return knots_[dir].num_functions(); }
    int size() const { return num_functions(0) * num_functions(1); }
    int num_elements(int dir) const { return knots_[dir].num_elements(); }

    int index(int ix, int iy) const { return ix + num_functions(0) * iy; }
    std::array<int, 2> multi_index(int i) const { return {i % num_functions(0), i / num_functions(0)}; }

    bool contains(const Point& x) const { return knots_[0].contains(x[0]) && knots_[1].contains(x[1]); }

private:
    std::array<KnotVector, 2> knots_;
};

/// Nonzero tensor-product functions at one point, as products of the
/// univariate tables. Local function l = lx + (k+1) * ly.
struct LocalBasisEval {
    std::array<int, 2> firstIndex{};
    int degree = 0;
    int maxDeriv = 0;
    UnivariateEval ux;
    UnivariateEval uy;
    int nx = 0; ///< number of functions in x of the whole basis, for global indices

    int count() const { return (degree + 1) * (degree + 1); }
    int per_direction() const { return degree + 1; }
    int global_index(int l) const
    {
        const int lx = l % (degree + 1);
        const int ly = l / (degree + 1);
        return (firstIndex[0] + lx) + nx * (firstIndex[1] + ly);
    }
    double derivative(int l, int dx, int dy) const
    {
        return ux.d[dx][l % (degree + 1)] * uy.d[dy][l / (degree + 1)];
    }
    double value(int l) const { return derivative(l, 0, 0); }
    std::array<double, 2> gradient(int l) const { return {derivative(l, 1, 0), derivative(l, 0, 1)}; }
};

/// Evaluation on a prescribed cell (ex, ey); the point may lie on the cell boundary.
inline LocalBasisEval eval_tensor_on_cell(
    const TensorBSplineBasis& basis, std::array<int, 2> cell, const Point& x, int maxDeriv)
{
    LocalBasisEval out;
    out.degree = basis.degree();
    out.maxDeriv = maxDeriv;
    out.nx = basis.num_functions(0);
    out.ux = eval_univariate_on_element(basis.knots(0), cell[0], x[0], maxDeriv);
    out.uy = eval_univariate_on_element(basis.knots(1), cell[1], x[1], maxDeriv);
    out.firstIndex = {out.ux.first, out.uy.first};
    return out;
}

inline std::array<int, 2> cell_of(const TensorBSplineBasis& basis, const Point& x)
{
    if (!basis.contains(x)) {
        throw InvalidInput("point outside the ambient domain");
    }
    return {basis.knots(0).element_of(x[0]), basis.knots(1).element_of(x[1])};
}

inline LocalBasisEval eval_tensor(const TensorBSplineBasis& basis, const Point& x, int maxDeriv)
{
    return eval_tensor_on_cell(basis, cell_of(basis, x), x, maxDeriv);
}

/// Jump of the order-th normal derivative across the grid line with normal
/// `axis` at interior breakpoint `breakIndex`, evaluated at transverse
/// coordinate `along`. The "+" side is the cell with the smaller index (left
/// or below), the normal points from "+" to "-", so the jump is
/// d^order/dx_axis^order (left) minus the same derivative (right).
struct NormalJump {
    std::vector<int> indices;
    std::vector<double> values;
};

inline NormalJump normal_jump(const TensorBSplineBasis& basis, int axis, int breakIndex, double along, int order)
{
    const int other = 1 - axis;
    const UnivariateJump jump = univariate_jump(basis.knots(axis), breakIndex, order);
    const UnivariateEval trace = eval_univariate(basis.knots(other), along, 0);
    NormalJump out;
    for (int t = 0; t <= basis.degree(); ++t) {
        for (int a = 0; a < jump.count; ++a) {
            std::array<int, 2> mi{};
            mi[axis] = jump.first + a;
            mi[other] = trace.first + t;
            out.indices.push_back(basis.index(mi[0], mi[1]));
            out.values.push_back(jump.values[a] * trace.d[0][t]);
        }
    }
    return out;
}

/// Jump of the k-th normal derivative, the quantity penalized on the skeleton.
inline NormalJump kth_normal_jump(const TensorBSplineBasis& basis, int axis, int breakIndex, double along)
{
    return normal_jump(basis, axis, breakIndex, along, basis.degree());
}

} // namespace immersoflow
