#pragma once

#include <algorithm>
#include <array>
#include <map>
#include <mutex>
#include <vector>

#include <boost/math/special_functions/legendre.hpp>

#include "immersoflow/errors.hpp"

namespace immersoflow {

/// Gauss-Legendre rule on [-1, 1].
struct GaussRule {
    std::vector<double> points;
    std::vector<double> weights;
};

inline GaussRule compute_gauss_legendre(int count)
{
    detail::require(count >= 1, "Gauss rule needs at least one point");
    const auto positive = boost::math::legendre_p_zeros<double>(count);
    GaussRule rule;
    auto push = [&](double x) {
        const double dp = boost::math::legendre_p_prime(count, x);
        rule.points.push_back(x);
        rule.weights.push_back(2.0 / ((1.0 - x * x) * dp * dp));
    };
    for (auto it = positive.rbegin(); it != positive.rend(); ++it) {
        if (*it != 0.0) {
            push(-*it);
        }
    }
    for (double x : positive) {
        push(x);
    }
    return rule;
}

/// Cached Gauss-Legendre rule with `count` points.
inline const GaussRule& gauss_legendre(int count)
{
    static std::mutex mutex;
    static std::map<int, GaussRule> cache;
    std::lock_guard lock(mutex);
    auto it = cache.find(count);
    if (it == cache.end()) {
        it = cache.emplace(count, compute_gauss_legendre(count)).first;
    }
    return it->second;
}

/// Symmetric triangle rule obtained by collapsing a tensor Gauss rule (Duffy map),
/// given in barycentric-free form: points in the reference triangle
/// {(s,t) : s,t >= 0, s + t <= 1} with weights summing to 1/2.
struct TriangleRule {
    std::vector<std::array<double, 2>> points;
    std::vector<double> weights;
};

inline TriangleRule compute_triangle_rule(int count)
{
    // Exact for polynomials of degree 2*count - 2 on the triangle.
    const GaussRule& g = gauss_legendre(count);
    TriangleRule rule;
    for (std::size_t i = 0; i < g.points.size(); ++i) {
        const double u = 0.5 * (g.points[i] + 1.0);
        for (std::size_t j = 0; j < g.points.size(); ++j) {
            const double v = 0.5 * (g.points[j] + 1.0);
            rule.points.push_back({u, (1.0 - u) * v});
            rule.weights.push_back(0.25 * g.weights[i] * g.weights[j] * (1.0 - u));
        }
    }
    return rule;
}

inline const TriangleRule& triangle_rule(int count)
{
    static std::mutex mutex;
    static std::map<int, TriangleRule> cache;
    std::lock_guard lock(mutex);
    auto it = cache.find(count);
    if (it == cache.end()) {
        it = cache.emplace(count, compute_triangle_rule(count)).first;
    }
    return it->second;
}

} // namespace immersoflow
