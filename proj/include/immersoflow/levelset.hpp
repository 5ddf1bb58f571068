#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <numbers>

#include "immersoflow/splines.hpp"

namespace immersoflow {

/// Identifier of the physical boundary piece an immersed facet approximates.
using BoundaryTag = int;

/// Implicit description of the physical domain: positive inside, zero on the
/// boundary, negative outside.
class LevelSet {
public:
    virtual ~LevelSet() = default;

    virtual double value(const Point& x) const = 0;

    /// Upper bound on |value(x) - value(y)| / |x - y|, or 0 when unknown.
    /// Used only to skip lattice sampling of cells far from the boundary.
    virtual double lipschitz() const { return 0.0; }

    /// Tag of the boundary piece closest to x (x is near the zero set).
    virtual BoundaryTag boundary_tag(const Point&) const { return 0; }
};

using LevelSetPtr = std::shared_ptr<const LevelSet>;

/// {R1 < r < R2, x > 0, y > 0}. Tags: 0 inner arc, 1 outer arc, 2 edge on y = 0, 3 edge on x = 0.
class QuarterAnnulus final : public LevelSet {
public:
    QuarterAnnulus(double innerRadius, double outerRadius)
        : r1_(innerRadius)
        , r2_(outerRadius)
    {
        detail::require(0.0 < r1_ && r1_ < r2_, "quarter annulus needs 0 < R1 < R2");
    }

    double value(const Point& x) const override
    {
        const double r = std::hypot(x[0], x[1]);
        return std::min({r - r1_, r2_ - r, x[0], x[1]});
    }
    double lipschitz() const override { return 1.0; }

    BoundaryTag boundary_tag(const Point& x) const override
    {
        const double r = std::hypot(x[0], x[1]);
        const double d[4] = {std::abs(r - r1_), std::abs(r2_ - r), std::abs(x[1]), std::abs(x[0])};
        return static_cast<BoundaryTag>(std::min_element(d, d + 4) - d);
    }

    double inner_radius() const { return r1_; }
    double outer_radius() const { return r2_; }
    double area() const { return std::numbers::pi * (r2_ * r2_ - r1_ * r1_) / 4.0; }

private:
    double r1_;
    double r2_;
};

/// Everything outside the disk |x - c| <= R. Single tag 0 (the circle).
class DiskComplement final : public LevelSet {
public:
    DiskComplement(Point center, double radius)
        : center_(center)
        , radius_(radius)
    {
        detail::require(radius_ > 0.0, "disk radius must be positive");
    }

    double value(const Point& x) const override { return std::hypot(x[0] - center_[0], x[1] - center_[1]) - radius_; }
    double lipschitz() const override { return 1.0; }

    const Point& center() const { return center_; }
    double radius() const { return radius_; }

private:
    Point center_;
    double radius_;
};

/// The disk |x - c| < R itself. Single tag 0.
class Disk final : public LevelSet {
public:
    Disk(Point center, double radius)
        : center_(center)
        , radius_(radius)
    {
        detail::require(radius_ > 0.0, "disk radius must be positive");
    }

    double value(const Point& x) const override { return radius_ - std::hypot(x[0] - center_[0], x[1] - center_[1]); }
    double lipschitz() const override { return 1.0; }

private:
    Point center_;
    double radius_;
};

/// {x : n . x < offset} for a unit normal n, which is also the outward normal.
class HalfPlane final : public LevelSet {
public:
    HalfPlane(Point normal, double offset)
        : offset_(offset)
    {
        const double len = std::hypot(normal[0], normal[1]);
        detail::require(len > 0.0, "half-plane normal must be nonzero");
        normal_ = {normal[0] / len, normal[1] / len};
        offset_ /= len;
    }

    double value(const Point& x) const override { return offset_ - (normal_[0] * x[0] + normal_[1] * x[1]); }
    double lipschitz() const override { return 1.0; }

private:
    Point normal_{};
    double offset_;
};

/// Rigid translation of another level set: value(x) = inner(x - shift).
class Translated final : public LevelSet {
public:
    Translated(LevelSetPtr inner, Point shift)
        : inner_(std::move(inner))
        , shift_(shift)
    {
        detail::require(inner_ != nullptr, "translated level set needs an inner geometry");
    }

    double value(const Point& x) const override { return inner_->value(shifted(x)); }
    double lipschitz() const override { return inner_->lipschitz(); }
    BoundaryTag boundary_tag(const Point& x) const override { return inner_->boundary_tag(shifted(x)); }

private:
    Point shifted(const Point& x) const { return {x[0] - shift_[0], x[1] - shift_[1]}; }

    LevelSetPtr inner_;
    Point shift_;
};

/// Channel [0, L] x [0, H] with a cylinder removed. The channel walls conform
/// to the ambient grid, so only the cylinder is immersed.
inline LevelSetPtr channel_with_cylinder(Point center, double radius)
{
    return std::make_shared<DiskComplement>(center, radius);
}

} // namespace immersoflow
