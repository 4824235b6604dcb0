#pragma once

#include "bubblecast/diffcore.hpp"
#include "bubblecast/geometry.hpp"

namespace bubblecast::diff {

using geometry::GeometryMode;

/**
 * Poincare-ball operations assembled from the differentiable primitives, with
 * the same formulas and radial clamp as bubblecast::geometry. In euclidean
 * mode they reduce exactly to +, identity maps and the matrix product.
 */
class DiffGeometry {
public:
    explicit DiffGeometry(GeometryMode mode) : mode_(mode) {}

    [[nodiscard]] GeometryMode mode() const noexcept { return mode_; }

    [[nodiscard]] Var add(Var x, Var y) const;
    [[nodiscard]] Var exp(Var x, Var v) const;
    [[nodiscard]] Var log(Var x, Var y) const;
    [[nodiscard]] Var exp0(Var v) const;
    [[nodiscard]] Var log0(Var y) const;
    [[nodiscard]] Var matmul(Var w, Var x) const;
    /// diag(d) (x) x = exp_o(d * log_o(x)) for a vector d.
    [[nodiscard]] Var diag_matmul(Var d, Var x) const;
    /// psi (x) with psi = tanh.
    [[nodiscard]] Var tanh(Var x) const;
    [[nodiscard]] Var negate(Var x) const { return neg(x); }

private:
    [[nodiscard]] Var project(Var x) const;

    GeometryMode mode_;
};

}  // namespace bubblecast::diff
