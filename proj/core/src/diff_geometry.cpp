#include "bubblecast/diff_geometry.hpp"

namespace bubblecast::diff {

namespace {

Var mobius_add_raw(Var x, Var y) {
    Var xy2 = scale(dot(x, y), 2.0);
    Var x2 = squared_norm(x);
    Var y2 = squared_norm(y);
    Var coef_x = shift(add(xy2, y2), 1.0);
    Var coef_y = shift(neg(x2), 1.0);
    Var den = shift(add(xy2, mul(x2, y2)), 1.0);
    return div_by(add(scale_by(x, coef_x), scale_by(y, coef_y)), den);
}

}  // namespace

Var DiffGeometry::project(Var x) const { return project_to_ball(x, geometry::kMaxBallNorm); }

Var DiffGeometry::add(Var x, Var y) const {
    if (mode_ == GeometryMode::euclidean) return diff::add(x, y);
    return project(mobius_add_raw(x, y));
}

Var DiffGeometry::exp(Var x, Var v) const {
    if (mode_ == GeometryMode::euclidean) return diff::add(x, v);
    Var c = shift(neg(squared_norm(x)), 1.0);
    Var a = div_by(norm(v), c);
    Var w = div_by(scale_by(v, tanh_ratio(a)), c);
    return project(mobius_add_raw(x, w));
}

Var DiffGeometry::log(Var x, Var y) const {
    if (mode_ == GeometryMode::euclidean) return sub(y, x);
    Var c = shift(neg(squared_norm(x)), 1.0);
    Var w = project(mobius_add_raw(neg(x), y));
    return scale_by(w, mul(c, atanh_ratio(norm(w))));
}

Var DiffGeometry::exp0(Var v) const {
    if (mode_ == GeometryMode::euclidean) return v;
    return project(scale_by(v, tanh_ratio(norm(v))));
}

Var DiffGeometry::log0(Var y) const {
    if (mode_ == GeometryMode::euclidean) return y;
    return scale_by(y, atanh_ratio(norm(y)));
}

Var DiffGeometry::matmul(Var w, Var x) const {
    if (mode_ == GeometryMode::euclidean) return matvec(w, x);
    return exp0(matvec(w, log0(x)));
}

Var DiffGeometry::diag_matmul(Var d, Var x) const {
    if (mode_ == GeometryMode::euclidean) return mul(d, x);
    return exp0(mul(d, log0(x)));
}

Var DiffGeometry::tanh(Var x) const {
    if (mode_ == GeometryMode::euclidean) return diff::tanh(x);
    return exp0(diff::tanh(log0(x)));
}

}  // namespace bubblecast::diff
