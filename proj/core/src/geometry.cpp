#include "bubblecast/geometry.hpp"

#include "bubblecast/errors.hpp"
#include "bubblecast/scalar_math.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace bubblecast::geometry {

namespace {

void require_finite(const Vector& v, const char* what) {
    if (!v.allFinite()) throw std::invalid_argument(std::string(what) + ": non-finite coordinate");
}

void require_same_dim(Eigen::Index a, Eigen::Index b, const char* what) {
    if (a != b) {
        throw ShapeError(std::string(what) + ": dimension mismatch (" + std::to_string(a) +
                         " vs " + std::to_string(b) + ")");
    }
}

Vector project(Vector x) {
    const double n = x.norm();
    if (n > kMaxBallNorm) x *= kMaxBallNorm / n;
    return x;
}

// x (+) y on raw coordinates, before projection.
Vector mobius_add_raw(const Vector& x, const Vector& y) {
    const double xy = x.dot(y);
    const double x2 = x.squaredNorm();
    const double y2 = y.squaredNorm();
    const double den = 1.0 + 2.0 * xy + x2 * y2;
    return ((1.0 + 2.0 * xy + y2) * x + (1.0 - x2) * y) / den;
}

}  // namespace

BallPoint::BallPoint(Vector coords) : coords_(std::move(coords)) {
    require_finite(coords_, "BallPoint");
    if (coords_.norm() >= 1.0) throw std::invalid_argument("BallPoint: norm must be < 1");
}

BallPoint BallPoint::origin(Eigen::Index dim) { return BallPoint(Vector::Zero(dim)); }

BallPoint BallPoint::operator-() const { return BallPoint(-coords_); }

TangentVector::TangentVector(Vector coords) : coords_(std::move(coords)) {
    require_finite(coords_, "TangentVector");
}

TangentVector TangentVector::zero(Eigen::Index dim) { return TangentVector(Vector::Zero(dim)); }

BallPoint project_to_ball(const Vector& x) {
    require_finite(x, "project_to_ball");
    return BallPoint(project(x));
}

BallPoint mobius_add(const BallPoint& x, const BallPoint& y) {
    require_same_dim(x.dim(), y.dim(), "mobius_add");
    return BallPoint(project(mobius_add_raw(x.coords(), y.coords())));
}

BallPoint exp_map(const BallPoint& x, const TangentVector& v) {
    require_same_dim(x.dim(), v.dim(), "exp_map");
    const double c = 1.0 - x.coords().squaredNorm();
    const double a = v.norm() / c;
    // tanh(a) v / ||v|| == tanh_ratio(a) v / c, which is x itself at v = 0.
    const Vector w = v.coords() * (scalar::tanh_ratio(a) / c);
    return BallPoint(project(mobius_add_raw(x.coords(), w)));
}

TangentVector log_map(const BallPoint& x, const BallPoint& y) {
    require_same_dim(x.dim(), y.dim(), "log_map");
    const double c = 1.0 - x.coords().squaredNorm();
    const Vector w = project(mobius_add_raw(-x.coords(), y.coords()));
    return TangentVector(w * (c * scalar::atanh_ratio(w.norm())));
}

BallPoint exp0(const TangentVector& v) {
    return BallPoint(project(v.coords() * scalar::tanh_ratio(v.norm())));
}

TangentVector log0(const BallPoint& y) {
    return TangentVector(y.coords() * scalar::atanh_ratio(y.norm()));
}

BallPoint mobius_matmul(const Matrix& w, const BallPoint& x) {
    if (w.cols() != x.dim()) {
        throw ShapeError("mobius_matmul: matrix has " + std::to_string(w.cols()) +
                         " columns, point has dimension " + std::to_string(x.dim()));
    }
    if (!w.allFinite()) throw std::invalid_argument("mobius_matmul: non-finite matrix entry");
    return exp0(TangentVector(w * log0(x).coords()));
}

BallPoint hyperbolic_nonlinearity(const BallPoint& x, const std::function<double(double)>& psi) {
    const Vector t = log0(x).coords().unaryExpr(psi);
    return exp0(TangentVector(t));
}

BallPoint hyperbolic_tanh(const BallPoint& x) {
    return hyperbolic_nonlinearity(x, [](double v) { return std::tanh(v); });
}

double conformal_factor(const BallPoint& x) { return 2.0 / (1.0 - x.coords().squaredNorm()); }

Vector Geometry::add(const Vector& x, const Vector& y) const {
    if (mode_ == GeometryMode::euclidean) {
        require_same_dim(x.size(), y.size(), "add");
        return x + y;
    }
    return mobius_add(BallPoint(x), BallPoint(y)).coords();
}

Vector Geometry::exp(const Vector& x, const Vector& v) const {
    if (mode_ == GeometryMode::euclidean) {
        require_same_dim(x.size(), v.size(), "exp");
        return x + v;
    }
    return exp_map(BallPoint(x), TangentVector(v)).coords();
}

Vector Geometry::log(const Vector& x, const Vector& y) const {
    if (mode_ == GeometryMode::euclidean) {
        require_same_dim(x.size(), y.size(), "log");
        return y - x;
    }
    return log_map(BallPoint(x), BallPoint(y)).coords();
}

Vector Geometry::exp0(const Vector& v) const {
    if (mode_ == GeometryMode::euclidean) return v;
    return geometry::exp0(TangentVector(v)).coords();
}

Vector Geometry::log0(const Vector& y) const {
    if (mode_ == GeometryMode::euclidean) return y;
    return geometry::log0(BallPoint(y)).coords();
}

Vector Geometry::matmul(const Matrix& w, const Vector& x) const {
    if (mode_ == GeometryMode::euclidean) {
        if (w.cols() != x.size()) throw ShapeError("matmul: shape mismatch");
        return w * x;
    }
    return mobius_matmul(w, BallPoint(x)).coords();
}

Vector Geometry::tanh(const Vector& x) const {
    if (mode_ == GeometryMode::euclidean) return x.array().tanh().matrix();
    return hyperbolic_tanh(BallPoint(x)).coords();
}

}  // namespace bubblecast::geometry
