#pragma once

#include <Eigen/Dense>

#include <functional>

namespace bubblecast::geometry {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Radial margin kept between every ball-valued result and the unit sphere.
inline constexpr double kBallEpsilon = 1e-5;
inline constexpr double kMaxBallNorm = 1.0 - kBallEpsilon;

enum class GeometryMode { hyperbolic, euclidean };

/**
 * A point of the Poincare ball (curvature -1): finite coordinates with
 * Euclidean norm strictly below one.
 */
class BallPoint {
public:
    /// Throws std::invalid_argument if a coordinate is non-finite or ||coords|| >= 1.
    explicit BallPoint(Vector coords);

    [[nodiscard]] static BallPoint origin(Eigen::Index dim);

    [[nodiscard]] const Vector& coords() const noexcept { return coords_; }
    [[nodiscard]] Eigen::Index dim() const noexcept { return coords_.size(); }
    [[nodiscard]] double norm() const { return coords_.norm(); }

    /// The gyrogroup inverse -x.
    [[nodiscard]] BallPoint operator-() const;

private:
    Vector coords_;
};

/// An element of the tangent space at some point; finite, unbounded.
class TangentVector {
public:
    explicit TangentVector(Vector coords);

    [[nodiscard]] static TangentVector zero(Eigen::Index dim);

    [[nodiscard]] const Vector& coords() const noexcept { return coords_; }
    [[nodiscard]] Eigen::Index dim() const noexcept { return coords_.size(); }
    [[nodiscard]] double norm() const { return coords_.norm(); }

private:
    Vector coords_;
};

/// Radially rescales onto the ball of radius 1 - kBallEpsilon when outside it.
[[nodiscard]] BallPoint project_to_ball(const Vector& x);

/// Mobius addition x (+) y.
[[nodiscard]] BallPoint mobius_add(const BallPoint& x, const BallPoint& y);

/// exp_x(v) = x (+) tanh(||v|| / (1 - ||x||^2)) v / ||v||;  exp_x(0) = x.
[[nodiscard]] BallPoint exp_map(const BallPoint& x, const TangentVector& v);

/// log_x(y) = (1 - ||x||^2) atanh(||-x (+) y||) (-x (+) y) / ||-x (+) y||;  log_x(x) = 0.
[[nodiscard]] TangentVector log_map(const BallPoint& x, const BallPoint& y);

[[nodiscard]] BallPoint exp0(const TangentVector& v);
[[nodiscard]] TangentVector log0(const BallPoint& y);

/// W (x) x = exp_o(W log_o(x)).
[[nodiscard]] BallPoint mobius_matmul(const Matrix& w, const BallPoint& x);

/// exp_o(psi(log_o(x))) with psi applied coordinate-wise.
[[nodiscard]] BallPoint hyperbolic_nonlinearity(const BallPoint& x,
                                                const std::function<double(double)>& psi);
[[nodiscard]] BallPoint hyperbolic_tanh(const BallPoint& x);

/// lambda_x = 2 / (1 - ||x||^2).
[[nodiscard]] double conformal_factor(const BallPoint& x);

/**
 * Mode-switching facade over raw vectors. In hyperbolic mode every call
 * validates its inputs as ball points and dispatches to the functions above;
 * in euclidean mode exp/log are identities, (+) is vector addition and (x) is
 * the ordinary matrix product.
 */
class Geometry {
public:
    explicit Geometry(GeometryMode mode) : mode_(mode) {}

    [[nodiscard]] GeometryMode mode() const noexcept { return mode_; }

    [[nodiscard]] Vector add(const Vector& x, const Vector& y) const;
    [[nodiscard]] Vector exp(const Vector& x, const Vector& v) const;
    [[nodiscard]] Vector log(const Vector& x, const Vector& y) const;
    [[nodiscard]] Vector exp0(const Vector& v) const;
    [[nodiscard]] Vector log0(const Vector& y) const;
    [[nodiscard]] Vector matmul(const Matrix& w, const Vector& x) const;
    [[nodiscard]] Vector tanh(const Vector& x) const;

private:
    GeometryMode mode_;
};

}  // namespace bubblecast::geometry
