#pragma once

#include <algorithm>
#include <cmath>

namespace bubblecast::scalar {

/// Largest magnitude fed to atanh on gradient-carrying paths.
inline constexpr double kAtanhClamp = 1.0 - 1e-7;

// Below this magnitude the ratios switch to their Taylor series.
inline constexpr double kSeriesCutoff = 1e-2;

/// tanh(s) / s, continuous at 0.
inline double tanh_ratio(double s) {
    if (std::abs(s) < kSeriesCutoff) {
        const double s2 = s * s;
        return 1.0 - s2 / 3.0 + 2.0 * s2 * s2 / 15.0 - 17.0 * s2 * s2 * s2 / 315.0;
    }
    return std::tanh(s) / s;
}

inline double tanh_ratio_derivative(double s) {
    if (std::abs(s) < kSeriesCutoff) {
        const double s2 = s * s;
        return -2.0 * s / 3.0 + 8.0 * s * s2 / 15.0 - 102.0 * s * s2 * s2 / 315.0;
    }
    const double t = std::tanh(s);
    return (s * (1.0 - t * t) - t) / (s * s);
}

/// atanh(min(s, kAtanhClamp)) / s for s >= 0, continuous at 0.
inline double atanh_ratio(double s) {
    if (s < kSeriesCutoff) {
        const double s2 = s * s;
        return 1.0 + s2 / 3.0 + s2 * s2 / 5.0 + s2 * s2 * s2 / 7.0;
    }
    return std::atanh(std::min(s, kAtanhClamp)) / s;
}

inline double atanh_ratio_derivative(double s) {
    if (s < kSeriesCutoff) {
        const double s2 = s * s;
        return 2.0 * s / 3.0 + 4.0 * s * s2 / 5.0 + 6.0 * s * s2 * s2 / 7.0;
    }
    if (s > kAtanhClamp) return -std::atanh(kAtanhClamp) / (s * s);
    return (s / (1.0 - s * s) - std::atanh(s)) / (s * s);
}

inline double sigmoid(double x) {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

}  // namespace bubblecast::scalar
