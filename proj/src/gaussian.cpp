#include "atomdet/gaussian.hpp"

#include "atomdet/error.hpp"

#include <cmath>
#include <numbers>

namespace atomdet {

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

double normal_cdf(double x, double mean, double variance) {
    return normal_cdf((x - mean) / std::sqrt(variance));
}

double normal_sf(double x, double mean, double variance) {
    return normal_cdf((mean - x) / std::sqrt(variance));
}

ThresholdChoice gaussian_crossing(double mean_low, double var_low, double mean_high,
                                  double var_high, double prior_high) {
    if (!(var_low > 0.0) || !(var_high > 0.0)) {
        throw InvalidArgument("class variances must be positive");
    }
    if (!(mean_high > mean_low)) {
        return {0.5 * (mean_low + mean_high), true};
    }
    if (prior_high <= 0.0) {
        return {INFINITY, false};
    }
    if (prior_high >= 1.0) {
        return {-INFINITY, false};
    }
    // log[(1-w) N(t; m0, v0)] = log[w N(t; m1, v1)]  <=>  A t^2 + B t + C = 0.
    const double a = 0.5 / var_high - 0.5 / var_low;
    const double b = mean_low / var_low - mean_high / var_high;
    const double c = 0.5 * mean_high * mean_high / var_high - 0.5 * mean_low * mean_low / var_low +
                     0.5 * std::log(var_high / var_low) + std::log((1.0 - prior_high) / prior_high);

    auto inside = [&](double t) { return t > mean_low && t < mean_high; };
    const double scale = std::abs(b) + std::abs(a) * (std::abs(mean_low) + std::abs(mean_high));
    if (std::abs(a) <= 1e-14 * scale) {
        const double t = -c / b;
        if (inside(t)) {
            return {t, false};
        }
        return {0.5 * (mean_low + mean_high), true};
    }
    const double disc = b * b - 4.0 * a * c;
    if (disc < 0.0) {
        return {0.5 * (mean_low + mean_high), true};
    }
    // Numerically stable pair of roots.
    const double qv = -0.5 * (b + std::copysign(std::sqrt(disc), b));
    const double r1 = qv / a;
    const double r2 = qv != 0.0 ? c / qv : r1;
    if (inside(r1)) {
        return {r1, false};
    }
    if (inside(r2)) {
        return {r2, false};
    }
    return {0.5 * (mean_low + mean_high), true};
}

} // namespace atomdet
