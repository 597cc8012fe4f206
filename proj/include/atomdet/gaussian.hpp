#pragma once

namespace atomdet {

double normal_cdf(double z);
/// P(N(mean, variance) <= x).
double normal_cdf(double x, double mean, double variance);
/// P(N(mean, variance) > x).
double normal_sf(double x, double mean, double variance);

struct ThresholdChoice {
    double threshold = 0.0;
    bool fallback = false;  // no density crossing between the means; midpoint used
};

/// Threshold between two Gaussian classes where (1 - prior_high) * N(mean_low, var_low)
/// and prior_high * N(mean_high, var_high) cross, i.e. the point minimizing the
/// prior-weighted total error. The root inside (mean_low, mean_high) is selected.
ThresholdChoice gaussian_crossing(double mean_low, double var_low, double mean_high,
                                  double var_high, double prior_high = 0.5);

} // namespace atomdet
