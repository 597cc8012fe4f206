#pragma once

#include "atomdet/config.hpp"
#include "atomdet/cramer_rao.hpp"
#include "atomdet/detectors.hpp"
#include "atomdet/gaussian.hpp"
#include "atomdet/simulator.hpp"

#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace atomdet {

struct GaussianPairFit {
    double mean_empty = 0.0;
    double var_empty = 0.0;
    double mean_occupied = 0.0;
    double var_occupied = 0.0;
    std::size_t count_empty = 0;
    std::size_t count_occupied = 0;
};

/// Sample mean and (n - 1) variance of each class. Throws InvalidArgument when a
/// class has fewer than two samples.
GaussianPairFit fit_class_distributions(std::span<const EstimateSet> estimates,
                                        std::span<const Occupancy> truth);
GaussianPairFit fit_class_distributions(std::span<const double> estimates, const Occupancy& truth);

/// (occupied mean - empty mean) * gain. Estimates already in electrons use gain 1.
double photoelectrons_per_atom(const GaussianPairFit& fit, double gain = 1.0);

/// Density crossing of the two fitted classes weighted by the fill fraction.
ThresholdChoice optimal_threshold(const GaussianPairFit& fit, double fill = 0.5);

struct ErrorRates {
    double fp = 0.0;  // P(estimate > threshold | empty)
    double fn = 0.0;  // P(estimate <= threshold | occupied)
    std::size_t empty = 0;
    std::size_t occupied = 0;
};

ErrorRates classify_and_score(std::span<const double> estimates, const Occupancy& truth,
                              double threshold);
ErrorRates classify_and_score(std::span<const EstimateSet> estimates,
                              std::span<const Occupancy> truth, double threshold);

struct TimingStats {
    double mean_seconds = 0.0;
    double min_seconds = 0.0;
    int repetitions = 0;
};

/// Runs `fn` once unmeasured, then `repetitions` measured times.
TimingStats time_detector(const std::function<void()>& fn, int repetitions);

/// Ordinary least squares y = slope * x + intercept.
struct LineFit {
    double slope = 0.0;
    double intercept = 0.0;
};
LineFit fit_line(std::span<const double> x, std::span<const double> y);

struct MetricsRow {
    double exposure = 0.0;      // seconds
    double gamma_true = 0.0;    // rate * exposure, electrons
    std::string detector;
    std::string params;
    double mean_empty = 0.0;
    double mean_occupied = 0.0;
    double variance_empty = 0.0;
    double variance_occupied = 0.0;
    double threshold = 0.0;
    bool threshold_fallback = false;
    double fp_rate = 0.0;
    double fn_rate = 0.0;
    std::size_t eval_empty = 0;     // held-out samples behind the rates
    std::size_t eval_occupied = 0;
    std::size_t failed_frames = 0;
    double mean_wall_ms = 0.0;      // written to timing.csv, not metrics.csv
};

struct TimingRow {
    std::string detector;
    std::string params;
    double mean_ms = 0.0;
    double min_ms = 0.0;
    int repetitions = 0;
};

struct RateRow {
    std::string detector;
    std::string params;
    double slope = 0.0;  // electrons per second per atom
    double intercept = 0.0;
};

struct BenchmarkOptions {
    std::vector<std::string> detectors;  // overrides config.benchmark.detectors when non-empty
    bool write_estimates = false;        // estimates_<detector>.csv per detector
    std::function<void(const std::string&)> progress;
};

struct BenchmarkResult {
    std::vector<MetricsRow> metrics;
    std::vector<BoundRow> bounds;
    std::vector<TimingRow> timing;
    std::vector<RateRow> rates;
};

/// Every detector configuration the config asks for (parameter sweeps expanded),
/// filtered by the detector names in `names` (all when empty).
std::vector<DetectorConfig> detector_sweep(const ToolkitConfig& config,
                                           std::span<const std::string> names = {});

/// PSF kernels the detectors see for a dataset: one shared kernel on pixel-aligned
/// lattices, one per site otherwise.
std::vector<PointSpreadFunction> dataset_psfs(const DatasetSpec& spec);

/// Scores every detector on every exposure of `dataset`, computes the bound curves
/// on the same gamma grid and writes metrics.csv, timing.csv, rates.csv, bounds.csv,
/// report.md and plots/*.dat into `out_dir` (created if missing; empty path writes nothing).
BenchmarkResult run_benchmark(const ToolkitConfig& config, const Dataset& dataset,
                              const std::filesystem::path& out_dir,
                              const BenchmarkOptions& options = {});

/// Generates the dataset from the config first.
BenchmarkResult run_benchmark(const ToolkitConfig& config, const std::filesystem::path& out_dir,
                              const BenchmarkOptions& options = {});

/// (gamma / (occupied mean - empty mean))^2: multiplies a row's variances into
/// electrons^2. NaN when the classes are not separated.
double calibration_scale2(const MetricsRow& row);

void write_metrics_csv(std::span<const MetricsRow> rows, const std::filesystem::path& path);

/// Rows of the estimates table written by `detect`.
struct EstimateRecord {
    std::string frame_id;
    std::size_t site = 0;
    double estimate = 0.0;
    bool truth = false;
    double wall_ms = 0.0;
    bool near_border = false;
};
void write_estimates_csv(std::span<const EstimateRecord> rows, const std::filesystem::path& path);

} // namespace atomdet
