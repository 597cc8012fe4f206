#include "atomdet/benchmark.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

using namespace atomdet;

namespace {

struct Samples {
    std::vector<double> values;
    Occupancy truth;
};

Samples two_classes(std::size_t n, double m0, double v0, double m1, double v1, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> e(m0, std::sqrt(v0)), o(m1, std::sqrt(v1));
    Samples s;
    for (std::size_t i = 0; i < n; ++i) {
        s.values.push_back(e(rng));
        s.truth.push_back(false);
        s.values.push_back(o(rng));
        s.truth.push_back(true);
    }
    return s;
}

ToolkitConfig tiny_config() {
    ToolkitConfig c = preset_config("desk");
    c.dataset.geometry = LatticeGeometry::centered(3, 3, 20.0, 96, 96);
    c.dataset.exposures = {0.01, 0.03, 0.05};
    c.dataset.frames_per_exposure = 6;
    c.bound.psf_window = 21;
    c.gns.psf_window = 21;
    c.benchmark.timing_repetitions = 1;
    return c;
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

} // namespace

TEST(FitClasses, RecoversMoments) {
    const Samples s = two_classes(20000, 0.0, 1.0, 10.0, 4.0, 1);
    const GaussianPairFit f = fit_class_distributions(s.values, s.truth);
    EXPECT_EQ(f.count_empty, 20000u);
    EXPECT_EQ(f.count_occupied, 20000u);
    EXPECT_NEAR(f.mean_empty, 0.0, 0.05);
    EXPECT_NEAR(f.var_empty, 1.0, 0.05);
    EXPECT_NEAR(f.mean_occupied, 10.0, 0.05);
    EXPECT_NEAR(f.var_occupied, 4.0, 0.15);
    EXPECT_NEAR(photoelectrons_per_atom(f), 10.0, 0.1);
    EXPECT_NEAR(photoelectrons_per_atom(f, 0.5), 5.0, 0.05);
}

TEST(FitClasses, UnbiasedVariance) {
    const std::vector<double> v{1.0, 2.0, 10.0, 14.0};
    const Occupancy t{false, false, true, true};
    const GaussianPairFit f = fit_class_distributions(v, t);
    EXPECT_DOUBLE_EQ(f.var_empty, 0.5);
    EXPECT_DOUBLE_EQ(f.var_occupied, 8.0);
}

TEST(FitClasses, NeedsTwoPerClass) {
    const std::vector<double> v{1.0, 2.0, 3.0};
    EXPECT_THROW(fit_class_distributions(v, Occupancy{false, false, true}), InvalidArgument);
    EXPECT_THROW(fit_class_distributions(v, Occupancy{false, false, false}), InvalidArgument);
    EXPECT_THROW(fit_class_distributions(v, Occupancy{false, true}), InvalidArgument);
}

TEST(Threshold, EqualVariancesMidpoint) {
    GaussianPairFit f{2.0, 9.0, 40.0, 9.0, 10, 10};
    const ThresholdChoice t = optimal_threshold(f);
    EXPECT_NEAR(t.threshold, 21.0, 1e-12);
    EXPECT_FALSE(t.fallback);
}

TEST(Threshold, WideOccupiedMovesDown) {
    GaussianPairFit f{0.0, 20.0, 60.0, 120.0, 10, 10};
    EXPECT_LT(optimal_threshold(f).threshold, 30.0);
    EXPECT_GT(optimal_threshold(f).threshold, 0.0);
}

TEST(Threshold, FillShiftsTowardEmptyClass) {
    GaussianPairFit f{0.0, 20.0, 60.0, 40.0, 10, 10};
    const double half = optimal_threshold(f, 0.5).threshold;
    const double mostly = optimal_threshold(f, 0.95).threshold;
    const double sparse = optimal_threshold(f, 0.05).threshold;
    EXPECT_LT(mostly, half);
    EXPECT_GT(sparse, half);
    EXPECT_LT(optimal_threshold(f, 0.99).threshold, mostly);
}

TEST(Threshold, IdenticalClassesFallBack) {
    GaussianPairFit f{5.0, 4.0, 5.0, 4.0, 10, 10};
    const ThresholdChoice t = optimal_threshold(f);
    EXPECT_TRUE(t.fallback);
    EXPECT_DOUBLE_EQ(t.threshold, 5.0);
}

TEST(Threshold, MinimizesModelError) {
    GaussianPairFit f{0.0, 30.0, 50.0, 75.0, 10, 10};
    auto total = [&](double t) {
        return 0.5 * normal_sf(t, f.mean_empty, f.var_empty) + 0.5 * normal_cdf(t, f.mean_occupied, f.var_occupied);
    };
    const double t = optimal_threshold(f).threshold;
    for (double d : {-1.0, -0.1, 0.1, 1.0}) {
        EXPECT_LT(total(t), total(t + d));
    }
}

TEST(Threshold, PerturbationDoesNotHelpBeyondResolution) {
    for (std::uint64_t seed : {11u, 12u, 13u}) {
        const double gamma = 50.0;
        const Samples s = two_classes(4000, 0.0, 30.0, gamma, 75.0, seed);
        const GaussianPairFit f = fit_class_distributions(s.values, s.truth);
        const double t = optimal_threshold(f).threshold;
        auto error = [&](double th) {
            const ErrorRates r = classify_and_score(s.values, s.truth, th);
            return 0.5 * r.fp + 0.5 * r.fn;
        };
        const double resolution = 1.0 / 4000.0;
        for (double d : {-0.01 * gamma, 0.01 * gamma}) {
            EXPECT_GE(error(t + d), error(t) - resolution) << seed << " " << d;
        }
    }
}

TEST(Score, ExtremesAndResolution) {
    const Samples s = two_classes(500, 0.0, 1.0, 5.0, 1.0, 2);
    const ErrorRates all_bright = classify_and_score(s.values, s.truth, -INFINITY);
    EXPECT_DOUBLE_EQ(all_bright.fp, 1.0);
    EXPECT_DOUBLE_EQ(all_bright.fn, 0.0);
    const ErrorRates all_dark = classify_and_score(s.values, s.truth, INFINITY);
    EXPECT_DOUBLE_EQ(all_dark.fp, 0.0);
    EXPECT_DOUBLE_EQ(all_dark.fn, 1.0);
    const ErrorRates mid = classify_and_score(s.values, s.truth, 2.5);
    EXPECT_EQ(mid.empty, 500u);
    const double fp_count = mid.fp * mid.empty;
    const double fn_count = mid.fn * mid.occupied;
    EXPECT_NEAR(fp_count, std::round(fp_count), 1e-9);
    EXPECT_NEAR(fn_count, std::round(fn_count), 1e-9);
    EXPECT_GT(mid.fp, 0.0);
    EXPECT_LT(mid.fp, 0.05);
}

TEST(Score, IndistinguishableClassesSumToOne) {
    const Samples s = two_classes(20000, 3.0, 10.0, 3.0, 10.0, 3);
    const GaussianPairFit f = fit_class_distributions(s.values, s.truth);
    const ErrorRates r = classify_and_score(s.values, s.truth, optimal_threshold(f).threshold);
    EXPECT_NEAR(r.fp + r.fn, 1.0, 0.03);
}

TEST(Timing, CountsRepetitions) {
    int calls = 0;
    const TimingStats t = time_detector([&] { ++calls; }, 4);
    EXPECT_EQ(calls, 5);
    EXPECT_EQ(t.repetitions, 4);
    EXPECT_GE(t.mean_seconds, t.min_seconds);
    EXPECT_GE(t.min_seconds, 0.0);
    const TimingStats one = time_detector([] {}, 1);
    EXPECT_DOUBLE_EQ(one.mean_seconds, one.min_seconds);
    EXPECT_THROW(time_detector([] {}, 0), InvalidArgument);
}

TEST(Timing, RichardsonLucyScalesWithIterations) {
    CameraModel c;
    ImageD frame(128, 128, c.offset + 3.0);
    const PointSpreadFunction psf = build_airy_psf(41, 5.0);
    auto run = [&](int iters) {
        return time_detector([&] { richardson_lucy(frame, psf, iters, c); }, 3).min_seconds;
    };
    const double few = run(4);
    const double many = run(16);
    EXPECT_GT(many / few, 2.0);
    EXPECT_LT(many / few, 8.0);
}

TEST(FitLine, ExactLine) {
    const std::vector<double> x{0.01, 0.02, 0.04, 0.08}, y{28.81, 57.62, 115.24, 230.48};
    const LineFit f = fit_line(x, y);
    EXPECT_NEAR(f.slope, 2881.0, 1e-9);
    EXPECT_NEAR(f.intercept, 0.0, 1e-9);
    EXPECT_THROW(fit_line(std::vector<double>{1.0}, std::vector<double>{1.0}), InvalidArgument);
}

TEST(Sweep, ExpandsParameterLists) {
    ToolkitConfig c = tiny_config();
    c.roi.radii = {2.0, 5.0};
    c.wiener.balances = {3.0, 10.0, 35.0};
    const auto all = detector_sweep(c);
    EXPECT_EQ(all.size(), 2u + 3u + 1u + 1u);
    const std::vector<std::string> names{"wiener"};
    EXPECT_EQ(detector_sweep(c, names).size(), 3u);
}

TEST(Benchmark, DeterministicOutputs) {
    const ToolkitConfig c = tiny_config();
    const auto base = std::filesystem::temp_directory_path() / "atomdet_bench_unit";
    std::filesystem::remove_all(base);
    BenchmarkOptions opt;
    opt.detectors = {"roi", "wiener", "rl", "gns"};
    const BenchmarkResult a = run_benchmark(c, base / "a", opt);
    const BenchmarkResult b = run_benchmark(c, base / "b", opt);
    ASSERT_EQ(a.metrics.size(), 4u * 3u);
    EXPECT_EQ(slurp(base / "a" / "metrics.csv"), slurp(base / "b" / "metrics.csv"));
    EXPECT_EQ(slurp(base / "a" / "bounds.csv"), slurp(base / "b" / "bounds.csv"));
    for (const char* f : {"metrics.csv", "bounds.csv", "timing.csv", "rates.csv", "report.md"}) {
        EXPECT_TRUE(std::filesystem::exists(base / "a" / f)) << f;
    }
    EXPECT_FALSE(std::filesystem::is_empty(base / "a" / "plots"));
    for (const auto& row : a.metrics) {
        EXPECT_GE(row.fp_rate, 0.0);
        EXPECT_LE(row.fn_rate, 1.0);
        EXPECT_GE(row.variance_empty, 0.0);
        EXPECT_NEAR(row.fp_rate * row.eval_empty, std::round(row.fp_rate * row.eval_empty), 1e-9);
        EXPECT_NEAR(row.fn_rate * row.eval_occupied, std::round(row.fn_rate * row.eval_occupied), 1e-9);
        EXPECT_NEAR(row.gamma_true, c.dataset.rate * row.exposure, 1e-9);
    }
    EXPECT_EQ(a.bounds.size(), 3u * 6u);
    EXPECT_EQ(a.rates.size(), 4u);
    std::filesystem::remove_all(base);
}

TEST(Benchmark, EstimatesCsvHeader) {
    const auto path = std::filesystem::temp_directory_path() / "atomdet_estimates_unit.csv";
    const std::vector<EstimateRecord> rows{{"e00_f0000", 3, 12.5, true, 0.7, false}};
    write_estimates_csv(rows, path);
    std::ifstream in(path);
    std::string header, line;
    std::getline(in, header);
    std::getline(in, line);
    EXPECT_EQ(header, "frame_id,site,estimate_electrons,truth_occupancy,wall_ms,near_border");
    EXPECT_EQ(line.substr(0, 16), "e00_f0000,3,12.5");
    std::filesystem::remove(path);
}

TEST(Benchmark, CalibratedVarianceRespectsBound) {
    ToolkitConfig c = preset_config("desk");
    c.benchmark.timing_repetitions = 1;
    BenchmarkOptions opt;
    opt.detectors = {"roi", "wiener", "rl", "gns"};
    const BenchmarkResult r = run_benchmark(c, {}, opt);
    auto floor_of = [&](double g, const char* label) {
        for (const auto& b : r.bounds) {
            if (std::abs(b.gamma - g) < 1e-9 && b.scenario == label) {
                return b.variance_floor;
            }
        }
        ADD_FAILURE() << label;
        return 0.0;
    };
    for (const auto& m : r.metrics) {
        const double s2 = calibration_scale2(m);
        ASSERT_TRUE(std::isfinite(s2)) << m.detector;
        const double se_e = std::sqrt(2.0 / (m.eval_empty - 1.0));
        const double se_o = std::sqrt(2.0 / (m.eval_occupied - 1.0));
        EXPECT_GE(s2 * m.variance_empty / floor_of(m.gamma_true, "empty-sn"), 1.0 - 3.0 * se_e)
            << m.detector << " " << m.gamma_true;
        EXPECT_GE(s2 * m.variance_occupied / floor_of(m.gamma_true, "occ-sn"), 1.0 - 3.0 * se_o)
            << m.detector << " " << m.gamma_true;
    }
}
