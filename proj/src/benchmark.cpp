#include "atomdet/benchmark.hpp"

#include "atomdet/error.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <sstream>

namespace atomdet {

namespace {

struct Moments {
    double mean = 0.0;
    double var = 0.0;
    std::size_t n = 0;
};

// Welford accumulation keeps the variance stable for large offsets.
class Accumulator {
public:
    void add(double v) {
        ++n_;
        const double d = v - mean_;
        mean_ += d / static_cast<double>(n_);
        m2_ += d * (v - mean_);
    }
    Moments moments() const {
        return {mean_, n_ > 1 ? m2_ / static_cast<double>(n_ - 1) : 0.0, n_};
    }

private:
    std::size_t n_ = 0;
    double mean_ = 0.0;
    double m2_ = 0.0;
};

GaussianPairFit finish_fit(const Accumulator& empty, const Accumulator& occupied) {
    const Moments e = empty.moments();
    const Moments o = occupied.moments();
    if (e.n < 2 || o.n < 2) {
        throw InvalidArgument("fit_class_distributions needs at least two samples per class (got " +
                              std::to_string(e.n) + " empty, " + std::to_string(o.n) + " occupied)");
    }
    return {e.mean, e.var, o.mean, o.var, e.n, o.n};
}

void check_pair(std::size_t estimates, std::size_t truth) {
    if (estimates != truth) {
        throw InvalidArgument("estimate and ground-truth site counts differ");
    }
}

std::string slug(const std::string& text) {
    std::string out;
    for (char c : text) {
        out += (std::isalnum(static_cast<unsigned char>(c)) || c == '.' || c == '-') ? c : '_';
    }
    return out;
}

std::ofstream open_out(const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) {
        throw IoError("cannot write " + path.string());
    }
    out << std::setprecision(10);
    return out;
}

} // namespace

GaussianPairFit fit_class_distributions(std::span<const EstimateSet> estimates,
                                        std::span<const Occupancy> truth) {
    if (estimates.size() != truth.size()) {
        throw InvalidArgument("estimate and ground-truth frame counts differ");
    }
    Accumulator empty, occupied;
    for (std::size_t f = 0; f < estimates.size(); ++f) {
        check_pair(estimates[f].estimates.size(), truth[f].size());
        for (std::size_t i = 0; i < truth[f].size(); ++i) {
            (truth[f][i] ? occupied : empty).add(estimates[f].estimates[i]);
        }
    }
    return finish_fit(empty, occupied);
}

GaussianPairFit fit_class_distributions(std::span<const double> estimates, const Occupancy& truth) {
    check_pair(estimates.size(), truth.size());
    Accumulator empty, occupied;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        (truth[i] ? occupied : empty).add(estimates[i]);
    }
    return finish_fit(empty, occupied);
}

double photoelectrons_per_atom(const GaussianPairFit& fit, double gain) {
    return (fit.mean_occupied - fit.mean_empty) * gain;
}

ThresholdChoice optimal_threshold(const GaussianPairFit& fit, double fill) {
    return gaussian_crossing(fit.mean_empty, fit.var_empty, fit.mean_occupied, fit.var_occupied, fill);
}

ErrorRates classify_and_score(std::span<const double> estimates, const Occupancy& truth,
                              double threshold) {
    check_pair(estimates.size(), truth.size());
    std::size_t fp = 0, fn = 0;
    ErrorRates r;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        if (truth[i]) {
            ++r.occupied;
            fn += estimates[i] <= threshold ? 1 : 0;
        } else {
            ++r.empty;
            fp += estimates[i] > threshold ? 1 : 0;
        }
    }
    r.fp = r.empty > 0 ? static_cast<double>(fp) / static_cast<double>(r.empty) : 0.0;
    r.fn = r.occupied > 0 ? static_cast<double>(fn) / static_cast<double>(r.occupied) : 0.0;
    return r;
}

ErrorRates classify_and_score(std::span<const EstimateSet> estimates,
                              std::span<const Occupancy> truth, double threshold) {
    if (estimates.size() != truth.size()) {
        throw InvalidArgument("estimate and ground-truth frame counts differ");
    }
    std::vector<double> flat;
    Occupancy labels;
    for (std::size_t f = 0; f < estimates.size(); ++f) {
        check_pair(estimates[f].estimates.size(), truth[f].size());
        flat.insert(flat.end(), estimates[f].estimates.begin(), estimates[f].estimates.end());
        labels.insert(labels.end(), truth[f].begin(), truth[f].end());
    }
    return classify_and_score(flat, labels, threshold);
}

TimingStats time_detector(const std::function<void()>& fn, int repetitions) {
    if (repetitions < 1) {
        throw InvalidArgument("time_detector needs at least one repetition");
    }
    fn();
    TimingStats stats;
    stats.repetitions = repetitions;
    stats.min_seconds = INFINITY;
    double total = 0.0;
    for (int r = 0; r < repetitions; ++r) {
        const auto t0 = std::chrono::steady_clock::now();
        fn();
        const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        total += s;
        stats.min_seconds = std::min(stats.min_seconds, s);
    }
    stats.mean_seconds = total / repetitions;
    return stats;
}

LineFit fit_line(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size() || x.size() < 2) {
        throw InvalidArgument("fit_line needs at least two matching points");
    }
    const double n = static_cast<double>(x.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
    }
    if (sxx == 0.0) {
        throw InvalidArgument("fit_line needs distinct x values");
    }
    const double slope = sxy / sxx;
    return {slope, my - slope * mx};
}

std::vector<DetectorConfig> detector_sweep(const ToolkitConfig& config,
                                           std::span<const std::string> names) {
    std::vector<std::string> wanted(names.begin(), names.end());
    if (wanted.empty()) {
        wanted = config.benchmark.detectors;
    }
    std::vector<DetectorConfig> out;
    for (const std::string& name : wanted) {
        DetectorConfig base;
        base.algo = algorithm_from_string(name);
        base.gns = config.gns;
        switch (base.algo) {
        case Algorithm::roi:
            for (double r : config.roi.radii) {
                base.radius = r;
                out.push_back(base);
            }
            break;
        case Algorithm::wiener:
            base.read_radius = config.wiener.read_radius;
            for (double b : config.wiener.balances) {
                base.balance = b;
                out.push_back(base);
            }
            break;
        case Algorithm::rl:
            base.read_radius = config.rl.read_radius;
            for (int it : config.rl.iterations) {
                base.iterations = it;
                out.push_back(base);
            }
            break;
        case Algorithm::gns:
            out.push_back(base);
            break;
        }
    }
    return out;
}

std::vector<PointSpreadFunction> dataset_psfs(const DatasetSpec& spec) {
    if (spec.geometry.pixel_aligned()) {
        return {build_psf(spec.psf)};
    }
    const std::size_t n = spec.geometry.site_count();
    return make_scene(spec.geometry, spec.psf, std::vector<double>(n, 0.0), Occupancy(n, false)).psfs;
}

double calibration_scale2(const MetricsRow& row) {
    const double sep = row.mean_occupied - row.mean_empty;
    if (!(sep > 0.0)) {
        return std::numeric_limits<double>::quiet_NaN();
    }
    const double k = row.gamma_true / sep;
    return k * k;
}

void write_metrics_csv(std::span<const MetricsRow> rows, const std::filesystem::path& path) {
    std::ofstream out = open_out(path);
    out << "exposure_s,gamma_true,detector,params,mean_empty,mean_occupied,variance_empty,"
           "variance_occupied,threshold,threshold_fallback,fp_rate,fn_rate,eval_empty,eval_occupied,"
           "failed_frames\n";
    for (const MetricsRow& r : rows) {
        out << r.exposure << ',' << r.gamma_true << ',' << r.detector << ",\"" << r.params << "\","
            << r.mean_empty << ',' << r.mean_occupied << ',' << r.variance_empty << ','
            << r.variance_occupied << ',' << r.threshold << ',' << (r.threshold_fallback ? 1 : 0)
            << ',' << r.fp_rate << ',' << r.fn_rate << ',' << r.eval_empty << ',' << r.eval_occupied
            << ',' << r.failed_frames << '\n';
    }
}

void write_estimates_csv(std::span<const EstimateRecord> rows, const std::filesystem::path& path) {
    std::ofstream out = open_out(path);
    out << "frame_id,site,estimate_electrons,truth_occupancy,wall_ms,near_border\n";
    for (const EstimateRecord& r : rows) {
        out << r.frame_id << ',' << r.site << ',' << r.estimate << ',' << (r.truth ? 1 : 0) << ','
            << r.wall_ms << ',' << (r.near_border ? 1 : 0) << '\n';
    }
}

namespace {

void write_curve(const std::filesystem::path& path, const std::string& label,
                 std::span<const double> x, std::span<const double> y) {
    std::ofstream out = open_out(path);
    out << "# " << label << "\n";
    for (std::size_t i = 0; i < x.size(); ++i) {
        out << x[i] << ' ' << y[i] << '\n';
    }
}

const BoundRow* find_bound(std::span<const BoundRow> bounds, double gamma, const std::string& scenario) {
    for (const BoundRow& b : bounds) {
        if (b.scenario == scenario && std::abs(b.gamma - gamma) <= 1e-9 * std::max(1.0, gamma)) {
            return &b;
        }
    }
    return nullptr;
}

void write_report(const std::filesystem::path& path, const ToolkitConfig& config,
                  const BenchmarkResult& result) {
    std::ofstream out = open_out(path);
    out << std::setprecision(4);
    const DatasetSpec& d = config.dataset;
    out << "# Detection benchmark: " << d.name << "\n\n";
    out << "- frame " << d.geometry.image_width() << "x" << d.geometry.image_height() << " px, "
        << d.geometry.rows() << "x" << d.geometry.cols() << " sites, spacing " << d.geometry.spacing()
        << " px\n";
    out << "- " << d.frames_per_exposure << " frames per exposure, fill " << d.fill << ", rate "
        << d.rate << " e-/s, seed " << d.seed << "\n";
    out << "- camera: gain " << d.camera.gain << " e-/count, offset " << d.camera.offset
        << ", readout sigma " << d.camera.readout_sigma << " counts, background "
        << d.camera.background << " + " << d.camera.background_rate << " t e-/px\n";
    out << "- thresholds fit on the first " << config.benchmark.calibration_fraction * 100
        << "% of frames per exposure and scored on the rest\n\n";

    if (!result.metrics.empty()) {
        double top = 0.0;
        for (const MetricsRow& r : result.metrics) {
            top = std::max(top, r.gamma_true);
        }
        out << "## Error rates at gamma = " << top << " e-\n\n";
        out << "| detector | params | FP | FN | FP+FN | var empty | var occupied |\n";
        out << "|---|---|---|---|---|---|---|\n";
        for (const MetricsRow& r : result.metrics) {
            if (r.gamma_true == top) {
                out << "| " << r.detector << " | " << r.params << " | " << r.fp_rate << " | "
                    << r.fn_rate << " | " << r.fp_rate + r.fn_rate << " | " << r.variance_empty
                    << " | " << r.variance_occupied << " |\n";
            }
        }
        out << "\n";
    }

    if (!result.rates.empty()) {
        out << "## Recovered photoelectron rate\n\n";
        out << "Slope of (occupied mean - empty mean) against exposure; configured rate " << d.rate
            << " e-/s.\n\n| detector | params | slope (e-/s) | relative error |\n|---|---|---|---|\n";
        for (const RateRow& r : result.rates) {
            out << "| " << r.detector << " | " << r.params << " | " << r.slope << " | "
                << (r.slope - d.rate) / d.rate << " |\n";
        }
        out << "\n";
    }

    if (!result.timing.empty()) {
        out << "## Run time per frame (single thread)\n\n| detector | params | mean ms | min ms |\n"
               "|---|---|---|---|\n";
        for (const TimingRow& t : result.timing) {
            out << "| " << t.detector << " | " << t.params << " | " << t.mean_ms << " | " << t.min_ms
                << " |\n";
        }
        out << "\n";
    }

    if (!result.bounds.empty()) {
        out << "## Variance against the Cramer-Rao bound (some-neighbors scenarios)\n\n"
               "Variances are rescaled to electrons by gamma / (occupied mean - empty mean) so\n"
               "biased detectors are compared on the same footing.\n\n"
               "| detector | params | gamma | var empty / CRB | var occupied / CRB |\n|---|---|---|---|---|\n";
        for (const MetricsRow& r : result.metrics) {
            const BoundRow* be = find_bound(result.bounds, r.gamma_true, "empty-sn");
            const BoundRow* bo = find_bound(result.bounds, r.gamma_true, "occ-sn");
            if (be && bo) {
                const double s2 = calibration_scale2(r);
                out << "| " << r.detector << " | " << r.params << " | " << r.gamma_true << " | "
                    << s2 * r.variance_empty / be->variance_floor << " | "
                    << s2 * r.variance_occupied / bo->variance_floor << " |\n";
            }
        }
        out << "\n";

        std::vector<double> g, thr, var;
        for (const BoundRow& b : result.bounds) {
            if (b.scenario == "occ-sn") {
                g.push_back(b.gamma);
                thr.push_back(b.threshold);
                var.push_back(b.variance_floor);
            }
        }
        if (g.size() >= 4) {
            out << "## Power-law fits of the some-neighbors bound curves\n\n";
            auto report_fit = [&](const char* name, const std::vector<double>& v) {
                try {
                    const PowerLawFit f = power_law_fit(g, v);
                    out << "- " << name << ": " << f.a << " x^" << f.b << " + " << f.c << "\n";
                } catch (const PowerLawFitError& e) {
                    out << "- " << name << ": " << e.what() << "\n";
                }
            };
            report_fit("threshold", thr);
            report_fit("occupied variance", var);
            out << "\n";
        }
    }
}

} // namespace

BenchmarkResult run_benchmark(const ToolkitConfig& config, const Dataset& dataset,
                              const std::filesystem::path& out_dir, const BenchmarkOptions& options) {
    const DatasetSpec& spec = dataset.spec;
    const std::size_t per = spec.frames_per_exposure;
    if (dataset.frames.empty() || per == 0 ||
        dataset.frames.size() != spec.exposures.size() * per ||
        dataset.ground_truth.size() != dataset.frames.size()) {
        throw InvalidArgument("dataset is empty or inconsistent with its spec; regenerate it with `simulate`");
    }
    const double frac = config.benchmark.calibration_fraction;
    if (!(frac > 0.0 && frac < 1.0)) {
        throw InvalidArgument("calibration_fraction must lie in (0, 1)");
    }
    auto note = [&](const std::string& msg) {
        if (options.progress) {
            options.progress(msg);
        }
    };

    const std::vector<DetectorConfig> detectors = detector_sweep(config, options.detectors);
    DetectorContext ctx;
    ctx.geometry = spec.geometry;
    ctx.psfs = dataset_psfs(spec);
    ctx.camera = spec.camera;

    // Calibration frames come first within each exposure; a single frame is used for both.
    std::size_t n_cal = static_cast<std::size_t>(std::lround(frac * static_cast<double>(per)));
    n_cal = std::clamp<std::size_t>(n_cal, 1, per > 1 ? per - 1 : 1);

    BenchmarkResult result;
    std::vector<EstimateRecord> records;
    std::map<std::size_t, std::vector<double>> pe_by_detector;  // detector index -> per exposure
    for (std::size_t di = 0; di < detectors.size(); ++di) {
        const DetectorConfig& det = detectors[di];
        note("detector " + det.label());
        records.clear();
        for (std::size_t e = 0; e < spec.exposures.size(); ++e) {
            ctx.exposure = spec.exposures[e];
            std::vector<EstimateSet> sets;
            std::vector<Occupancy> truth;
            std::vector<bool> calibration;
            std::size_t failed = 0;
            double wall = 0.0;
            for (std::size_t f = 0; f < per; ++f) {
                const std::size_t k = e * per + f;
                try {
                    EstimateSet est = run_detector(det, dataset.frames[k].pixels.cast<double>(), ctx);
                    wall += est.wall_seconds;
                    if (options.write_estimates) {
                        for (std::size_t i = 0; i < est.estimates.size(); ++i) {
                            records.push_back({frame_id(e, f), i, est.estimates[i],
                                               static_cast<bool>(dataset.ground_truth[k][i]),
                                               est.wall_seconds * 1e3, est.near_border[i]});
                        }
                    }
                    sets.push_back(std::move(est));
                    truth.push_back(dataset.ground_truth[k]);
                    calibration.push_back(f < n_cal || per == 1);
                } catch (const Error& err) {
                    ++failed;
                    note("  frame " + frame_id(e, f) + " skipped: " + err.what());
                }
            }

            MetricsRow row;
            row.exposure = spec.exposures[e];
            row.gamma_true = spec.rate * spec.exposures[e];
            row.detector = to_string(det.algo);
            row.params = det.params();
            row.failed_frames = failed;
            row.mean_wall_ms = sets.empty() ? 0.0 : wall * 1e3 / static_cast<double>(sets.size());

            std::vector<EstimateSet> cal_sets, eval_sets;
            std::vector<Occupancy> cal_truth, eval_truth;
            for (std::size_t s = 0; s < sets.size(); ++s) {
                (calibration[s] ? cal_sets : eval_sets).push_back(sets[s]);
                (calibration[s] ? cal_truth : eval_truth).push_back(truth[s]);
            }
            if (eval_sets.empty()) {
                eval_sets = cal_sets;
                eval_truth = cal_truth;
            }
            const GaussianPairFit all = fit_class_distributions(sets, truth);
            row.mean_empty = all.mean_empty;
            row.mean_occupied = all.mean_occupied;
            row.variance_empty = all.var_empty;
            row.variance_occupied = all.var_occupied;
            const ThresholdChoice t = optimal_threshold(fit_class_distributions(cal_sets, cal_truth), spec.fill);
            row.threshold = t.threshold;
            row.threshold_fallback = t.fallback;
            const ErrorRates rates = classify_and_score(eval_sets, eval_truth, t.threshold);
            row.fp_rate = rates.fp;
            row.fn_rate = rates.fn;
            row.eval_empty = rates.empty;
            row.eval_occupied = rates.occupied;
            pe_by_detector[di].push_back(photoelectrons_per_atom(all));
            result.metrics.push_back(row);
        }
        if (options.write_estimates && !out_dir.empty()) {
            std::filesystem::create_directories(out_dir);
            write_estimates_csv(records, out_dir / ("estimates_" + slug(det.label()) + ".csv"));
        }
        if (spec.exposures.size() >= 2) {
            const LineFit line = fit_line(spec.exposures, pe_by_detector[di]);
            result.rates.push_back({to_string(det.algo), det.params(), line.slope, line.intercept});
        }

        // Timing on one frame of the longest exposure, single-threaded.
        const std::size_t last = spec.exposures.size() - 1;
        DetectorContext tctx = ctx;
        tctx.exposure = spec.exposures[last];
        DetectorConfig timed = det;
        timed.gns.threads = 1;
        const ImageD frame = dataset.frames[last * per].pixels.cast<double>();
        const TimingStats ts = time_detector([&] { run_detector(timed, frame, tctx); },
                                             std::max(1, config.benchmark.timing_repetitions));
        result.timing.push_back({to_string(det.algo), det.params(), ts.mean_seconds * 1e3,
                                 ts.min_seconds * 1e3, ts.repetitions});
    }

    if (config.benchmark.compute_bounds) {
        note("bounds");
        std::vector<double> gammas;
        for (double t : spec.exposures) {
            if (spec.rate * t > 0.0) {
                gammas.push_back(spec.rate * t);
            }
        }
        const std::vector<std::string> labels = all_scenario_labels();
        result.bounds = bound_sweep(gammas, labels, spec.camera, spec.psf, spec.rate, config.bound);
    }

    if (out_dir.empty()) {
        return result;
    }
    std::filesystem::create_directories(out_dir / "plots");
    write_metrics_csv(result.metrics, out_dir / "metrics.csv");
    write_bounds_csv(result.bounds, out_dir / "bounds.csv");
    {
        std::ofstream out = open_out(out_dir / "timing.csv");
        out << "detector,params,scope,mean_ms,min_ms,repetitions\n";
        for (const TimingRow& t : result.timing) {
            out << t.detector << ",\"" << t.params << "\",single_frame," << t.mean_ms << ','
                << t.min_ms << ',' << t.repetitions << '\n';
        }
        for (const MetricsRow& r : result.metrics) {
            out << r.detector << ",\"" << r.params << "\",exposure=" << r.exposure << ','
                << r.mean_wall_ms << ",," << '\n';
        }
    }
    {
        std::ofstream out = open_out(out_dir / "rates.csv");
        out << "detector,params,slope_e_per_s,intercept_e\n";
        for (const RateRow& r : result.rates) {
            out << r.detector << ",\"" << r.params << "\"," << r.slope << ',' << r.intercept << '\n';
        }
    }

    // Two-column curves: gamma against each metric.
    std::map<std::string, std::vector<const MetricsRow*>> by_label;
    for (const MetricsRow& r : result.metrics) {
        by_label[r.detector + "_" + r.params].push_back(&r);
    }
    for (const auto& [label, rows] : by_label) {
        std::vector<double> g, ve, vo, fp, fn;
        for (const MetricsRow* r : rows) {
            g.push_back(r->gamma_true);
            ve.push_back(r->variance_empty);
            vo.push_back(r->variance_occupied);
            fp.push_back(r->fp_rate);
            fn.push_back(r->fn_rate);
        }
        const std::string base = slug(label);
        write_curve(out_dir / "plots" / (base + "_variance_empty.dat"), label + " gamma variance_empty", g, ve);
        write_curve(out_dir / "plots" / (base + "_variance_occupied.dat"), label + " gamma variance_occupied", g, vo);
        write_curve(out_dir / "plots" / (base + "_fp.dat"), label + " gamma fp_rate", g, fp);
        write_curve(out_dir / "plots" / (base + "_fn.dat"), label + " gamma fn_rate", g, fn);
    }
    std::map<std::string, std::vector<const BoundRow*>> by_scenario;
    for (const BoundRow& b : result.bounds) {
        by_scenario[b.scenario].push_back(&b);
    }
    for (const auto& [scenario, rows] : by_scenario) {
        std::vector<double> g, v, fp, fn, t;
        for (const BoundRow* b : rows) {
            g.push_back(b->gamma);
            v.push_back(b->variance_floor);
            fp.push_back(b->fp_floor);
            fn.push_back(b->fn_floor);
            t.push_back(b->threshold);
        }
        write_curve(out_dir / "plots" / ("crb_" + scenario + "_variance.dat"), scenario + " gamma crb_variance", g, v);
        write_curve(out_dir / "plots" / ("crb_" + scenario + "_fp.dat"), scenario + " gamma fp_floor", g, fp);
        write_curve(out_dir / "plots" / ("crb_" + scenario + "_fn.dat"), scenario + " gamma fn_floor", g, fn);
        write_curve(out_dir / "plots" / ("crb_" + scenario + "_threshold.dat"), scenario + " gamma threshold", g, t);
    }
    ToolkitConfig effective = config;
    effective.dataset = spec;
    write_report(out_dir / "report.md", effective, result);
    return result;
}

BenchmarkResult run_benchmark(const ToolkitConfig& config, const std::filesystem::path& out_dir,
                              const BenchmarkOptions& options) {
    return run_benchmark(config, generate_dataset(config.dataset), out_dir, options);
}

} // namespace atomdet
