// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.

#include "atomdet/benchmark.hpp"
#include "atomdet/config.hpp"
#include "atomdet/cramer_rao.hpp"
#include "atomdet/detectors.hpp"
#include "atomdet/gaussian.hpp"
#include "atomdet/pixel_stats.hpp"
#include "atomdet/simulator.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

using namespace atomdet;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

int failures = 0;

void report(int id, const std::string& name, double limit_s, const std::function<Outcome()>& body) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
        o = body();
    } catch (const std::exception& e) {
        o = {false, std::string("exception: ") + e.what()};
    }
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (limit_s > 0.0 && s > limit_s) {
        o.pass = false;
        o.detail += " [runtime over " + std::to_string(limit_s) + " s]";
    }
    failures += o.pass ? 0 : 1;
    std::printf("criterion %2d: %s  %s (%.1f s) %s\n", id, o.pass ? "PASS" : "FAIL", name.c_str(), s,
                o.detail.c_str());
    std::fflush(stdout);
}

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0) {
    char buf[256];
    std::snprintf(buf, sizeof buf, f, a, b, c);
    return buf;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

CameraModel pure_camera(double gain, double sigma) {
    CameraModel c;
    c.gain = gain;
    c.readout_sigma = sigma;
    c.background = 0.0;
    c.background_rate = 0.0;
    return c;
}

// 1 ---------------------------------------------------------------------------

Outcome poisson_oracle() {
    CameraModel c = pure_camera(1.0, 0.0);
    const LatticeGeometry g(1, 1, 1.0, 2.0, 2.0, 5, 5);
    double worst = 0.0;
    for (double gamma : {10.0, 100.0, 1000.0}) {
        const Scene scene = make_scene(g, build_gaussian_psf(1, 1.0), {gamma}, Occupancy{true});
        const BoundScenario s{"delta", scene, 0};
        const double var = crb_variances(fisher_matrix(s, c)).at(0);
        worst = std::max(worst, std::abs(var - gamma) / gamma);
    }
    return {worst <= 0.01, fmt("max |CRB - gamma| / gamma = %.3g", worst)};
}

// 2 ---------------------------------------------------------------------------

Outcome pdf_correctness() {
    double worst_norm = 0.0, worst_partial = 0.0;
    int peaks = 0;
    for (double lambda : {0.1, 1.0, 10.0, 100.0}) {
        for (double sigma : {0.5, 1.6}) {
            for (double gain : {0.5, 1.0, 2.0}) {
                CameraModel c = pure_camera(gain, sigma);
                c.background = 0.05;
                const LatticeGeometry g(1, 1, 1.0, 4.0, 4.0, 9, 9);
                const PointSpreadFunction psf = build_gaussian_psf(5, 1.0);
                auto scene = [&](double gamma) { return make_scene(g, psf, {gamma}, Occupancy{true}); };
                const double w = scene(1.0).psf_at(0, 4, 4);
                const double gamma = std::max(lambda - c.background, 0.01) / w;
                const double h = 1e-3;
                const Scene s = scene(gamma);
                const PdfAccumulator p = pixel_pdf(4, 4, s, c);
                const PdfAccumulator up = pixel_pdf(4, 4, scene(gamma + h), c);
                const PdfAccumulator dn = pixel_pdf(4, 4, scene(gamma - h), c);
                const std::vector<double> d = pixel_pdf_partial(4, 4, 0, s, c);
                worst_norm = std::max(worst_norm, std::abs(p.integral() - 1.0));
                const auto& v = p.density();
                const double vmax = *std::max_element(v.begin(), v.end());
                for (std::size_t j = 1; j + 1 < p.size(); ++j) {
                    if (v[j] >= v[j - 1] && v[j] > v[j + 1] && v[j] > 1e-3 * vmax) {
                        const double fd = (up.density_at(p.q(j)) - dn.density_at(p.q(j))) / (2.0 * h);
                        const double scale = std::max(std::abs(fd), 1e-3 * v[j]);
                        worst_partial = std::max(worst_partial, std::abs(d[j] - fd) / scale);
                        ++peaks;
                    }
                }
            }
        }
    }
    return {worst_norm <= 1e-6 && worst_partial <= 1e-4 && peaks > 0,
            fmt("max |integral - 1| = %.2g, max partial rel err = %.2g over %.0f peaks", worst_norm,
                worst_partial, peaks)};
}

// 3, 10 ------------------------------------------------------------------------

std::vector<double> gammas_of(const DatasetSpec& d) {
    std::vector<double> g;
    for (double e : d.exposures) {
        g.push_back(d.rate * e);
    }
    return g;
}

Outcome scenario_ordering() {
    const ToolkitConfig desk = preset_config("desk");
    const std::vector<double> gammas = gammas_of(desk.dataset);
    const auto rows = bound_sweep(gammas, all_scenario_labels(), desk.dataset.camera, desk.dataset.psf,
                                  desk.dataset.rate, desk.bound);
    std::map<std::pair<double, std::string>, double> v;
    for (const auto& r : rows) {
        v[{r.gamma, r.scenario}] = r.variance_floor;
    }
    int violations = 0, checks = 0;
    for (double g : gammas) {
        for (const std::string st : {"empty", "occ"}) {
            checks += 2;
            violations += v.at({g, st + "-nn"}) <= v.at({g, st + "-sn"}) ? 0 : 1;
            violations += v.at({g, st + "-sn"}) <= v.at({g, st + "-an"}) ? 0 : 1;
        }
        for (const std::string nb : {"-nn", "-sn", "-an"}) {
            ++checks;
            violations += v.at({g, "occ" + nb}) > v.at({g, "empty" + nb}) ? 0 : 1;
        }
    }
    const double top = gammas.back();
    return {violations == 0,
            fmt("%.0f violations of %.0f checks; occ nn/sn/an at top gamma: ", violations, checks) +
                fmt("%.4g / %.4g / %.4g", v.at({top, "occ-nn"}), v.at({top, "occ-sn"}),
                    v.at({top, "occ-an"}))};
}

Outcome fn_fit_consistency() {
    double worst = 0.0;
    for (double x = 0.5; x <= 300.0; x += 0.5) {
        const double direct = normal_cdf((fitted_threshold(x) - x) / std::sqrt(fitted_variance(x)));
        worst = std::max(worst, std::abs(fn_rate_fit(x) - direct));
    }
    // Own bound curves on the full gamma grid with the default (81 px) window.
    const ToolkitConfig paper = preset_config("paper");
    const std::vector<double> gammas = gammas_of(paper.dataset);
    const std::vector<std::string> labels{"empty-sn", "occ-sn"};
    const auto rows = bound_sweep(gammas, labels, paper.dataset.camera, paper.dataset.psf,
                                  paper.dataset.rate, paper.bound);
    std::vector<double> g, thr, var;
    for (const auto& r : rows) {
        if (r.scenario == "occ-sn") {
            g.push_back(r.gamma);
            thr.push_back(r.threshold);
            var.push_back(r.variance_floor);
        }
    }
    const PowerLawFit ft = power_law_fit(g, thr);
    const PowerLawFit fv = power_law_fit(g, var);
    const bool ok = worst <= 1e-12 && ft.b > 0.8 && ft.b < 1.0 && fv.b > 0.8 && fv.b < 1.0;
    return {ok, fmt("max |fn_rate_fit - direct| = %.2g; threshold exponent %.4f, variance exponent %.4f",
                    worst, ft.b, fv.b)};
}

// 4 ---------------------------------------------------------------------------

Outcome estimator_efficiency() {
    const double gamma = 150.0;
    const std::size_t frames = 500;
    const std::uint64_t seed = 1;
    const ToolkitConfig desk = preset_config("desk");
    const CameraModel& camera = desk.dataset.camera;
    const BoundScenario s = make_bound_scenario(true, Neighborhood::some, gamma, desk.dataset.psf,
                                                desk.dataset.rate);
    const double crb = crb_variances(fisher_matrix(s, camera)).at(s.site_under_study);

    DetectorConfig det;
    det.algo = Algorithm::gns;
    det.gns = desk.gns;
    det.gns.psf_window = s.scene.psf(s.site_under_study).window();
    det.gns.tile_size = 0;
    const DetectorContext ctx{s.scene.geometry, s.scene.psfs, camera, s.scene.exposure};

    double sum = 0.0, sum2 = 0.0;
    for (std::size_t f = 0; f < frames; ++f) {
        const Frame fr = sample_frame(s.scene, camera, frame_seed(seed, 0, f));
        const double e = run_detector(det, fr.pixels.cast<double>(), ctx).estimates.at(s.site_under_study);
        sum += e;
        sum2 += e * e;
    }
    const double n = static_cast<double>(frames);
    const double mean = sum / n;
    const double var = (sum2 - n * mean * mean) / (n - 1.0);
    // A sample variance of an efficient estimator scatters around the bound; allow
    // three standard errors below it.
    const double se = std::sqrt(2.0 / (n - 1.0));
    const double ratio = var / crb;
    return {ratio >= 1.0 - 3.0 * se && ratio <= 2.0,
            fmt("var / CRB = %.4f (CRB %.2f e-^2, lower limit %.3f)", ratio, crb, 1.0 - 3.0 * se) +
                fmt(", mean estimate %.2f", mean)};
}

// 5 ---------------------------------------------------------------------------

Outcome exact_inversion() {
    const ToolkitConfig desk = preset_config("desk");
    const DatasetSpec& d = desk.dataset;
    const double exposure = 150.0 / d.rate;
    const Occupancy occ = sample_occupancy(d.geometry.site_count(), 0.5, 3);
    const Scene scene = make_scene(d.geometry, d.psf, gamma_from_exposure(occ, d.rate, exposure), occ, exposure);
    const ImageD lambda = expected_electron_map(scene, d.camera);
    ImageD frame(lambda.width(), lambda.height());
    for (int y = 0; y < lambda.height(); ++y) {
        for (int x = 0; x < lambda.width(); ++x) {
            frame(x, y) = d.camera.offset + lambda(x, y) / d.camera.gain;
        }
    }
    GnsOptions opt;
    opt.psf_window = 0;
    opt.cg_tolerance = 1e-13;
    opt.step_tolerance = 1e-10;
    opt.max_iterations = 100;
    opt.background = d.camera.background_at(exposure);
    const GnsResult r = gauss_newton_solve(frame, d.geometry, scene.psfs, d.camera, opt);
    const double top = d.rate * exposure;
    double worst = 0.0;
    for (std::size_t i = 0; i < scene.site_count(); ++i) {
        const double ref = scene.gamma[i] > 0.0 ? scene.gamma[i] : top;
        worst = std::max(worst, std::abs(r.estimates.estimates[i] - scene.gamma[i]) / ref);
    }
    const double off = std::abs(r.state.offset() - d.camera.offset) / d.camera.offset;
    return {worst <= 1e-6 && off <= 1e-6,
            fmt("max gamma rel err %.2g, offset rel err %.2g, %.0f iterations", worst, off,
                r.state.iterations)};
}

// 6-9, 11 ---------------------------------------------------------------------

const MetricsRow* top_row(const BenchmarkResult& r, const std::string& det) {
    const MetricsRow* best = nullptr;
    for (const auto& m : r.metrics) {
        if (m.detector == det && (!best || m.gamma_true > best->gamma_true)) {
            best = &m;
        }
    }
    return best;
}

} // namespace

int main() {
    std::cout << "atomdet acceptance suite\n";
    report(1, "Poisson oracle", 10.0, poisson_oracle);
    report(2, "PDF correctness", 60.0, pdf_correctness);
    report(3, "scenario ordering", 1800.0, scenario_ordering);
    report(4, "estimator efficiency", 1200.0, estimator_efficiency);
    report(5, "exact inversion", 60.0, exact_inversion);

    const ToolkitConfig desk = preset_config("desk");
    const fs::path work = fs::temp_directory_path() / "atomdet_acceptance";
    fs::remove_all(work);
    BenchmarkOptions opt;
    opt.detectors = {"roi", "wiener", "rl", "gns"};
    BenchmarkResult bench;
    double bench_seconds = 0.0;
    std::string bench_error;
    {
        const auto t0 = std::chrono::steady_clock::now();
        try {
            bench = run_benchmark(desk, work / "run1", opt);
        } catch (const std::exception& e) {
            bench_error = e.what();
        }
        bench_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    }
    auto need_bench = [&]() {
        if (!bench_error.empty()) {
            throw std::runtime_error("benchmark failed: " + bench_error);
        }
    };

    report(6, "slope recovery", 0.0, [&]() -> Outcome {
        need_bench();
        for (const auto& r : bench.rates) {
            if (r.detector == "gns") {
                const double rel = std::abs(r.slope - desk.dataset.rate) / desk.dataset.rate;
                return {rel <= 0.02 && bench_seconds < 600.0,
                        fmt("GNS slope %.1f e-/s, relative error %.4f, benchmark %.1f s", r.slope, rel,
                            bench_seconds)};
            }
        }
        return {false, "no GNS rate row"};
    });

    report(7, "error-rate structure", 0.0, [&]() -> Outcome {
        need_bench();
        std::string bad;
        int violations = 0;
        for (const auto& m : bench.metrics) {
            if (m.fn_rate < m.fp_rate) {
                ++violations;
                bad += " " + m.detector + "@" + fmt("%.1f", m.gamma_true) + fmt("(FN %.4f < FP %.4f)", m.fn_rate, m.fp_rate);
            }
        }
        return {violations == 0,
                fmt("%.0f of %.0f rows with FN < FP", violations, bench.metrics.size()) + bad};
    });

    report(8, "detector ordering", 0.0, [&]() -> Outcome {
        need_bench();
        const MetricsRow* g = top_row(bench, "gns");
        const MetricsRow* r = top_row(bench, "rl");
        const MetricsRow* w = top_row(bench, "wiener");
        const MetricsRow* o = top_row(bench, "roi");
        if (!g || !r || !w || !o) {
            return {false, "missing detector rows"};
        }
        auto tot = [](const MetricsRow* m) { return m->fp_rate + m->fn_rate; };
        const bool ok = tot(g) <= tot(r) && tot(g) <= tot(w) && tot(r) <= tot(o) && tot(w) <= tot(o);
        return {ok, fmt("gamma %.1f: GNS %.4g, RL %.4g, ", g->gamma_true, tot(g), tot(r)) +
                        fmt("Wiener %.4g, ROI %.4g", tot(w), tot(o))};
    });

    report(9, "timing ordering", 0.0, [&]() -> Outcome {
        need_bench();
        std::map<std::string, double> ms;
        for (const auto& t : bench.timing) {
            if (t.detector != "rl" || t.params.find("iterations=2") != std::string::npos) {
                ms[t.detector] = t.mean_ms;
            }
        }
        if (ms.size() != 4) {
            return {false, "missing timing rows"};
        }
        const bool ok = ms["roi"] < ms["wiener"] && ms["wiener"] < ms["rl"] && ms["rl"] < ms["gns"];
        return {ok, fmt("ROI %.3f ms, Wiener %.3f ms, RL(2) %.3f ms", ms["roi"], ms["wiener"], ms["rl"]) +
                        fmt(", GNS %.3f ms", ms["gns"])};
    });

    report(10, "fn_rate_fit consistency and exponents", 0.0, fn_fit_consistency);

    report(11, "determinism", 0.0, [&]() -> Outcome {
        need_bench();
        run_benchmark(desk, work / "run2", opt);
        const std::string a = slurp(work / "run1" / "metrics.csv");
        const std::string b = slurp(work / "run2" / "metrics.csv");
        return {!a.empty() && a == b, fmt("metrics.csv %.0f bytes, identical: ", a.size()) + (a == b ? "yes" : "no")};
    });

    fs::remove_all(work);
    std::cout << (failures == 0 ? "all criteria passed\n" : std::to_string(failures) + " criteria failed\n");
    return failures == 0 ? 0 : 1;
}
