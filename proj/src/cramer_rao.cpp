#include "atomdet/cramer_rao.hpp"

#include "atomdet/gaussian.hpp"
#include "atomdet/pixel_stats.hpp"
#include "atomdet/rng.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <thread>
#include <unordered_map>

namespace atomdet {

std::string scenario_label(bool occupied, Neighborhood nb) {
    std::string label = occupied ? "occ-" : "empty-";
    switch (nb) {
    case Neighborhood::none:
        return label + "nn";
    case Neighborhood::some:
        return label + "sn";
    case Neighborhood::all:
        return label + "an";
    }
    return label;
}

std::vector<std::string> all_scenario_labels() {
    return {"empty-nn", "empty-sn", "empty-an", "occ-nn", "occ-sn", "occ-an"};
}

std::pair<bool, Neighborhood> parse_scenario_label(const std::string& label) {
    for (bool occ : {false, true}) {
        for (Neighborhood nb : {Neighborhood::none, Neighborhood::some, Neighborhood::all}) {
            if (scenario_label(occ, nb) == label) {
                return {occ, nb};
            }
        }
    }
    throw InvalidArgument("unknown scenario '" + label +
                          "' (expected empty-nn|empty-sn|empty-an|occ-nn|occ-sn|occ-an)");
}

Occupancy some_neighbors_pattern(int side) {
    if (side <= 0) {
        throw InvalidArgument("sites per side must be positive");
    }
    const std::size_t n = static_cast<std::size_t>(side) * side;
    const std::size_t center = n / 2;
    if (side == 5) {
        // Half of the 24 neighbors: 2 of 4 nearest, 2 of 4 diagonal, 8 of 16 in the outer ring.
        static const int mask[25] = {1, 0, 1, 1, 0,  //
                                     0, 1, 0, 0, 1,  //
                                     1, 0, 0, 1, 0,  //
                                     0, 1, 1, 0, 1,  //
                                     1, 0, 1, 0, 0};
        return Occupancy(std::begin(mask), std::end(mask));
    }
    std::vector<std::size_t> neighbors;
    for (std::size_t i = 0; i < n; ++i) {
        if (i != center) {
            neighbors.push_back(i);
        }
    }
    std::sort(neighbors.begin(), neighbors.end(), [](std::size_t a, std::size_t b) {
        return derive_seed(0x5EEDULL, a) < derive_seed(0x5EEDULL, b);
    });
    Occupancy occ(n, false);
    for (std::size_t k = 0; k < neighbors.size() / 2; ++k) {
        occ[neighbors[k]] = true;
    }
    return occ;
}

namespace {

LatticeGeometry bound_geometry(const BoundSettings& s) {
    const double span = (s.sites - 1) * s.spacing;
    const double origin = std::floor((s.image_size - 1 - span) / 2.0);
    return LatticeGeometry(s.sites, s.sites, s.spacing, origin, origin, s.image_size, s.image_size);
}

BoundScenario scenario_from_occupancy(std::string label, Occupancy occ, double gamma,
                                      const PsfModel& psf, double rate, const BoundSettings& s) {
    if (!(gamma >= 0.0)) {
        throw InvalidArgument("gamma must be non-negative");
    }
    PsfModel model = psf;
    model.window = s.psf_window;
    const LatticeGeometry geometry = bound_geometry(s);
    if (occ.size() != geometry.site_count()) {
        throw InvalidArgument("scenario occupancy has the wrong number of sites");
    }
    std::vector<double> g(occ.size(), 0.0);
    for (std::size_t i = 0; i < occ.size(); ++i) {
        g[i] = occ[i] ? gamma : 0.0;
    }
    const double exposure = rate > 0.0 ? gamma / rate : 0.0;
    BoundScenario sc;
    sc.label = std::move(label);
    sc.scene = make_scene(geometry, model, std::move(g), std::move(occ), exposure);
    sc.site_under_study = geometry.site_count() / 2;
    return sc;
}

} // namespace

BoundScenario make_bound_scenario(bool occupied, Neighborhood nb, double gamma, const PsfModel& psf,
                                  double rate, const BoundSettings& s) {
    const std::size_t n = static_cast<std::size_t>(s.sites) * s.sites;
    Occupancy occ;
    switch (nb) {
    case Neighborhood::none:
        occ.assign(n, false);
        break;
    case Neighborhood::some:
        occ = some_neighbors_pattern(s.sites);
        break;
    case Neighborhood::all:
        occ.assign(n, true);
        break;
    }
    occ[n / 2] = occupied;
    return scenario_from_occupancy(scenario_label(occupied, nb), std::move(occ), gamma, psf, rate, s);
}

BoundScenario make_custom_scenario(const Occupancy& occupancy, double gamma, const PsfModel& psf,
                                   double rate, const BoundSettings& s) {
    return scenario_from_occupancy("custom", occupancy, gamma, psf, rate, s);
}

FisherMatrix fisher_matrix(const BoundScenario& scenario, const CameraModel& camera,
                           double epsilon, unsigned threads) {
    const Scene& scene = scenario.scene;
    scene.validate();
    camera.validate();
    const std::size_t n = scene.site_count();
    const int width = scene.geometry.image_width();
    const ImageD lambda = expected_electron_map(scene, camera);

    struct Cover {
        std::uint32_t site;
        double weight;
    };
    std::vector<std::vector<Cover>> cover(lambda.size());
    for (std::size_t i = 0; i < n; ++i) {
        for_each_psf_pixel(scene, i, [&](int x, int y, double w) {
            cover[static_cast<std::size_t>(y) * width + x].push_back({static_cast<std::uint32_t>(i), w});
        });
    }

    // Distinct lambda values of covered pixels; symmetric scenes repeat them heavily.
    std::map<double, double> info;
    for (std::size_t p = 0; p < cover.size(); ++p) {
        if (cover[p].empty()) {
            continue;
        }
        const double lam = lambda.pixels()[p];
        if (!(lam > 0.0)) {
            std::ostringstream msg;
            msg << "lambda = " << lam << " at pixel (" << p % width << ", " << p / width
                << ") covered by a PSF; the Fisher information is singular (need b > 0)";
            throw ModelError(msg.str());
        }
        info.emplace(lam, 0.0);
    }
    std::vector<std::map<double, double>::iterator> slots;
    slots.reserve(info.size());
    for (auto it = info.begin(); it != info.end(); ++it) {
        slots.push_back(it);
    }
    auto work = [&](std::size_t begin, std::size_t stride) {
        for (std::size_t k = begin; k < slots.size(); k += stride) {
            slots[k]->second = fisher_weight(slots[k]->first, camera, epsilon);
        }
    };
    const unsigned workers = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(slots.size())));
    if (workers == 1) {
        work(0, 1);
    } else {
        std::vector<std::jthread> pool;
        for (unsigned w = 0; w < workers; ++w) {
            pool.emplace_back(work, w, workers);
        }
    }

    Eigen::MatrixXd fim = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    for (std::size_t p = 0; p < cover.size(); ++p) {
        const auto& c = cover[p];
        if (c.empty()) {
            continue;
        }
        const double j = info.find(lambda.pixels()[p])->second;
        for (std::size_t a = 0; a < c.size(); ++a) {
            const double wa = c[a].weight * j;
            for (std::size_t b = a; b < c.size(); ++b) {
                fim(c[a].site, c[b].site) += wa * c[b].weight;
            }
        }
    }
    for (Eigen::Index r = 0; r < fim.rows(); ++r) {
        for (Eigen::Index col = r + 1; col < fim.cols(); ++col) {
            const double v = fim(r, col) + fim(col, r);
            fim(r, col) = v;
            fim(col, r) = v;
        }
    }
    return {std::move(fim), scenario.label};
}

std::vector<double> crb_variances(const FisherMatrix& fisher) {
    const Eigen::MatrixXd& m = fisher.entries;
    if (m.rows() == 0) {
        return {};
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(m, Eigen::EigenvaluesOnly);
    const double lo = eig.eigenvalues().minCoeff();
    const double hi = eig.eigenvalues().maxCoeff();
    const double condition = lo > 0.0 ? hi / lo : INFINITY;
    if (!(condition <= 1e12)) {
        std::ostringstream msg;
        msg << "Fisher matrix of scenario '" << fisher.label << "' is ill-conditioned (condition "
            << condition << ")";
        throw IllConditioned(msg.str(), condition);
    }
    Eigen::LLT<Eigen::MatrixXd> llt(m);
    if (llt.info() != Eigen::Success) {
        throw IllConditioned("Fisher matrix of scenario '" + fisher.label + "' is not positive definite",
                             condition);
    }
    const Eigen::MatrixXd inv = llt.solve(Eigen::MatrixXd::Identity(m.rows(), m.cols()));
    std::vector<double> out(static_cast<std::size_t>(m.rows()));
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        out[static_cast<std::size_t>(i)] = inv(i, i);
    }
    return out;
}

ErrorRateFloor error_rate_floor(double var_empty, double var_occupied, double gamma) {
    if (!(var_empty > 0.0) || !(var_occupied > 0.0) || !(gamma > 0.0)) {
        throw InvalidArgument("error_rate_floor needs positive variances and gamma");
    }
    const ThresholdChoice t = gaussian_crossing(0.0, var_empty, gamma, var_occupied, 0.5);
    ErrorRateFloor out;
    out.threshold = t.threshold;
    out.fallback = t.fallback;
    out.fp = normal_sf(t.threshold, 0.0, var_empty);
    out.fn = normal_cdf(t.threshold, gamma, var_occupied);
    return out;
}

double fitted_threshold(double x) { return 0.391 * std::pow(x, 0.951) + 2.160; }
double fitted_variance(double x) { return 4.183 * std::pow(x, 0.896) + 31.618; }

double fn_rate_fit(double x) {
    if (!(x > 0.0)) {
        throw InvalidArgument("fn_rate_fit needs x > 0");
    }
    return 0.5 * (1.0 + std::erf((fitted_threshold(x) - x) / std::sqrt(2.0 * fitted_variance(x))));
}

double PowerLawFit::operator()(double k) const { return a * std::pow(k, b) + c; }

namespace {

struct LinearPart {
    double a = 0.0;
    double c = 0.0;
    double rss = INFINITY;
};

LinearPart solve_linear(std::span<const double> k, std::span<const double> v, double b) {
    const std::size_t n = k.size();
    double mu = 0.0, mv = 0.0;
    std::vector<double> u(n);
    for (std::size_t i = 0; i < n; ++i) {
        u[i] = std::pow(k[i], b);
        mu += u[i];
        mv += v[i];
    }
    mu /= static_cast<double>(n);
    mv /= static_cast<double>(n);
    double suu = 0.0, suv = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        suu += (u[i] - mu) * (u[i] - mu);
        suv += (u[i] - mu) * (v[i] - mv);
    }
    LinearPart out;
    out.a = suu > 0.0 ? suv / suu : 0.0;
    out.c = mv - out.a * mu;
    out.rss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double r = v[i] - out.a * u[i] - out.c;
        out.rss += r * r;
    }
    if (!std::isfinite(out.rss)) {
        out.rss = INFINITY;
    }
    return out;
}

double rss_of(std::span<const double> k, std::span<const double> v, double a, double b, double c) {
    double s = 0.0;
    for (std::size_t i = 0; i < k.size(); ++i) {
        const double r = v[i] - a * std::pow(k[i], b) - c;
        s += r * r;
    }
    return std::isfinite(s) ? s : INFINITY;
}

} // namespace

PowerLawFit power_law_fit(std::span<const double> k, std::span<const double> values, double b_min,
                          double b_max) {
    if (k.size() != values.size()) {
        throw InvalidArgument("power_law_fit: k and values differ in length");
    }
    if (k.size() < 4) {
        throw InvalidArgument("power_law_fit needs at least 4 points");
    }
    for (double kv : k) {
        if (!(kv > 0.0)) {
            throw InvalidArgument("power_law_fit needs k > 0");
        }
    }
    const auto [vmin, vmax] = std::minmax_element(values.begin(), values.end());
    const double scale = std::max({1.0, std::abs(*vmin), std::abs(*vmax)});
    if (*vmax - *vmin <= 1e-12 * scale) {
        PowerLawFit flat;
        flat.c = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
        flat.residual_norm = std::sqrt(rss_of(k, values, 0.0, 0.0, flat.c));
        flat.degenerate = true;
        return flat;
    }

    constexpr double kScanStep = 0.01;
    const int steps = static_cast<int>(std::ceil((b_max - b_min) / kScanStep));
    int best = 0;
    double best_rss = INFINITY;
    for (int s = 0; s <= steps; ++s) {
        const double rss = solve_linear(k, values, b_min + s * kScanStep).rss;
        if (rss < best_rss) {
            best_rss = rss;
            best = s;
        }
    }
    double lo = b_min + std::max(best - 1, 0) * kScanStep;
    double hi = b_min + std::min(best + 1, steps) * kScanStep;
    const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
    double x1 = hi - inv_phi * (hi - lo);
    double x2 = lo + inv_phi * (hi - lo);
    double f1 = solve_linear(k, values, x1).rss;
    double f2 = solve_linear(k, values, x2).rss;
    while (hi - lo > 1e-13) {
        if (f1 < f2) {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = solve_linear(k, values, x1).rss;
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = solve_linear(k, values, x2).rss;
        }
    }
    const double b_opt = 0.5 * (lo + hi);
    const LinearPart lin = solve_linear(k, values, b_opt);
    PowerLawFit fit{lin.a, b_opt, lin.c, 0.0, false};
    double rss = lin.rss;

    // Gauss-Newton polish on (a, b, c).
    for (int it = 0; it < 20; ++it) {
        Eigen::MatrixXd jac(static_cast<Eigen::Index>(k.size()), 3);
        Eigen::VectorXd res(static_cast<Eigen::Index>(k.size()));
        for (std::size_t i = 0; i < k.size(); ++i) {
            const double u = std::pow(k[i], fit.b);
            const auto r = static_cast<Eigen::Index>(i);
            jac(r, 0) = u;
            jac(r, 1) = fit.a * u * std::log(k[i]);
            jac(r, 2) = 1.0;
            res(r) = values[i] - fit.a * u - fit.c;
        }
        const Eigen::Vector3d delta = jac.colPivHouseholderQr().solve(res);
        const PowerLawFit trial{fit.a + delta(0), fit.b + delta(1), fit.c + delta(2), 0.0, false};
        const double trial_rss = rss_of(k, values, trial.a, trial.b, trial.c);
        if (!(trial_rss < rss)) {
            break;
        }
        fit = trial;
        rss = trial_rss;
    }
    fit.residual_norm = std::sqrt(rss);

    double umin = INFINITY, umax = -INFINITY;
    for (double kv : k) {
        const double u = fit.a * std::pow(kv, fit.b);
        umin = std::min(umin, u);
        umax = std::max(umax, u);
    }
    fit.degenerate = !(umax - umin > 1e-9 * scale);

    if (best == 0 || best == steps) {
        std::ostringstream msg;
        msg << "power-law exponent hit the search boundary [" << b_min << ", " << b_max << "]";
        throw PowerLawFitError(msg.str(), fit);
    }
    return fit;
}

std::vector<BoundRow> bound_sweep(std::span<const double> gammas,
                                  std::span<const std::string> scenarios, const CameraModel& camera,
                                  const PsfModel& psf, double rate, const BoundSettings& settings) {
    std::set<Neighborhood> needed;
    for (const auto& label : scenarios) {
        needed.insert(parse_scenario_label(label).second);
    }
    std::vector<BoundRow> rows;
    for (double gamma : gammas) {
        if (!(gamma > 0.0)) {
            throw InvalidArgument("bound gammas must be positive");
        }
        std::map<Neighborhood, std::pair<double, double>> variances;  // (empty, occupied)
        for (Neighborhood nb : needed) {
            double v[2];
            for (int occ = 0; occ < 2; ++occ) {
                const BoundScenario sc = make_bound_scenario(occ == 1, nb, gamma, psf, rate, settings);
                const auto var = crb_variances(fisher_matrix(sc, camera, settings.epsilon, settings.threads));
                v[occ] = var[sc.site_under_study];
            }
            variances[nb] = {v[0], v[1]};
        }
        for (const auto& label : scenarios) {
            const auto [occupied, nb] = parse_scenario_label(label);
            const auto [ve, vo] = variances.at(nb);
            const ErrorRateFloor floor = error_rate_floor(ve, vo, gamma);
            rows.push_back({gamma, label, occupied ? vo : ve, floor.threshold, floor.fp, floor.fn});
        }
    }
    return rows;
}

void write_bounds_csv(std::span<const BoundRow> rows, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) {
        throw IoError("cannot write " + path.string());
    }
    out << "gamma,scenario,variance_floor,threshold,fp_floor,fn_floor\n";
    out << std::setprecision(10);
    for (const BoundRow& r : rows) {
        out << r.gamma << ',' << r.scenario << ',' << r.variance_floor << ',' << r.threshold << ','
            << r.fp_floor << ',' << r.fn_floor << '\n';
    }
    if (!out) {
        throw IoError("write failed for " + path.string());
    }
}

} // namespace atomdet
