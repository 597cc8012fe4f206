#include "atomdet/detectors.hpp"

#include "atomdet/fft.hpp"

#include <Eigen/Sparse>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <mutex>
#include <cmath>
#include <sstream>
#include <thread>
#include <unordered_map>

namespace atomdet {

namespace {

constexpr double kRlFloor = 1e-6;
constexpr double kRlGuard = 1e-12;
constexpr double kMinVariance = 1e-6;

std::string format_number(double v) {
    std::ostringstream s;
    s << v;
    return s.str();
}

// Calls fn(x, y) for every in-frame pixel within `radius` of (cx, cy); returns true
// when part of the disc falls outside the frame.
template <typename Fn>
bool for_each_disc_pixel(double cx, double cy, double radius, int width, int height, Fn&& fn) {
    const double r2 = radius * radius;
    const int x0 = static_cast<int>(std::ceil(cx - radius));
    const int x1 = static_cast<int>(std::floor(cx + radius));
    const int y0 = static_cast<int>(std::ceil(cy - radius));
    const int y1 = static_cast<int>(std::floor(cy + radius));
    bool clipped = false;
    for (int y = y0; y <= y1; ++y) {
        for (int x = x0; x <= x1; ++x) {
            const double dx = x - cx;
            const double dy = y - cy;
            if (dx * dx + dy * dy > r2) {
                continue;
            }
            if (x < 0 || y < 0 || x >= width || y >= height) {
                clipped = true;
                continue;
            }
            fn(x, y);
        }
    }
    return clipped;
}

void check_frame(const ImageD& frame, const LatticeGeometry& geometry) {
    if (frame.width() != geometry.image_width() || frame.height() != geometry.image_height()) {
        throw InvalidArgument("frame size does not match the lattice geometry");
    }
}

} // namespace

int disc_size(double radius) {
    if (!(radius >= 0.0)) {
        throw InvalidArgument("radius must be non-negative");
    }
    int n = 0;
    const int r = static_cast<int>(std::floor(radius));
    for (int dy = -r; dy <= r; ++dy) {
        for (int dx = -r; dx <= r; ++dx) {
            if (dx * dx + dy * dy <= radius * radius) {
                ++n;
            }
        }
    }
    return n;
}

EstimateSet roi_sum(const ImageD& frame, const LatticeGeometry& geometry, double radius,
                    const CameraModel& camera) {
    if (!(radius >= 0.0)) {
        throw InvalidArgument("roi radius must be non-negative");
    }
    check_frame(frame, geometry);
    EstimateSet out;
    out.detector = "roi";
    out.params = "radius=" + format_number(radius);
    const std::size_t n = geometry.site_count();
    out.estimates.assign(n, 0.0);
    out.near_border.assign(n, false);
    for (std::size_t i = 0; i < n; ++i) {
        const SiteCenter c = geometry.site_center(i);
        double sum = 0.0;
        out.near_border[i] = for_each_disc_pixel(c.x, c.y, radius, frame.width(), frame.height(),
                                                 [&](int x, int y) { sum += frame(x, y) - camera.offset; });
        out.estimates[i] = sum * camera.gain;
    }
    return out;
}

ImageD wiener_deconvolve(const ImageD& frame, const PointSpreadFunction& psf, double balance) {
    if (!(balance >= 0.0)) {
        throw InvalidArgument("wiener balance must be non-negative");
    }
    const Fft2D fft(frame.width(), frame.height());
    const Spectrum h = fft.transfer_function(psf);
    Spectrum y = fft.forward(frame);
    for (std::size_t k = 0; k < y.size(); ++k) {
        const double prior = k == 0 ? 0.0 : balance;
        const double denom = std::norm(h[k]) + prior;
        y[k] = denom > 0.0 ? std::conj(h[k]) * y[k] / denom : std::complex<double>(0.0, 0.0);
    }
    return fft.inverse(y);
}

ImageD richardson_lucy(const ImageD& frame, const PointSpreadFunction& psf, int iterations,
                       const CameraModel& camera,
                       const std::function<void(int, const ImageD&)>& on_iteration) {
    if (iterations < 1) {
        throw InvalidArgument("richardson_lucy needs at least one iteration");
    }
    const Fft2D fft(frame.width(), frame.height());
    const Spectrum h = fft.transfer_function(psf);
    ImageD d(frame.width(), frame.height());
    for (std::size_t p = 0; p < d.size(); ++p) {
        d.pixels()[p] = std::max(frame.pixels()[p] - camera.offset, kRlFloor);
    }
    ImageD u = d;
    for (int it = 1; it <= iterations; ++it) {
        ImageD ratio = fft.convolve(u, h);
        for (std::size_t p = 0; p < ratio.size(); ++p) {
            ratio.pixels()[p] = d.pixels()[p] / std::max(ratio.pixels()[p], kRlGuard);
        }
        const ImageD correction = fft.convolve(ratio, h, true);
        for (std::size_t p = 0; p < u.size(); ++p) {
            u.pixels()[p] = std::max(u.pixels()[p] * correction.pixels()[p], 0.0);
        }
        if (on_iteration) {
            on_iteration(it, u);
        }
    }
    return u;
}

EstimateSet deconvolution_readout(const ImageD& image, const LatticeGeometry& geometry,
                                  double read_radius, const CameraModel& camera, int border_margin) {
    if (!(read_radius >= 0.0)) {
        throw InvalidArgument("read_radius must be non-negative");
    }
    check_frame(image, geometry);
    EstimateSet out;
    const std::size_t n = geometry.site_count();
    out.estimates.assign(n, 0.0);
    out.near_border.assign(n, false);
    for (std::size_t i = 0; i < n; ++i) {
        const SiteCenter c = geometry.site_center(i);
        double sum = 0.0;
        const bool clipped = for_each_disc_pixel(c.x, c.y, read_radius, image.width(), image.height(),
                                                 [&](int x, int y) { sum += image(x, y); });
        out.estimates[i] = sum * camera.gain;
        out.near_border[i] = clipped || c.x < border_margin || c.y < border_margin ||
                             c.x > image.width() - 1 - border_margin ||
                             c.y > image.height() - 1 - border_margin;
    }
    return out;
}

std::string GnsOptions::describe() const {
    std::ostringstream s;
    s << "window=" << psf_window << ",tile=" << tile_size << ",refresh=" << refresh_every
      << ",cg_tol=" << cg_tolerance << ",max_iter=" << max_iterations << ",tol=" << step_tolerance
      << ",warm_start=" << (warm_start ? 1 : 0);
    if (warm_start) {
        s << ",warm_radius=" << warm_start_radius;
    }
    return s.str();
}

namespace {

struct Rect {
    int x0, y0, x1, y1;  // half-open
    int width() const { return x1 - x0; }
    int height() const { return y1 - y0; }
    bool contains(int x, int y) const { return x >= x0 && x < x1 && y >= y0 && y < y1; }
};

// Linear model restricted to one pixel region and the sites whose kernels reach it.
class GnsProblem {
public:
    GnsProblem(const ImageD& frame, const Rect& region, std::vector<std::size_t> sites,
               std::vector<int> anchor_x, std::vector<int> anchor_y,
               std::vector<const PointSpreadFunction*> kernels, const CameraModel& camera,
               const GnsOptions& options)
        : frame_(frame), region_(region), sites_(std::move(sites)), camera_(camera), options_(options) {
        const std::size_t n = sites_.size();
        const std::size_t npix = static_cast<std::size_t>(region.width()) * region.height();

        // Cover lists in CSR form, sorted by pixel then site.
        std::vector<std::size_t> count(npix + 1, 0);
        auto visit = [&](std::size_t l, auto&& fn) {
            const PointSpreadFunction& k = *kernels[l];
            const int h = k.half_window();
            const int x0 = std::max(anchor_x[l] - h, region.x0);
            const int x1 = std::min(anchor_x[l] + h, region.x1 - 1);
            const int y0 = std::max(anchor_y[l] - h, region.y0);
            const int y1 = std::min(anchor_y[l] + h, region.y1 - 1);
            for (int y = y0; y <= y1; ++y) {
                for (int x = x0; x <= x1; ++x) {
                    const double w = k.at(x - anchor_x[l], y - anchor_y[l]);
                    if (w != 0.0) {
                        fn(pixel_index(x, y), w);
                    }
                }
            }
        };
        for (std::size_t l = 0; l < n; ++l) {
            visit(l, [&](std::size_t p, double) { ++count[p + 1]; });
        }
        for (std::size_t p = 0; p < npix; ++p) {
            count[p + 1] += count[p];
        }
        cover_start_ = count;
        cover_site_.resize(count[npix]);
        cover_weight_.resize(count[npix]);
        std::vector<std::size_t> fill(count.begin(), count.end() - 1);
        for (std::size_t l = 0; l < n; ++l) {
            visit(l, [&](std::size_t p, double w) {
                cover_site_[fill[p]] = static_cast<std::uint32_t>(l);
                cover_weight_[fill[p]] = w;
                ++fill[p];
            });
        }

        // One slot per overlapping site pair (a <= b), enumerated pixel by pixel.
        std::unordered_map<std::uint64_t, std::uint32_t> slot_of;
        for (std::size_t p = 0; p < npix; ++p) {
            for (std::size_t i = cover_start_[p]; i < cover_start_[p + 1]; ++i) {
                for (std::size_t j = i; j < cover_start_[p + 1]; ++j) {
                    const std::uint64_t key =
                        (static_cast<std::uint64_t>(cover_site_[i]) << 32) | cover_site_[j];
                    auto [it, inserted] = slot_of.emplace(key, static_cast<std::uint32_t>(slot_pairs_.size()));
                    if (inserted) {
                        slot_pairs_.push_back({cover_site_[i], cover_site_[j]});
                    }
                    pair_slot_.push_back(it->second);
                }
            }
        }
        lambda_.assign(npix, 0.0);
        weight_.assign(npix, 0.0);
        residual_.assign(npix, 0.0);
    }

    std::size_t unknowns() const { return sites_.size() + 1; }
    const std::vector<std::size_t>& sites() const { return sites_; }

    // lambda, weights and residuals (model - frame) at beta; returns the weighted objective.
    double evaluate(const Eigen::VectorXd& beta) {
        const double g = camera_.gain;
        const double var_read = camera_.readout_sigma * camera_.readout_sigma;
        const double o = beta(beta.size() - 1);
        double objective = 0.0;
        for (std::size_t p = 0; p < lambda_.size(); ++p) {
            double lam = options_.background;
            for (std::size_t i = cover_start_[p]; i < cover_start_[p + 1]; ++i) {
                lam += cover_weight_[i] * beta(cover_site_[i]);
            }
            lambda_[p] = lam;
            weight_[p] = 1.0 / std::max(var_read + std::max(lam, 0.0) / (g * g), kMinVariance);
            const int x = region_.x0 + static_cast<int>(p % region_.width());
            const int y = region_.y0 + static_cast<int>(p / region_.width());
            residual_[p] = o + lam / g - frame_(x, y);
            objective += weight_[p] * residual_[p] * residual_[p];
        }
        return objective;
    }

    double residual_norm() const {
        double s = 0.0;
        for (double r : residual_) {
            s += r * r;
        }
        return std::sqrt(s);
    }

    Eigen::VectorXd gradient() const {
        const double g = camera_.gain;
        Eigen::VectorXd out = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(unknowns()));
        const auto off = static_cast<Eigen::Index>(sites_.size());
        for (std::size_t p = 0; p < residual_.size(); ++p) {
            const double wr = weight_[p] * residual_[p];
            for (std::size_t i = cover_start_[p]; i < cover_start_[p + 1]; ++i) {
                out(cover_site_[i]) += wr * cover_weight_[i] / g;
            }
            out(off) += wr;
        }
        return out;
    }

    // J^T W J with the current weights.
    Eigen::SparseMatrix<double> normal_matrix() const {
        const double g = camera_.gain;
        std::vector<double> pair_value(slot_pairs_.size(), 0.0);
        std::vector<double> offset_col(sites_.size(), 0.0);
        double offset_diag = 0.0;
        std::size_t k = 0;
        for (std::size_t p = 0; p < weight_.size(); ++p) {
            const double w = weight_[p];
            for (std::size_t i = cover_start_[p]; i < cover_start_[p + 1]; ++i) {
                const double wi = w * cover_weight_[i];
                offset_col[cover_site_[i]] += wi;
                for (std::size_t j = i; j < cover_start_[p + 1]; ++j) {
                    pair_value[pair_slot_[k++]] += wi * cover_weight_[j];
                }
            }
            offset_diag += w;
        }
        std::vector<Eigen::Triplet<double>> triplets;
        triplets.reserve(2 * slot_pairs_.size() + 2 * sites_.size() + 1);
        for (std::size_t s = 0; s < slot_pairs_.size(); ++s) {
            const auto [a, b] = slot_pairs_[s];
            const double v = pair_value[s] / (g * g);
            triplets.emplace_back(a, b, v);
            if (a != b) {
                triplets.emplace_back(b, a, v);
            }
        }
        const auto off = static_cast<int>(sites_.size());
        for (std::size_t l = 0; l < sites_.size(); ++l) {
            triplets.emplace_back(static_cast<int>(l), off, offset_col[l] / g);
            triplets.emplace_back(off, static_cast<int>(l), offset_col[l] / g);
        }
        triplets.emplace_back(off, off, offset_diag);
        const auto m = static_cast<Eigen::Index>(unknowns());
        Eigen::SparseMatrix<double> h(m, m);
        h.setFromTriplets(triplets.begin(), triplets.end());
        return h;
    }

    // Frozen-weight objective after moving beta by -delta.
    double objective_after(const Eigen::VectorXd& delta) const {
        const double g = camera_.gain;
        const double d_off = delta(delta.size() - 1);
        double s = 0.0;
        for (std::size_t p = 0; p < residual_.size(); ++p) {
            double jd = d_off;
            for (std::size_t i = cover_start_[p]; i < cover_start_[p + 1]; ++i) {
                jd += cover_weight_[i] * delta(cover_site_[i]) / g;
            }
            const double r = residual_[p] - jd;
            s += weight_[p] * r * r;
        }
        return s;
    }

private:
    std::size_t pixel_index(int x, int y) const {
        return static_cast<std::size_t>(y - region_.y0) * region_.width() + (x - region_.x0);
    }

    const ImageD& frame_;
    Rect region_;
    std::vector<std::size_t> sites_;
    const CameraModel& camera_;
    const GnsOptions& options_;
    std::vector<std::size_t> cover_start_;
    std::vector<std::uint32_t> cover_site_;
    std::vector<double> cover_weight_;
    std::vector<std::pair<std::uint32_t, std::uint32_t>> slot_pairs_;
    std::vector<std::uint32_t> pair_slot_;
    std::vector<double> lambda_, weight_, residual_;
};

SolverState solve_problem(GnsProblem& problem, Eigen::VectorXd beta, const GnsOptions& options) {
    SolverState state;
    const int cg_cap = options.cg_max_iterations > 0 ? options.cg_max_iterations
                                                     : 10 * static_cast<int>(problem.unknowns());
    Eigen::SparseMatrix<double> h;
    int since_refresh = 0;
    bool have_h = false;
    for (int it = 0; it < options.max_iterations; ++it) {
        const double f0 = problem.evaluate(beta);
        const Eigen::VectorXd grad = problem.gradient();
        Eigen::VectorXd delta;
        double f1 = 0.0;
        for (int attempt = 0;; ++attempt) {
            const bool fresh = !have_h || since_refresh >= options.refresh_every || attempt > 0;
            if (fresh) {
                h = problem.normal_matrix();
                have_h = true;
                since_refresh = 0;
                ++state.refreshes;
            }
            const CgReport cg = conjugate_gradient(h, grad, delta, options.cg_tolerance, cg_cap);
            if (!cg.converged) {
                std::ostringstream msg;
                msg << "conjugate gradient did not reach relative residual " << options.cg_tolerance
                    << " in " << cg.iterations << " iterations (reached " << cg.relative_residual
                    << ") at Gauss-Newton iteration " << it;
                throw ConvergenceError(msg.str());
            }
            state.cg_iterations.push_back(cg.iterations);
            f1 = problem.objective_after(delta);
            // A stale J^T W J may give a poor step; retry once with fresh weights.
            if (f1 <= f0 * (1.0 + 1e-12) + 1e-300 || fresh) {
                break;
            }
        }
        ++since_refresh;
        beta -= delta;
        state.iterations = it + 1;
        state.objective_start.push_back(f0);
        state.objective.push_back(f1);
        if (delta.cwiseAbs().maxCoeff() < options.step_tolerance) {
            state.converged = true;
            break;
        }
    }
    problem.evaluate(beta);
    state.residual_norm.push_back(problem.residual_norm());
    state.beta = std::move(beta);
    return state;
}

} // namespace

GnsResult gauss_newton_solve(const ImageD& frame, const LatticeGeometry& geometry,
                             std::span<const PointSpreadFunction> psfs, const CameraModel& camera,
                             const GnsOptions& options) {
    check_frame(frame, geometry);
    camera.validate();
    const std::size_t n = geometry.site_count();
    if (psfs.size() != 1 && psfs.size() != n) {
        throw InvalidArgument("gauss_newton_solve needs one PSF or one per site");
    }
    if (options.refresh_every < 1 || options.max_iterations < 1 || options.tile_size < 0) {
        throw InvalidArgument("invalid Gauss-Newton options");
    }
    std::vector<PointSpreadFunction> kernels;
    for (const auto& k : psfs) {
        kernels.push_back(options.psf_window > 0 && options.psf_window < k.window()
                              ? k.cropped(options.psf_window)
                              : k);
    }
    int half = 0;
    for (const auto& k : kernels) {
        half = std::max(half, k.half_window());
    }
    std::vector<int> ax(n), ay(n);
    for (std::size_t i = 0; i < n; ++i) {
        const SiteCenter c = geometry.site_center(i);
        ax[i] = static_cast<int>(std::lround(c.x));
        ay[i] = static_cast<int>(std::lround(c.y));
    }

    std::vector<double> start(n, 0.0);
    if (options.warm_start) {
        start = roi_sum(frame, geometry, options.warm_start_radius, camera).estimates;
    }

    const int width = frame.width();
    const int height = frame.height();
    std::vector<Rect> tiles;
    if (options.tile_size == 0) {
        tiles.push_back({0, 0, width, height});
    } else {
        for (int y = 0; y < height; y += options.tile_size) {
            for (int x = 0; x < width; x += options.tile_size) {
                tiles.push_back({x, y, std::min(x + options.tile_size, width),
                                 std::min(y + options.tile_size, height)});
            }
        }
    }

    struct TileOutcome {
        std::vector<std::size_t> owned;  // global site ids
        std::vector<double> gamma;
        SolverState state;
        bool used = false;
    };
    std::vector<TileOutcome> outcomes(tiles.size());

    auto solve_tile = [&](std::size_t t) {
        const Rect& own = tiles[t];
        // Pixels: the tile plus one kernel radius. Unknowns: every site whose kernel
        // reaches those pixels, so no light in the fit region goes unmodeled.
        const Rect ext{std::max(own.x0 - half, 0), std::max(own.y0 - half, 0),
                       std::min(own.x1 + half, width), std::min(own.y1 + half, height)};
        const Rect reach{ext.x0 - half, ext.y0 - half, ext.x1 + half, ext.y1 + half};
        std::vector<std::size_t> sites;
        std::vector<int> sx, sy;
        std::vector<const PointSpreadFunction*> sk;
        for (std::size_t i = 0; i < n; ++i) {
            if (reach.contains(ax[i], ay[i])) {
                sites.push_back(i);
                sx.push_back(ax[i]);
                sy.push_back(ay[i]);
                sk.push_back(&kernels[kernels.size() == 1 ? 0 : i]);
            }
        }
        TileOutcome& out = outcomes[t];
        for (std::size_t l = 0; l < sites.size(); ++l) {
            if (own.contains(sx[l], sy[l])) {
                out.owned.push_back(l);
            }
        }
        if (out.owned.empty()) {
            return;
        }
        GnsProblem problem(frame, ext, sites, sx, sy, sk, camera, options);
        Eigen::VectorXd beta(static_cast<Eigen::Index>(sites.size() + 1));
        for (std::size_t l = 0; l < sites.size(); ++l) {
            beta(static_cast<Eigen::Index>(l)) = start[sites[l]];
        }
        beta(beta.size() - 1) = camera.offset;
        out.state = solve_problem(problem, std::move(beta), options);
        for (std::size_t& l : out.owned) {
            out.gamma.push_back(out.state.beta(static_cast<Eigen::Index>(l)));
            l = sites[l];
        }
        out.used = true;
    };

    const unsigned workers =
        std::max(1u, std::min<unsigned>(options.threads, static_cast<unsigned>(tiles.size())));
    if (workers == 1) {
        for (std::size_t t = 0; t < tiles.size(); ++t) {
            solve_tile(t);
        }
    } else {
        std::atomic<std::size_t> next{0};
        std::exception_ptr failure;
        std::mutex failure_mutex;
        {
            std::vector<std::jthread> pool;
            for (unsigned w = 0; w < workers; ++w) {
                pool.emplace_back([&] {
                    for (std::size_t t = next++; t < tiles.size(); t = next++) {
                        try {
                            solve_tile(t);
                        } catch (...) {
                            std::lock_guard lock(failure_mutex);
                            if (!failure) {
                                failure = std::current_exception();
                            }
                        }
                    }
                });
            }
        }
        if (failure) {
            std::rethrow_exception(failure);
        }
    }

    GnsResult result;
    EstimateSet& est = result.estimates;
    est.detector = "gns";
    est.params = options.describe();
    est.estimates.assign(n, 0.0);
    est.near_border.assign(n, false);
    double offset_sum = 0.0;
    int used = 0;
    SolverState merged;
    merged.converged = true;
    for (const TileOutcome& o : outcomes) {
        if (!o.used) {
            continue;
        }
        for (std::size_t k = 0; k < o.owned.size(); ++k) {
            est.estimates[o.owned[k]] = o.gamma[k];
        }
        offset_sum += o.state.offset();
        ++used;
        if (used == 1) {
            merged = o.state;
        } else {
            merged.iterations = std::max(merged.iterations, o.state.iterations);
            merged.refreshes += o.state.refreshes;
            merged.converged = merged.converged && o.state.converged;
        }
    }
    for (std::size_t i = 0; i < n; ++i) {
        est.near_border[i] = ax[i] < half || ay[i] < half || ax[i] > width - 1 - half ||
                             ay[i] > height - 1 - half;
    }
    merged.beta.resize(static_cast<Eigen::Index>(n + 1));
    for (std::size_t i = 0; i < n; ++i) {
        merged.beta(static_cast<Eigen::Index>(i)) = est.estimates[i];
    }
    merged.beta(static_cast<Eigen::Index>(n)) = used > 0 ? offset_sum / used : camera.offset;
    result.state = std::move(merged);
    return result;
}

std::string to_string(Algorithm algo) {
    switch (algo) {
    case Algorithm::roi:
        return "roi";
    case Algorithm::wiener:
        return "wiener";
    case Algorithm::rl:
        return "rl";
    case Algorithm::gns:
        return "gns";
    }
    return "?";
}

Algorithm algorithm_from_string(const std::string& name) {
    for (Algorithm a : {Algorithm::roi, Algorithm::wiener, Algorithm::rl, Algorithm::gns}) {
        if (to_string(a) == name) {
            return a;
        }
    }
    throw InvalidArgument("unknown detector '" + name + "' (expected roi|wiener|rl|gns)");
}

std::string DetectorConfig::params() const {
    switch (algo) {
    case Algorithm::roi:
        return "radius=" + format_number(radius);
    case Algorithm::wiener:
        return "balance=" + format_number(balance) + ",read_radius=" + format_number(read_radius);
    case Algorithm::rl:
        return "iterations=" + std::to_string(iterations) + ",read_radius=" + format_number(read_radius);
    case Algorithm::gns:
        return gns.describe();
    }
    return {};
}

namespace {

double parse_double(const std::string& key, const std::string& value) {
    try {
        std::size_t used = 0;
        const double v = std::stod(value, &used);
        if (used != value.size()) {
            throw std::invalid_argument(value);
        }
        return v;
    } catch (const std::exception&) {
        throw InvalidArgument("parameter '" + key + "' expects a number, got '" + value + "'");
    }
}

int parse_int(const std::string& key, const std::string& value) {
    const double v = parse_double(key, value);
    if (v != std::floor(v)) {
        throw InvalidArgument("parameter '" + key + "' expects an integer, got '" + value + "'");
    }
    return static_cast<int>(v);
}

bool parse_bool(const std::string& key, const std::string& value) {
    if (value == "1" || value == "true" || value == "on") {
        return true;
    }
    if (value == "0" || value == "false" || value == "off") {
        return false;
    }
    throw InvalidArgument("parameter '" + key + "' expects a boolean, got '" + value + "'");
}

} // namespace

DetectorConfig parse_detector(const std::string& algo, const std::string& params,
                              DetectorConfig config) {
    config.algo = algorithm_from_string(algo);
    std::stringstream ss(params);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) {
            continue;
        }
        const auto eq = item.find('=');
        if (eq == std::string::npos) {
            throw InvalidArgument("detector parameter '" + item + "' is not of the form key=value");
        }
        const std::string key = item.substr(0, eq);
        const std::string value = item.substr(eq + 1);
        bool known = true;
        switch (config.algo) {
        case Algorithm::roi:
            if (key == "radius") {
                config.radius = parse_double(key, value);
            } else {
                known = false;
            }
            break;
        case Algorithm::wiener:
            if (key == "balance") {
                config.balance = parse_double(key, value);
            } else if (key == "read_radius") {
                config.read_radius = parse_double(key, value);
            } else {
                known = false;
            }
            break;
        case Algorithm::rl:
            if (key == "iterations") {
                config.iterations = parse_int(key, value);
            } else if (key == "read_radius") {
                config.read_radius = parse_double(key, value);
            } else {
                known = false;
            }
            break;
        case Algorithm::gns:
            if (key == "window" || key == "psf_window") {
                config.gns.psf_window = parse_int(key, value);
            } else if (key == "tile" || key == "tile_size") {
                config.gns.tile_size = parse_int(key, value);
            } else if (key == "refresh" || key == "refresh_every") {
                config.gns.refresh_every = parse_int(key, value);
            } else if (key == "cg_tol" || key == "cg_tolerance") {
                config.gns.cg_tolerance = parse_double(key, value);
            } else if (key == "cg_max" || key == "cg_max_iterations") {
                config.gns.cg_max_iterations = parse_int(key, value);
            } else if (key == "max_iter" || key == "max_iterations") {
                config.gns.max_iterations = parse_int(key, value);
            } else if (key == "tol" || key == "step_tolerance") {
                config.gns.step_tolerance = parse_double(key, value);
            } else if (key == "warm_start") {
                config.gns.warm_start = parse_bool(key, value);
            } else if (key == "warm_radius" || key == "warm_start_radius") {
                config.gns.warm_start_radius = parse_double(key, value);
            } else if (key == "threads") {
                config.gns.threads = static_cast<unsigned>(parse_int(key, value));
            } else {
                known = false;
            }
            break;
        }
        if (!known) {
            throw InvalidArgument("unknown parameter '" + key + "' for detector " + algo);
        }
    }
    return config;
}

EstimateSet run_detector(const DetectorConfig& config, const ImageD& frame,
                         const DetectorContext& context) {
    if (context.psfs.empty()) {
        throw InvalidArgument("detector context has no PSF");
    }
    const CameraModel& camera = context.camera;
    const PointSpreadFunction& psf = context.psfs.front();
    const auto t0 = std::chrono::steady_clock::now();
    EstimateSet out;
    switch (config.algo) {
    case Algorithm::roi:
        out = roi_sum(frame, context.geometry, config.radius, camera);
        break;
    case Algorithm::wiener: {
        ImageD shifted = frame;
        for (double& v : shifted.pixels()) {
            v -= camera.offset;
        }
        const ImageD image = wiener_deconvolve(shifted, psf, config.balance);
        out = deconvolution_readout(image, context.geometry, config.read_radius, camera,
                                    psf.half_window());
        break;
    }
    case Algorithm::rl: {
        const ImageD image = richardson_lucy(frame, psf, config.iterations, camera);
        out = deconvolution_readout(image, context.geometry, config.read_radius, camera,
                                    psf.half_window());
        break;
    }
    case Algorithm::gns: {
        GnsOptions options = config.gns;
        options.background = camera.background_at(context.exposure);
        out = gauss_newton_solve(frame, context.geometry, context.psfs, camera, options).estimates;
        break;
    }
    }
    out.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    out.detector = to_string(config.algo);
    out.params = config.params();
    return out;
}

} // namespace atomdet
