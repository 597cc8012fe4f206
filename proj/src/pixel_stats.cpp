#include "atomdet/pixel_stats.hpp"

#include "atomdet/error.hpp"

#include <cmath>
#include <numbers>
#include <ostream>
#include <sstream>

namespace atomdet {

double log_poisson_pmf(double lambda, long k) {
    if (k < 0) {
        return -INFINITY;
    }
    if (lambda == 0.0) {
        return k == 0 ? 0.0 : -INFINITY;
    }
    return static_cast<double>(k) * std::log(lambda) - lambda - std::lgamma(static_cast<double>(k) + 1.0);
}

PoissonSupport poisson_support(double lambda, double epsilon) {
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) {
        throw InvalidArgument("poisson_support: lambda must be finite and non-negative");
    }
    if (!(epsilon > 0.0 && epsilon < 1.0)) {
        throw InvalidArgument("poisson_support: epsilon must lie in (0, 1)");
    }
    if (lambda == 0.0) {
        return {0, 0};
    }
    const double log_eps = std::log(epsilon);
    const long mode = static_cast<long>(std::floor(lambda));
    // The pmf is unimodal, so {k : P(k) >= eps} is an interval around the mode.
    long lo = mode;
    while (lo > 0 && log_poisson_pmf(lambda, lo - 1) >= log_eps) {
        --lo;
    }
    long hi = mode;
    while (log_poisson_pmf(lambda, hi + 1) >= log_eps) {
        ++hi;
    }
    return {lo, hi};
}

PdfAccumulator::PdfAccumulator(long first_index, std::vector<double> density,
                               std::vector<double> d_lambda, double lambda)
    : first_(first_index), density_(std::move(density)), d_lambda_(std::move(d_lambda)),
      lambda_(lambda) {}

std::vector<double> PdfAccumulator::partial(double psf_weight) const {
    std::vector<double> out(d_lambda_.size());
    for (std::size_t j = 0; j < out.size(); ++j) {
        out[j] = psf_weight * d_lambda_[j];
    }
    return out;
}

double PdfAccumulator::density_at(double qv) const {
    if (density_.empty()) {
        return 0.0;
    }
    const double pos = qv / step - static_cast<double>(first_);
    if (pos < 0.0 || pos > static_cast<double>(density_.size() - 1)) {
        return 0.0;
    }
    const auto j = static_cast<std::size_t>(std::floor(pos));
    if (j + 1 >= density_.size()) {
        return density_.back();
    }
    const double t = pos - static_cast<double>(j);
    return (1.0 - t) * density_[j] + t * density_[j + 1];
}

double PdfAccumulator::integral() const {
    if (density_.size() < 2) {
        return 0.0;
    }
    double s = 0.0;
    for (double v : density_) {
        s += v;
    }
    s -= 0.5 * (density_.front() + density_.back());
    return s * step;
}

double PdfAccumulator::mean() const {
    if (density_.size() < 2) {
        return 0.0;
    }
    double s = 0.0;
    for (std::size_t j = 0; j < density_.size(); ++j) {
        const double w = (j == 0 || j + 1 == density_.size()) ? 0.5 : 1.0;
        s += w * q(j) * density_[j];
    }
    return s * step / integral();
}

void PdfAccumulator::dump(std::ostream& out) const {
    for (std::size_t j = 0; j < density_.size(); ++j) {
        out << q(j) << ' ' << density_[j] << '\n';
    }
}

PdfAccumulator poisson_gaussian_pdf(double lambda, const CameraModel& camera, double epsilon,
                                    SumOrder order) {
    if (!(camera.readout_sigma > 0.0)) {
        throw Unsupported("pixel density needs readout_sigma > 0; use the discrete Poisson path");
    }
    const PoissonSupport support = poisson_support(lambda, epsilon);
    const double sigma = camera.readout_sigma;
    const double half_width = sigma * std::sqrt(2.0 * std::log(1.0 / epsilon));
    const double step = PdfAccumulator::step;

    auto window = [&](long k, long& j0, long& j1) {
        const double mu = camera.offset + static_cast<double>(k) / camera.gain;
        // Strict inequality: G(q, k) > epsilon.
        j0 = static_cast<long>(std::floor((mu - half_width) / step)) + 1;
        j1 = static_cast<long>(std::ceil((mu + half_width) / step)) - 1;
    };

    long first = 0, last = 0;
    {
        long a = 0, b = 0;
        window(support.k_min, first, b);
        window(support.k_max, a, last);
    }
    const std::size_t n = static_cast<std::size_t>(last - first + 1);
    std::vector<double> density(n, 0.0);
    std::vector<double> d_lambda(n, 0.0);

    const double inv_two_var = 1.0 / (2.0 * sigma * sigma);
    const double damp = std::exp(-step * step / (sigma * sigma));
    const bool with_derivative = lambda > 0.0;

    auto accumulate = [&](long k) {
        const double pk = std::exp(log_poisson_pmf(lambda, k));
        const double factor = with_derivative ? (static_cast<double>(k) - lambda) / lambda : 0.0;
        const double mu = camera.offset + static_cast<double>(k) / camera.gain;
        long j0 = 0, j1 = 0;
        window(k, j0, j1);
        // G(q + step) = G(q) * r(q), r(q + step) = r(q) * exp(-step^2 / sigma^2).
        double dq = static_cast<double>(j0) * step - mu;
        double g = std::exp(-dq * dq * inv_two_var);
        double r = std::exp(-(2.0 * dq * step + step * step) * inv_two_var);
        for (long j = j0; j <= j1; ++j) {
            const std::size_t idx = static_cast<std::size_t>(j - first);
            const double term = pk * g;
            density[idx] += term;
            d_lambda[idx] += term * factor;
            g *= r;
            r *= damp;
        }
    };

    if (order == SumOrder::ascending) {
        for (long k = support.k_min; k <= support.k_max; ++k) {
            accumulate(k);
        }
    } else {
        for (long k = support.k_max; k >= support.k_min; --k) {
            accumulate(k);
        }
    }

    const double norm = 1.0 / (sigma * std::sqrt(2.0 * std::numbers::pi));
    for (std::size_t j = 0; j < n; ++j) {
        density[j] *= norm;
        d_lambda[j] *= norm;
    }
    return PdfAccumulator(first, std::move(density), std::move(d_lambda), lambda);
}

namespace {

double pixel_lambda(int x, int y, const Scene& scene, const CameraModel& camera) {
    if (x < 0 || y < 0 || x >= scene.geometry.image_width() || y >= scene.geometry.image_height()) {
        throw InvalidArgument("pixel outside the frame");
    }
    double lambda = camera.background_at(scene.exposure);
    for (std::size_t i = 0; i < scene.site_count(); ++i) {
        if (scene.gamma[i] != 0.0) {
            lambda += scene.psf_at(i, x, y) * scene.gamma[i];
        }
    }
    return lambda;
}

} // namespace

PdfAccumulator pixel_pdf(int x, int y, const Scene& scene, const CameraModel& camera, double epsilon) {
    return poisson_gaussian_pdf(pixel_lambda(x, y, scene, camera), camera, epsilon);
}

std::vector<double> pixel_pdf_partial(int x, int y, std::size_t site, const Scene& scene,
                                      const CameraModel& camera, double epsilon) {
    if (site >= scene.site_count()) {
        throw InvalidArgument("site index out of range");
    }
    const double lambda = pixel_lambda(x, y, scene, camera);
    if (!(lambda > 0.0)) {
        std::ostringstream msg;
        msg << "lambda = 0 at pixel (" << x << ", " << y << "); the derivative factor is singular";
        throw ModelError(msg.str());
    }
    return poisson_gaussian_pdf(lambda, camera, epsilon).partial(scene.psf_at(site, x, y));
}

double fisher_weight(double lambda, const CameraModel& camera, double epsilon) {
    if (!(lambda > 0.0)) {
        throw ModelError("Fisher information is singular at lambda = 0");
    }
    if (camera.readout_sigma == 0.0) {
        const PoissonSupport s = poisson_support(lambda, epsilon);
        double info = 0.0;
        for (long k = s.k_min; k <= s.k_max; ++k) {
            const double f = (static_cast<double>(k) - lambda) / lambda;
            info += std::exp(log_poisson_pmf(lambda, k)) * f * f;
        }
        return info;
    }
    const PdfAccumulator pdf = poisson_gaussian_pdf(lambda, camera, epsilon);
    const auto& p = pdf.density();
    const auto& d = pdf.d_lambda();
    double s = 0.0;
    for (std::size_t j = 0; j < p.size(); ++j) {
        if (p[j] > 0.0) {
            const double w = (j == 0 || j + 1 == p.size()) ? 0.5 : 1.0;
            s += w * d[j] * d[j] / p[j];
        }
    }
    return s * PdfAccumulator::step;
}

} // namespace atomdet
