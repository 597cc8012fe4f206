#pragma once

#include "atomdet/optics.hpp"

#include <iosfwd>
#include <vector>

namespace atomdet {

/// Photoelectron counts k whose Poisson mass is at least epsilon.
struct PoissonSupport {
    long k_min = 0;
    long k_max = 0;

    long size() const noexcept { return k_max - k_min + 1; }
    bool contains(long k) const noexcept { return k >= k_min && k <= k_max; }
};

/// Smallest interval [k_min, k_max] outside of which every term Poisson(lambda, k) < epsilon.
PoissonSupport poisson_support(double lambda, double epsilon = 1e-8);

/// log Poisson(lambda, k), computed in log space so lambda ~ 1e4 does not overflow.
double log_poisson_pmf(double lambda, long k);

enum class SumOrder { ascending, descending };

/// Pixel-value density p(q) of the Poisson-Gaussian camera model on the grid
/// q_j = (first_index + j) * step, step = 0.1 counts. Also carries dp/dlambda;
/// the partial with respect to gamma_i is PSF_i(x) * dp/dlambda.
class PdfAccumulator {
public:
    static constexpr double step = 0.1;

    PdfAccumulator() = default;
    PdfAccumulator(long first_index, std::vector<double> density, std::vector<double> d_lambda,
                   double lambda);

    long first_index() const noexcept { return first_; }
    std::size_t size() const noexcept { return density_.size(); }
    double q(std::size_t j) const noexcept { return static_cast<double>(first_ + static_cast<long>(j)) * step; }
    double lambda() const noexcept { return lambda_; }

    const std::vector<double>& density() const noexcept { return density_; }
    const std::vector<double>& d_lambda() const noexcept { return d_lambda_; }

    /// PSF_i(x) * dp/dlambda on the same grid.
    std::vector<double> partial(double psf_weight) const;

    /// Linear interpolation between grid points; zero outside the grid.
    double density_at(double q) const;

    /// Trapezoid rule on the 0.1 grid.
    double integral() const;
    double mean() const;

    /// Two-column text dump: q density.
    void dump(std::ostream& out) const;

private:
    long first_ = 0;
    std::vector<double> density_;
    std::vector<double> d_lambda_;
    double lambda_ = 0.0;
};

/// Density for a pixel with expected electron count `lambda`. Requires sigma > 0;
/// with sigma = 0 the density degenerates to a comb and callers must use the
/// discrete Poisson path (fisher_weight handles this).
PdfAccumulator poisson_gaussian_pdf(double lambda, const CameraModel& camera, double epsilon = 1e-8,
                                    SumOrder order = SumOrder::ascending);

/// p(q, x, gamma) for pixel (x, y) of the scene.
PdfAccumulator pixel_pdf(int x, int y, const Scene& scene, const CameraModel& camera,
                         double epsilon = 1e-8);

/// d p(q, x, gamma) / d gamma_site on the grid of pixel_pdf(x, y, ...).
/// Throws ModelError when lambda(x) = 0.
std::vector<double> pixel_pdf_partial(int x, int y, std::size_t site, const Scene& scene,
                                      const CameraModel& camera, double epsilon = 1e-8);

/// Per-pixel Fisher information with respect to lambda:
///   integral (dp/dlambda)^2 / p dq.
/// The Fisher entry of sites (i, j) at this pixel is PSF_i PSF_j times this value.
/// With sigma = 0 the discrete sum over k of P(k) ((k - lambda) / lambda)^2 is used.
double fisher_weight(double lambda, const CameraModel& camera, double epsilon = 1e-8);

} // namespace atomdet
