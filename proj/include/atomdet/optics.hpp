#pragma once

#include "atomdet/image.hpp"

#include <cstddef>
#include <filesystem>
#include <algorithm>
#include <string>
#include <vector>

namespace atomdet {

using Occupancy = std::vector<bool>;

struct SiteCenter {
    double x = 0.0;
    double y = 0.0;
};

/// Rectangular lattice of atom sites on the camera frame. Site i sits at
/// grid position (row, col) = (i / cols, i % cols).
class LatticeGeometry {
public:
    LatticeGeometry() = default;
    LatticeGeometry(int rows, int cols, double spacing, double origin_x, double origin_y,
                    int image_width, int image_height);

    /// Lattice centered in the frame, origin rounded to whole pixels.
    static LatticeGeometry centered(int rows, int cols, double spacing, int image_width,
                                    int image_height);

    int rows() const noexcept { return rows_; }
    int cols() const noexcept { return cols_; }
    double spacing() const noexcept { return spacing_; }
    double origin_x() const noexcept { return origin_x_; }
    double origin_y() const noexcept { return origin_y_; }
    int image_width() const noexcept { return width_; }
    int image_height() const noexcept { return height_; }
    std::size_t site_count() const noexcept {
        return static_cast<std::size_t>(rows_) * static_cast<std::size_t>(cols_);
    }

    std::size_t site_index(int row, int col) const;
    int site_row(std::size_t i) const { return static_cast<int>(i / cols_); }
    int site_col(std::size_t i) const { return static_cast<int>(i % cols_); }
    SiteCenter site_center(std::size_t i) const;

    /// True when every site center falls on an integer pixel.
    bool pixel_aligned() const;

    bool operator==(const LatticeGeometry&) const = default;

private:
    int rows_ = 0;
    int cols_ = 0;
    double spacing_ = 1.0;
    double origin_x_ = 0.0;
    double origin_y_ = 0.0;
    int width_ = 0;
    int height_ = 0;
};

/// Normalized point-spread kernel. weights(cx + dx, cy + dy) is the fraction
/// of a site's photoelectrons landing dx, dy pixels from its anchor pixel.
class PointSpreadFunction {
public:
    PointSpreadFunction() = default;
    explicit PointSpreadFunction(ImageD weights);

    int window() const noexcept { return weights_.width(); }
    int half_window() const noexcept { return weights_.width() / 2; }
    const ImageD& weights() const noexcept { return weights_; }

    /// Weight at offset (dx, dy) from the center; zero outside the window.
    double at(int dx, int dy) const noexcept {
        const int h = half_window();
        if (dx < -h || dx > h || dy < -h || dy > h) {
            return 0.0;
        }
        return weights_(dx + h, dy + h);
    }

    double mass() const;
    double max_weight() const;

    /// Central window x window crop. Weights are kept as-is (mass may drop below 1).
    PointSpreadFunction cropped(int window) const;

private:
    ImageD weights_;
};

enum class PsfShape { gaussian, airy };

std::string to_string(PsfShape shape);
PsfShape psf_shape_from_string(const std::string& name);

/// Analytic PSF description. `width` is the Gaussian standard deviation or the
/// radius of the first Airy dark ring, in pixels.
struct PsfModel {
    PsfShape shape = PsfShape::airy;
    double width = 5.0;
    int window = 81;
};

/// Isotropic Gaussian sampled at pixel centers (shifted by dx, dy), renormalized to unit mass.
PointSpreadFunction build_gaussian_psf(int window, double width, double dx = 0.0, double dy = 0.0);

/// Airy pattern [2 J1(v)/v]^2 with v = 3.8317 r / first_zero_radius, integrated over
/// each pixel with `supersample`^2 points and renormalized to unit mass.
PointSpreadFunction build_airy_psf(int window, double first_zero_radius, double dx = 0.0,
                                   double dy = 0.0, int supersample = 5);

PointSpreadFunction build_psf(const PsfModel& model, double dx = 0.0, double dy = 0.0);

/// Flat binary export: int32 width, int32 height, then width*height float64
/// weights, row-major, all little-endian.
void write_psf(const PointSpreadFunction& psf, const std::filesystem::path& path);
PointSpreadFunction read_psf(const std::filesystem::path& path);

struct CameraModel {
    double gain = 0.5;            // electrons per count
    double offset = 200.0;        // counts
    double readout_sigma = 1.6;   // counts
    double background = 0.1;      // electrons / pixel at zero exposure
    double background_rate = 10.0;  // electrons / pixel / second
    int max_count = 65535;

    void validate() const;

    /// b for a frame of the given exposure.
    double background_at(double exposure) const { return background + background_rate * exposure; }

    /// Copy with the background resolved for `exposure` and the rate zeroed.
    CameraModel at_exposure(double exposure) const;

    bool operator==(const CameraModel&) const = default;
};

/// Ground-truth imaging scene. `psfs` holds either one shared kernel or one per site.
struct Scene {
    LatticeGeometry geometry;
    std::vector<PointSpreadFunction> psfs;
    std::vector<double> gamma;
    Occupancy occupancy;
    double exposure = 0.0;

    std::size_t site_count() const noexcept { return geometry.site_count(); }
    const PointSpreadFunction& psf(std::size_t site) const {
        return psfs.size() == 1 ? psfs.front() : psfs[site];
    }
    /// Pixel on which the site's kernel is centered.
    int anchor_x(std::size_t site) const;
    int anchor_y(std::size_t site) const;

    /// PSF_i(x, y): fraction of site i's electrons landing on pixel (x, y).
    double psf_at(std::size_t site, int x, int y) const {
        return psf(site).at(x - anchor_x(site), y - anchor_y(site));
    }

    void validate() const;
};

/// Builds a scene, sampling per-site kernels when the lattice is not pixel aligned.
Scene make_scene(const LatticeGeometry& geometry, const PsfModel& psf, std::vector<double> gamma,
                 Occupancy occupancy, double exposure = 0.0);

/// Scene with an explicit shared kernel (pixel-aligned lattices only).
Scene make_scene(const LatticeGeometry& geometry, const PointSpreadFunction& psf,
                 std::vector<double> gamma, Occupancy occupancy, double exposure = 0.0);

/// Calls fn(x, y, weight) for every in-frame pixel of site i's kernel with nonzero weight.
template <typename Fn>
void for_each_psf_pixel(const Scene& scene, std::size_t site, Fn&& fn) {
    const PointSpreadFunction& kernel = scene.psf(site);
    const int h = kernel.half_window();
    const int ax = scene.anchor_x(site);
    const int ay = scene.anchor_y(site);
    const int x0 = std::max(ax - h, 0);
    const int x1 = std::min(ax + h, scene.geometry.image_width() - 1);
    const int y0 = std::max(ay - h, 0);
    const int y1 = std::min(ay + h, scene.geometry.image_height() - 1);
    const ImageD& w = kernel.weights();
    for (int y = y0; y <= y1; ++y) {
        for (int x = x0; x <= x1; ++x) {
            const double v = w(x - ax + h, y - ay + h);
            if (v != 0.0) {
                fn(x, y, v);
            }
        }
    }
}

/// lambda(x) = b + sum_i PSF_i(x) gamma_i, in electrons. Kernel mass falling
/// outside the frame is dropped.
ImageD expected_electron_map(const Scene& scene, const CameraModel& camera);

/// gamma_i = rate * exposure for occupied sites, 0 otherwise.
std::vector<double> gamma_from_exposure(const Occupancy& occupancy, double rate, double exposure);

/// Detected photoelectron rate of a fluorescing atom: scattering * QE * collected solid-angle fraction.
double photoelectron_rate(double scattering_rate, double quantum_efficiency, double numerical_aperture);

} // namespace atomdet
