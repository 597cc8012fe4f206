#include "atomdet/optics.hpp"

#include "atomdet/error.hpp"

#include <bit>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <sstream>

namespace atomdet {

namespace {

// First zero of J1.
constexpr double kAiryFirstZero = 3.8317059702075125;

bool is_integral(double v) { return std::abs(v - std::round(v)) < 1e-12; }

void check_window(int window) {
    if (window < 1 || window % 2 == 0) {
        throw InvalidArgument("PSF window must be a positive odd number, got " +
                              std::to_string(window));
    }
}

PointSpreadFunction normalized_kernel(ImageD weights) {
    double total = 0.0;
    for (double v : weights.pixels()) {
        total += v;
    }
    if (!(total > 0.0)) {
        throw InvalidArgument("PSF kernel has no mass");
    }
    for (double& v : weights.pixels()) {
        v /= total;
    }
    return PointSpreadFunction(std::move(weights));
}

} // namespace

LatticeGeometry::LatticeGeometry(int rows, int cols, double spacing, double origin_x,
                                 double origin_y, int image_width, int image_height)
    : rows_(rows), cols_(cols), spacing_(spacing), origin_x_(origin_x), origin_y_(origin_y),
      width_(image_width), height_(image_height) {
    if (rows < 0 || cols < 0) {
        throw InvalidArgument("lattice rows/cols must be non-negative");
    }
    if (!(spacing > 0.0)) {
        throw InvalidArgument("lattice spacing must be positive");
    }
    if (image_width <= 0 || image_height <= 0) {
        throw InvalidArgument("image size must be positive");
    }
    for (std::size_t i = 0; i < site_count(); ++i) {
        const SiteCenter c = site_center(i);
        if (c.x < 0.0 || c.y < 0.0 || c.x > image_width - 1 || c.y > image_height - 1) {
            std::ostringstream msg;
            msg << "site " << i << " at (" << c.x << ", " << c.y << ") lies outside the "
                << image_width << "x" << image_height << " frame";
            throw InvalidArgument(msg.str());
        }
    }
}

LatticeGeometry LatticeGeometry::centered(int rows, int cols, double spacing, int image_width,
                                          int image_height) {
    const double ox = std::floor((image_width - 1 - (cols - 1) * spacing) / 2.0);
    const double oy = std::floor((image_height - 1 - (rows - 1) * spacing) / 2.0);
    return LatticeGeometry(rows, cols, spacing, ox, oy, image_width, image_height);
}

std::size_t LatticeGeometry::site_index(int row, int col) const {
    if (row < 0 || col < 0 || row >= rows_ || col >= cols_) {
        throw InvalidArgument("site grid position out of range");
    }
    return static_cast<std::size_t>(row) * cols_ + col;
}

SiteCenter LatticeGeometry::site_center(std::size_t i) const {
    return {origin_x_ + site_col(i) * spacing_, origin_y_ + site_row(i) * spacing_};
}

bool LatticeGeometry::pixel_aligned() const {
    return is_integral(origin_x_) && is_integral(origin_y_) &&
           (is_integral(spacing_) || (rows_ <= 1 && cols_ <= 1));
}

PointSpreadFunction::PointSpreadFunction(ImageD weights) : weights_(std::move(weights)) {
    if (weights_.width() != weights_.height()) {
        throw InvalidArgument("PSF window must be square");
    }
    check_window(weights_.width());
    for (double v : weights_.pixels()) {
        if (!(v >= 0.0) || !std::isfinite(v)) {
            throw InvalidArgument("PSF weights must be finite and non-negative");
        }
    }
    if (mass() > 1.0 + 1e-9) {
        throw InvalidArgument("PSF mass exceeds 1");
    }
}

double PointSpreadFunction::mass() const {
    const auto px = weights_.pixels();
    return std::accumulate(px.begin(), px.end(), 0.0);
}

double PointSpreadFunction::max_weight() const {
    double m = 0.0;
    for (double v : weights_.pixels()) {
        m = std::max(m, v);
    }
    return m;
}

PointSpreadFunction PointSpreadFunction::cropped(int window) const {
    check_window(window);
    if (window >= this->window()) {
        return *this;
    }
    const int off = (this->window() - window) / 2;
    ImageD out(window, window);
    for (int y = 0; y < window; ++y) {
        for (int x = 0; x < window; ++x) {
            out(x, y) = weights_(x + off, y + off);
        }
    }
    return PointSpreadFunction(std::move(out));
}

std::string to_string(PsfShape shape) {
    return shape == PsfShape::gaussian ? "gaussian" : "airy";
}

PsfShape psf_shape_from_string(const std::string& name) {
    if (name == "gaussian") {
        return PsfShape::gaussian;
    }
    if (name == "airy") {
        return PsfShape::airy;
    }
    throw InvalidArgument("unknown PSF model '" + name + "' (expected gaussian|airy)");
}

PointSpreadFunction build_gaussian_psf(int window, double width, double dx, double dy) {
    check_window(window);
    if (!(width > 0.0)) {
        throw InvalidArgument("Gaussian PSF width must be positive");
    }
    const int h = window / 2;
    ImageD w(window, window);
    const double inv = 1.0 / (2.0 * width * width);
    for (int y = 0; y < window; ++y) {
        for (int x = 0; x < window; ++x) {
            const double rx = x - h - dx;
            const double ry = y - h - dy;
            w(x, y) = std::exp(-(rx * rx + ry * ry) * inv);
        }
    }
    return normalized_kernel(std::move(w));
}

PointSpreadFunction build_airy_psf(int window, double first_zero_radius, double dx, double dy,
                                   int supersample) {
    check_window(window);
    if (!(first_zero_radius > 0.0)) {
        throw InvalidArgument("Airy PSF radius must be positive");
    }
    if (supersample < 1) {
        throw InvalidArgument("supersample must be >= 1");
    }
    const int h = window / 2;
    const double scale = kAiryFirstZero / first_zero_radius;
    ImageD w(window, window);
    for (int y = 0; y < window; ++y) {
        for (int x = 0; x < window; ++x) {
            double acc = 0.0;
            for (int sy = 0; sy < supersample; ++sy) {
                for (int sx = 0; sx < supersample; ++sx) {
                    const double px = x - h - dx + (sx + 0.5) / supersample - 0.5;
                    const double py = y - h - dy + (sy + 0.5) / supersample - 0.5;
                    const double v = std::hypot(px, py) * scale;
                    double airy = 1.0;
                    if (v > 1e-8) {
                        const double a = 2.0 * std::cyl_bessel_j(1.0, v) / v;
                        airy = a * a;
                    }
                    acc += airy;
                }
            }
            w(x, y) = acc;
        }
    }
    return normalized_kernel(std::move(w));
}

PointSpreadFunction build_psf(const PsfModel& model, double dx, double dy) {
    switch (model.shape) {
    case PsfShape::gaussian:
        return build_gaussian_psf(model.window, model.width, dx, dy);
    case PsfShape::airy:
        return build_airy_psf(model.window, model.width, dx, dy);
    }
    throw InvalidArgument("unknown PSF shape");
}

namespace {

void put_le(std::ofstream& out, std::uint64_t v, int bytes) {
    for (int b = 0; b < bytes; ++b) {
        out.put(static_cast<char>((v >> (8 * b)) & 0xFF));
    }
}

std::uint64_t get_le(std::ifstream& in, int bytes) {
    std::uint64_t v = 0;
    for (int b = 0; b < bytes; ++b) {
        const int c = in.get();
        if (c == std::char_traits<char>::eof()) {
            throw IoError("truncated PSF file");
        }
        v |= static_cast<std::uint64_t>(c & 0xFF) << (8 * b);
    }
    return v;
}

} // namespace

void write_psf(const PointSpreadFunction& psf, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw IoError("cannot write " + path.string());
    }
    put_le(out, static_cast<std::uint32_t>(psf.window()), 4);
    put_le(out, static_cast<std::uint32_t>(psf.window()), 4);
    for (double w : psf.weights().pixels()) {
        put_le(out, std::bit_cast<std::uint64_t>(w), 8);
    }
    if (!out) {
        throw IoError("write failed for " + path.string());
    }
}

PointSpreadFunction read_psf(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open " + path.string());
    }
    const auto width = static_cast<std::int32_t>(get_le(in, 4));
    const auto height = static_cast<std::int32_t>(get_le(in, 4));
    if (width <= 0 || height <= 0 || width > 100000 || height > 100000) {
        throw IoError("bad PSF header in " + path.string());
    }
    ImageD w(width, height);
    for (double& v : w.pixels()) {
        v = std::bit_cast<double>(get_le(in, 8));
    }
    return PointSpreadFunction(std::move(w));
}

void CameraModel::validate() const {
    if (!(gain > 0.0)) {
        throw InvalidArgument("camera gain must be positive");
    }
    if (!(readout_sigma >= 0.0)) {
        throw InvalidArgument("readout sigma must be non-negative");
    }
    if (!(background >= 0.0) || !(background_rate >= 0.0)) {
        throw InvalidArgument("background must be non-negative");
    }
    if (max_count <= 0 || !(offset >= 0.0) || !(offset < max_count)) {
        throw InvalidArgument("camera offset must lie in [0, max_count)");
    }
}

CameraModel CameraModel::at_exposure(double exposure) const {
    CameraModel out = *this;
    out.background = background_at(exposure);
    out.background_rate = 0.0;
    return out;
}

int Scene::anchor_x(std::size_t site) const {
    return static_cast<int>(std::lround(geometry.site_center(site).x));
}

int Scene::anchor_y(std::size_t site) const {
    return static_cast<int>(std::lround(geometry.site_center(site).y));
}

void Scene::validate() const {
    const std::size_t n = site_count();
    if (gamma.size() != n || occupancy.size() != n) {
        throw InvalidArgument("scene gamma/occupancy length must equal rows*cols");
    }
    if (psfs.size() != 1 && psfs.size() != n) {
        throw InvalidArgument("scene needs one shared PSF or one PSF per site");
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (!(gamma[i] >= 0.0) || !std::isfinite(gamma[i])) {
            throw InvalidArgument("gamma must be finite and non-negative");
        }
        if (!occupancy[i] && gamma[i] != 0.0) {
            throw InvalidArgument("gamma must be zero at empty site " + std::to_string(i));
        }
    }
}

Scene make_scene(const LatticeGeometry& geometry, const PsfModel& psf, std::vector<double> gamma,
                 Occupancy occupancy, double exposure) {
    Scene scene;
    scene.geometry = geometry;
    scene.gamma = std::move(gamma);
    scene.occupancy = std::move(occupancy);
    scene.exposure = exposure;
    if (geometry.pixel_aligned()) {
        scene.psfs.push_back(build_psf(psf));
    } else {
        scene.psfs.reserve(geometry.site_count());
        for (std::size_t i = 0; i < geometry.site_count(); ++i) {
            const SiteCenter c = geometry.site_center(i);
            scene.psfs.push_back(build_psf(psf, c.x - std::round(c.x), c.y - std::round(c.y)));
        }
    }
    scene.validate();
    return scene;
}

Scene make_scene(const LatticeGeometry& geometry, const PointSpreadFunction& psf,
                 std::vector<double> gamma, Occupancy occupancy, double exposure) {
    if (!geometry.pixel_aligned()) {
        throw InvalidArgument("a shared sampled kernel requires a pixel-aligned lattice");
    }
    Scene scene{geometry, {psf}, std::move(gamma), std::move(occupancy), exposure};
    scene.validate();
    return scene;
}

ImageD expected_electron_map(const Scene& scene, const CameraModel& camera) {
    const double b = camera.background_at(scene.exposure);
    ImageD lambda(scene.geometry.image_width(), scene.geometry.image_height(), b);
    for (std::size_t i = 0; i < scene.site_count(); ++i) {
        const double g = scene.gamma[i];
        if (g == 0.0) {
            continue;
        }
        for_each_psf_pixel(scene, i, [&](int x, int y, double w) { lambda(x, y) += w * g; });
    }
    return lambda;
}

std::vector<double> gamma_from_exposure(const Occupancy& occupancy, double rate, double exposure) {
    if (!(rate >= 0.0) || !(exposure >= 0.0)) {
        throw InvalidArgument("rate and exposure must be non-negative");
    }
    std::vector<double> gamma(occupancy.size(), 0.0);
    for (std::size_t i = 0; i < occupancy.size(); ++i) {
        if (occupancy[i]) {
            gamma[i] = rate * exposure;
        }
    }
    return gamma;
}

double photoelectron_rate(double scattering_rate, double quantum_efficiency,
                          double numerical_aperture) {
    if (!(numerical_aperture >= 0.0) || numerical_aperture > 1.0) {
        throw InvalidArgument("numerical aperture must lie in [0, 1]");
    }
    const double solid_angle_fraction =
        (1.0 - std::sqrt(1.0 - numerical_aperture * numerical_aperture)) / 2.0;
    return scattering_rate * quantum_efficiency * solid_angle_fraction;
}

} // namespace atomdet
