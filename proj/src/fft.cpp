#include "atomdet/fft.hpp"

#include "atomdet/error.hpp"

#include <fftw3.h>

#include <map>
#include <mutex>

namespace atomdet {

struct Fft2D::Plans {
    fftw_plan r2c = nullptr;
    fftw_plan c2r = nullptr;
    ~Plans() {
        fftw_destroy_plan(r2c);
        fftw_destroy_plan(c2r);
    }
};

namespace {

// The FFTW planner is not thread-safe; execution of an existing plan is.
std::mutex& planner_mutex() {
    static std::mutex m;
    return m;
}

std::shared_ptr<const Fft2D::Plans> plans_for(int width, int height) {
    static std::map<std::pair<int, int>, std::shared_ptr<const Fft2D::Plans>> cache;
    std::lock_guard lock(planner_mutex());
    auto& slot = cache[{width, height}];
    if (!slot) {
        const std::size_t n = static_cast<std::size_t>(width) * height;
        const std::size_t nc = static_cast<std::size_t>(width / 2 + 1) * height;
        double* real = fftw_alloc_real(n);
        fftw_complex* cplx = fftw_alloc_complex(nc);
        auto plans = std::make_shared<Fft2D::Plans>();
        // Row-major: FFTW's first dimension is the slow one (rows).
        const unsigned flags = FFTW_ESTIMATE | FFTW_UNALIGNED;
        plans->r2c = fftw_plan_dft_r2c_2d(height, width, real, cplx, flags);
        plans->c2r = fftw_plan_dft_c2r_2d(height, width, cplx, real, flags | FFTW_DESTROY_INPUT);
        fftw_free(real);
        fftw_free(cplx);
        if (!plans->r2c || !plans->c2r) {
            throw ModelError("FFTW could not plan the transform");
        }
        slot = std::move(plans);
    }
    return slot;
}

} // namespace

Fft2D::Fft2D(int width, int height) : width_(width), height_(height) {
    if (width <= 0 || height <= 0) {
        throw InvalidArgument("transform size must be positive");
    }
    plans_ = plans_for(width, height);
}

Spectrum Fft2D::forward(const ImageD& image) const {
    if (image.width() != width_ || image.height() != height_) {
        throw InvalidArgument("image size does not match the transform");
    }
    ImageD in = image;  // r2c may not preserve its input under FFTW_UNALIGNED plans
    Spectrum out(spectrum_size());
    fftw_execute_dft_r2c(plans_->r2c, in.data(), reinterpret_cast<fftw_complex*>(out.data()));
    return out;
}

ImageD Fft2D::inverse(const Spectrum& spectrum) const {
    if (spectrum.size() != spectrum_size()) {
        throw InvalidArgument("spectrum size does not match the transform");
    }
    Spectrum in = spectrum;
    ImageD out(width_, height_);
    fftw_execute_dft_c2r(plans_->c2r, reinterpret_cast<fftw_complex*>(in.data()), out.data());
    const double scale = 1.0 / (static_cast<double>(width_) * height_);
    for (double& v : out.pixels()) {
        v *= scale;
    }
    return out;
}

Spectrum Fft2D::transfer_function(const PointSpreadFunction& psf) const {
    const int h = psf.half_window();
    if (psf.window() > width_ || psf.window() > height_) {
        throw InvalidArgument("PSF window larger than the frame");
    }
    ImageD kernel(width_, height_, 0.0);
    for (int dy = -h; dy <= h; ++dy) {
        for (int dx = -h; dx <= h; ++dx) {
            const int x = (dx + width_) % width_;
            const int y = (dy + height_) % height_;
            kernel(x, y) += psf.at(dx, dy);
        }
    }
    return forward(kernel);
}

ImageD Fft2D::convolve(const ImageD& image, const Spectrum& h, bool conjugate) const {
    Spectrum s = forward(image);
    for (std::size_t i = 0; i < s.size(); ++i) {
        s[i] *= conjugate ? std::conj(h[i]) : h[i];
    }
    return inverse(s);
}

} // namespace atomdet
