#pragma once

#include "atomdet/image.hpp"
#include "atomdet/optics.hpp"

#include <complex>
#include <memory>
#include <vector>

namespace atomdet {

using Spectrum = std::vector<std::complex<double>>;

/// Real 2D transform of a fixed frame size (half spectrum, width / 2 + 1 columns).
/// Plans are shared between instances of the same size and executed on
/// caller-owned arrays, so concurrent use from several threads is safe.
class Fft2D {
public:
    Fft2D(int width, int height);

    int width() const noexcept { return width_; }
    int height() const noexcept { return height_; }
    int spectrum_width() const noexcept { return width_ / 2 + 1; }
    std::size_t spectrum_size() const noexcept {
        return static_cast<std::size_t>(spectrum_width()) * height_;
    }

    Spectrum forward(const ImageD& image) const;
    /// Normalized inverse: inverse(forward(x)) == x.
    ImageD inverse(const Spectrum& spectrum) const;

    /// Transfer function of `psf` with its center wrapped to pixel (0, 0).
    Spectrum transfer_function(const PointSpreadFunction& psf) const;

    /// Cyclic convolution with the kernel whose transfer function is `h`
    /// (conjugated for correlation, i.e. the flipped kernel).
    ImageD convolve(const ImageD& image, const Spectrum& h, bool conjugate = false) const;

    struct Plans;

private:
    int width_;
    int height_;
    std::shared_ptr<const Plans> plans_;
};

} // namespace atomdet
