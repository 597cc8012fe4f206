#pragma once

#include <algorithm>
#include <cassert>
#include <cstddef>
#include <span>
#include <vector>

namespace atomdet {

/// Row-major 2D grid. x is the column, y is the row.
template <typename T>
class Image {
public:
    Image() = default;
    Image(int width, int height, T fill = T{})
        : width_(width), height_(height),
          data_(static_cast<std::size_t>(width) * static_cast<std::size_t>(height), fill) {}

    int width() const noexcept { return width_; }
    int height() const noexcept { return height_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    bool contains(int x, int y) const noexcept {
        return x >= 0 && y >= 0 && x < width_ && y < height_;
    }

    T& operator()(int x, int y) {
        assert(contains(x, y));
        return data_[static_cast<std::size_t>(y) * width_ + x];
    }
    const T& operator()(int x, int y) const {
        assert(contains(x, y));
        return data_[static_cast<std::size_t>(y) * width_ + x];
    }

    std::span<T> pixels() noexcept { return data_; }
    std::span<const T> pixels() const noexcept { return data_; }
    std::span<T> row(int y) noexcept {
        return std::span<T>(data_).subspan(static_cast<std::size_t>(y) * width_, width_);
    }
    std::span<const T> row(int y) const noexcept {
        return std::span<const T>(data_).subspan(static_cast<std::size_t>(y) * width_, width_);
    }

    T* data() noexcept { return data_.data(); }
    const T* data() const noexcept { return data_.data(); }

    void fill(T value) { std::fill(data_.begin(), data_.end(), value); }

    template <typename U>
    Image<U> cast() const {
        Image<U> out(width_, height_);
        std::transform(data_.begin(), data_.end(), out.pixels().begin(),
                       [](const T& v) { return static_cast<U>(v); });
        return out;
    }

    bool operator==(const Image&) const = default;

private:
    int width_ = 0;
    int height_ = 0;
    std::vector<T> data_;
};

using ImageD = Image<double>;

} // namespace atomdet
