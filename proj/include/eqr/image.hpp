#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace eqr {

struct Shape {
    int height = 0;
    int width = 0;
    int channels = 0;

    std::size_t size() const noexcept
    {
        return static_cast<std::size_t>(height) * static_cast<std::size_t>(width) *
               static_cast<std::size_t>(channels);
    }
    friend bool operator==(const Shape&, const Shape&) = default;
};

std::string to_string(const Shape& shape);

/// Dense height x width x channels buffer of doubles, row-major with
/// interleaved channels: index = (row * width + col) * channels + channel.
/// Holds images, kernels and flat vectors alike.
class Image {
public:
    Image() = default;
    Image(int height, int width, int channels = 1, double fill = 0.0);
    Image(Shape shape, std::vector<double> data);

    static Image zeros(Shape shape) { return Image(shape.height, shape.width, shape.channels); }
    static Image zeros_like(const Image& other) { return zeros(other.shape()); }
    static Image constant(Shape shape, double value)
    {
        return Image(shape.height, shape.width, shape.channels, value);
    }
    /// Column vector of length n (n x 1 x 1).
    static Image vector(std::vector<double> values);

    int height() const noexcept { return shape_.height; }
    int width() const noexcept { return shape_.width; }
    int channels() const noexcept { return shape_.channels; }
    const Shape& shape() const noexcept { return shape_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    std::span<double> data() noexcept { return data_; }
    std::span<const double> data() const noexcept { return data_; }
    const std::vector<double>& values() const noexcept { return data_; }

    double& operator[](std::size_t i) noexcept { return data_[i]; }
    double operator[](std::size_t i) const noexcept { return data_[i]; }

    double& at(int row, int col, int ch = 0) noexcept { return data_[index(row, col, ch)]; }
    double at(int row, int col, int ch = 0) const noexcept { return data_[index(row, col, ch)]; }

    std::size_t index(int row, int col, int ch = 0) const noexcept
    {
        return (static_cast<std::size_t>(row) * static_cast<std::size_t>(shape_.width) +
                static_cast<std::size_t>(col)) *
                   static_cast<std::size_t>(shape_.channels) +
               static_cast<std::size_t>(ch);
    }

    /// Extract one channel as a single-channel image.
    Image channel(int ch) const;
    void set_channel(int ch, const Image& plane);

    Image& operator+=(const Image& other);
    Image& operator-=(const Image& other);
    Image& operator*=(double s) noexcept;
    /// this += s * other
    Image& axpy(double s, const Image& other);

    bool all_finite() const noexcept;
    /// Throws a numeric error naming `what` when any entry is NaN or infinite.
    void require_finite(const std::string& what) const;

    friend bool operator==(const Image&, const Image&) = default;

private:
    Shape shape_{};
    std::vector<double> data_;
};

Image operator+(Image a, const Image& b);
Image operator-(Image a, const Image& b);
Image operator*(double s, Image a);

void require_same_shape(const Image& a, const Image& b, const char* context);

double dot(const Image& a, const Image& b);
double squared_norm(const Image& a) noexcept;
double norm(const Image& a) noexcept;
double max_abs_difference(const Image& a, const Image& b);
double sum(const Image& a) noexcept;

/// Clamp every entry into [lo, hi].
Image clamp(Image a, double lo, double hi) noexcept;

}  // namespace eqr
