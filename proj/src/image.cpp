#include "eqr/image.hpp"

#include <algorithm>
#include <cmath>

#include "eqr/error.hpp"

namespace eqr {

std::string to_string(const Shape& shape)
{
    return std::to_string(shape.height) + "x" + std::to_string(shape.width) + "x" +
           std::to_string(shape.channels);
}

Image::Image(int height, int width, int channels, double fill)
    : shape_{height, width, channels}
{
    require(height > 0 && width > 0 && channels > 0, ErrorKind::Dimension,
            "image dimensions must be positive, got " + to_string(shape_));
    data_.assign(shape_.size(), fill);
}

Image::Image(Shape shape, std::vector<double> data) : shape_(shape), data_(std::move(data))
{
    require(shape.height > 0 && shape.width > 0 && shape.channels > 0, ErrorKind::Dimension,
            "image dimensions must be positive, got " + to_string(shape));
    require(data_.size() == shape.size(), ErrorKind::Dimension,
            "data length " + std::to_string(data_.size()) + " does not match shape " +
                to_string(shape));
}

Image Image::vector(std::vector<double> values)
{
    const int n = static_cast<int>(values.size());
    return Image(Shape{n, 1, 1}, std::move(values));
}

Image Image::channel(int ch) const
{
    require(ch >= 0 && ch < channels(), ErrorKind::Dimension, "channel index out of range");
    Image out(height(), width(), 1);
    const std::size_t n = static_cast<std::size_t>(height()) * static_cast<std::size_t>(width());
    const auto c = static_cast<std::size_t>(channels());
    for (std::size_t i = 0; i < n; ++i) out[i] = data_[i * c + static_cast<std::size_t>(ch)];
    return out;
}

void Image::set_channel(int ch, const Image& plane)
{
    require(ch >= 0 && ch < channels(), ErrorKind::Dimension, "channel index out of range");
    require(plane.height() == height() && plane.width() == width() && plane.channels() == 1,
            ErrorKind::Dimension, "plane shape does not match image");
    const std::size_t n = static_cast<std::size_t>(height()) * static_cast<std::size_t>(width());
    const auto c = static_cast<std::size_t>(channels());
    for (std::size_t i = 0; i < n; ++i) data_[i * c + static_cast<std::size_t>(ch)] = plane[i];
}

Image& Image::operator+=(const Image& other)
{
    require_same_shape(*this, other, "operator+=");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
    return *this;
}

Image& Image::operator-=(const Image& other)
{
    require_same_shape(*this, other, "operator-=");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= other.data_[i];
    return *this;
}

Image& Image::operator*=(double s) noexcept
{
    for (double& v : data_) v *= s;
    return *this;
}

Image& Image::axpy(double s, const Image& other)
{
    require_same_shape(*this, other, "axpy");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += s * other.data_[i];
    return *this;
}

bool Image::all_finite() const noexcept
{
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

void Image::require_finite(const std::string& what) const
{
    require(all_finite(), ErrorKind::Numeric, "non-finite value in " + what);
}

Image operator+(Image a, const Image& b)
{
    a += b;
    return a;
}

Image operator-(Image a, const Image& b)
{
    a -= b;
    return a;
}

Image operator*(double s, Image a)
{
    a *= s;
    return a;
}

void require_same_shape(const Image& a, const Image& b, const char* context)
{
    if (a.shape() != b.shape()) {
        throw_error(ErrorKind::Dimension, std::string(context) + ": shape mismatch " +
                                              to_string(a.shape()) + " vs " + to_string(b.shape()));
    }
}

double dot(const Image& a, const Image& b)
{
    require_same_shape(a, b, "dot");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double squared_norm(const Image& a) noexcept
{
    double s = 0.0;
    for (double v : a.data()) s += v * v;
    return s;
}

double norm(const Image& a) noexcept { return std::sqrt(squared_norm(a)); }

double max_abs_difference(const Image& a, const Image& b)
{
    require_same_shape(a, b, "max_abs_difference");
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

double sum(const Image& a) noexcept
{
    double s = 0.0;
    for (double v : a.data()) s += v;
    return s;
}

Image clamp(Image a, double lo, double hi) noexcept
{
    for (double& v : a.data()) v = std::clamp(v, lo, hi);
    return a;
}

}  // namespace eqr
