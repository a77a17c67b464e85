#include "eqr/fidelity.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numbers>

#include "eqr/convolution.hpp"
#include "eqr/error.hpp"
#include "eqr/netpbm.hpp"

namespace eqr {
namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Eigen::Map<const RowMatrix> as_matrix(const Image& m)
{
    return {m.data().data(), m.height(), m.width()};
}

void require_divisible(const Shape& s, int factor)
{
    require(s.height % factor == 0 && s.width % factor == 0, ErrorKind::Config,
            "decimation factor " + std::to_string(factor) + " does not divide image shape " +
                to_string(s));
}

Image subsample(const Image& x, int s)
{
    Image out(x.height() / s, x.width() / s, x.channels());
    for (int r = 0; r < out.height(); ++r) {
        for (int c = 0; c < out.width(); ++c) {
            for (int p = 0; p < x.channels(); ++p) out.at(r, c, p) = x.at(r * s, c * s, p);
        }
    }
    return out;
}

Image upsample_zeros(const Image& v, int s)
{
    Image out(v.height() * s, v.width() * s, v.channels());
    for (int r = 0; r < v.height(); ++r) {
        for (int c = 0; c < v.width(); ++c) {
            for (int p = 0; p < v.channels(); ++p) out.at(r * s, c * s, p) = v.at(r, c, p);
        }
    }
    return out;
}

double parse_number(const std::string& text, const std::string& spec)
{
    double v = 0.0;
    const char* end = text.data() + text.size();
    const auto [ptr, ec] = std::from_chars(text.data(), end, v);
    require(ec == std::errc() && ptr == end, ErrorKind::Config,
            "bad number '" + text + "' in kernel spec '" + spec + "'");
    return v;
}

std::vector<std::string> split(const std::string& s, char sep)
{
    std::vector<std::string> out;
    std::size_t start = 0;
    for (;;) {
        const std::size_t pos = s.find(sep, start);
        out.push_back(s.substr(start, pos - start));
        if (pos == std::string::npos) break;
        start = pos + 1;
    }
    return out;
}

Image normalized(Image k)
{
    const double total = sum(k);
    require(total > 0.0, ErrorKind::Config, "kernel sums to zero");
    k *= 1.0 / total;
    return k;
}

}  // namespace

LinearOperator LinearOperator::identity() { return blur(dirac_kernel(), 1); }

LinearOperator LinearOperator::blur(Image kernel, int decimation)
{
    validate_kernel(kernel);
    require(decimation >= 1, ErrorKind::Config, "decimation factor must be >= 1");
    LinearOperator op;
    op.kind_ = Kind::Blur;
    op.kernel_ = std::move(kernel);
    op.decimation_ = decimation;
    return op;
}

LinearOperator LinearOperator::dense(Image matrix, Shape input, Shape output)
{
    require(matrix.channels() == 1 && static_cast<std::size_t>(matrix.width()) == input.size() &&
                static_cast<std::size_t>(matrix.height()) == output.size(),
            ErrorKind::Dimension,
            "dense operator matrix " + to_string(matrix.shape()) + " does not map " +
                to_string(input) + " to " + to_string(output));
    LinearOperator op;
    op.kind_ = Kind::Dense;
    op.matrix_ = std::move(matrix);
    op.in_ = input;
    op.out_ = output;
    return op;
}

LinearOperator super_resolution_operator(Image kernel, int factor)
{
    return LinearOperator::blur(std::move(kernel), factor);
}

Shape LinearOperator::output_shape(const Shape& input) const
{
    if (kind_ == Kind::Dense) {
        require(input == in_, ErrorKind::Dimension,
                "dense operator expects " + to_string(in_) + ", got " + to_string(input));
        return out_;
    }
    require_divisible(input, decimation_);
    return Shape{input.height / decimation_, input.width / decimation_, input.channels};
}

Image LinearOperator::apply(const Image& x) const
{
    const Shape out_shape = output_shape(x.shape());
    if (kind_ == Kind::Dense) {
        Image out = Image::zeros(out_shape);
        Eigen::Map<Eigen::VectorXd> o(out.data().data(), static_cast<Eigen::Index>(out.size()));
        o.noalias() = as_matrix(matrix_) *
                      Eigen::Map<const Eigen::VectorXd>(x.data().data(), static_cast<Eigen::Index>(x.size()));
        return out;
    }
    Image b = conv2d_circular(x, kernel_);
    return decimation_ == 1 ? b : subsample(b, decimation_);
}

Image LinearOperator::adjoint(const Image& v, const Shape& input) const
{
    const Shape out_shape = output_shape(input);
    require(v.shape() == out_shape, ErrorKind::Dimension,
            "adjoint expects " + to_string(out_shape) + ", got " + to_string(v.shape()));
    if (kind_ == Kind::Dense) {
        Image out = Image::zeros(input);
        Eigen::Map<Eigen::VectorXd> o(out.data().data(), static_cast<Eigen::Index>(out.size()));
        o.noalias() = as_matrix(matrix_).transpose() *
                      Eigen::Map<const Eigen::VectorXd>(v.data().data(), static_cast<Eigen::Index>(v.size()));
        return out;
    }
    if (decimation_ == 1) return conv2d_circular_adjoint(v, kernel_);
    return conv2d_circular_adjoint(upsample_zeros(v, decimation_), kernel_);
}

double LinearOperator::normal_norm(const Shape& input) const
{
    output_shape(input);
    if (kind_ == Kind::Dense) {
        const Eigen::MatrixXd m = as_matrix(matrix_);
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(m.transpose() * m, Eigen::EigenvaluesOnly);
        return eig.eigenvalues().maxCoeff();
    }
    const int h = input.height;
    const int w = input.width;
    const auto power = kernel_power_spectrum(kernel_, h, w);
    const int s = decimation_;
    if (s == 1) return *std::max_element(power.begin(), power.end());
    const int hl = h / s;
    const int wl = w / s;
    double best = 0.0;
    for (int u = 0; u < hl; ++u) {
        for (int v = 0; v < wl; ++v) {
            double acc = 0.0;
            for (int a = 0; a < s; ++a) {
                for (int b = 0; b < s; ++b) {
                    acc += power[static_cast<std::size_t>(u + a * hl) * static_cast<std::size_t>(w) +
                                 static_cast<std::size_t>(v + b * wl)];
                }
            }
            best = std::max(best, acc / static_cast<double>(s * s));
        }
    }
    return best;
}

Fidelity Fidelity::gaussian(LinearOperator op, double noise_sigma)
{
    return gaussian(std::move(op), noise_sigma, noise_sigma);
}

Fidelity Fidelity::gaussian(LinearOperator op, double noise_sigma, double weight_sigma)
{
    require(std::isfinite(noise_sigma) && noise_sigma >= 0.0, ErrorKind::Config,
            "noise std must be >= 0");
    require(std::isfinite(weight_sigma) && weight_sigma > 0.0, ErrorKind::Config,
            "fidelity weighting std must be > 0");
    Fidelity f;
    f.kind_ = FidelityKind::GaussianLinear;
    f.op_ = std::move(op);
    f.noise_sigma_ = noise_sigma;
    f.weight_sigma_ = weight_sigma;
    return f;
}

Fidelity Fidelity::speckle(double looks, double floor)
{
    require(looks > 0.0 && floor > 0.0, ErrorKind::Config, "speckle needs L > 0 and floor > 0");
    Fidelity f;
    f.kind_ = FidelityKind::Speckle;
    f.looks_ = looks;
    f.floor_ = floor;
    return f;
}

Shape Fidelity::observation_shape(const Shape& input) const
{
    return kind_ == FidelityKind::GaussianLinear ? op_.output_shape(input) : input;
}

double Fidelity::value(const Image& x, const Image& y) const
{
    if (kind_ == FidelityKind::GaussianLinear) {
        const Image r = op_.apply(x) - y;
        return squared_norm(r) / (2.0 * weight_sigma_ * weight_sigma_);
    }
    require_same_shape(x, y, "speckle fidelity");
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        require(x[i] >= floor_, ErrorKind::Domain,
                "speckle fidelity evaluated below the floor at index " + std::to_string(i));
        s += std::log(x[i]) + y[i] / x[i];
    }
    return looks_ * s;
}

Image Fidelity::gradient(const Image& x, const Image& y) const
{
    if (kind_ == FidelityKind::GaussianLinear) {
        Image g = op_.adjoint(op_.apply(x) - y, x.shape());
        g *= 1.0 / (weight_sigma_ * weight_sigma_);
        return g;
    }
    require_same_shape(x, y, "speckle fidelity");
    Image g = Image::zeros_like(x);
    for (std::size_t i = 0; i < x.size(); ++i) {
        require(x[i] >= floor_, ErrorKind::Domain,
                "speckle gradient evaluated below the floor at index " + std::to_string(i));
        g[i] = looks_ * (1.0 / x[i] - y[i] / (x[i] * x[i]));
    }
    return g;
}

double Fidelity::lipschitz(const Shape& input) const
{
    require(kind_ == FidelityKind::GaussianLinear, ErrorKind::Unsupported,
            "the speckle fidelity has no global Lipschitz gradient");
    return op_.normal_norm(input) / (weight_sigma_ * weight_sigma_);
}

Image Fidelity::observe(const Image& x_true, Rng& rng) const
{
    if (kind_ == FidelityKind::GaussianLinear) {
        Image y = op_.apply(x_true);
        if (noise_sigma_ > 0.0) {
            for (double& v : y.data()) v += noise_sigma_ * rng.normal();
        }
        return y;
    }
    Image y = x_true;
    for (double& v : y.data()) v *= rng.gamma(looks_, 1.0 / looks_);
    return y;
}

Problem Problem::make(Fidelity fidelity, Image y, Shape x_shape)
{
    const Shape expected = fidelity.observation_shape(x_shape);
    require(y.shape() == expected, ErrorKind::Dimension,
            "observation shape " + to_string(y.shape()) + " does not match expected " +
                to_string(expected));
    y.require_finite("observation");
    return Problem{std::move(fidelity), std::move(y), x_shape};
}

Image default_initialization(const Problem& problem)
{
    const Fidelity& f = problem.fidelity;
    if (f.kind() == FidelityKind::Speckle) {
        Image x = problem.y;
        for (double& v : x.data()) v = std::max(v, f.floor());
        return x;
    }
    const LinearOperator& op = f.op();
    if (op.kind() == LinearOperator::Kind::Dense) return op.adjoint(problem.y, problem.x_shape);
    if (op.decimation() == 1) return problem.y;
    Image x = op.adjoint(problem.y, problem.x_shape);
    x *= static_cast<double>(op.decimation() * op.decimation());
    return x;
}

Image gaussian_kernel(double stddev, int size)
{
    require(stddev > 0.0, ErrorKind::Config, "gaussian kernel std must be > 0");
    require(size >= 1 && size % 2 == 1, ErrorKind::Config, "kernel size must be odd");
    Image k(size, size, 1);
    const int c = size / 2;
    for (int i = 0; i < size; ++i) {
        for (int j = 0; j < size; ++j) {
            const double r2 = static_cast<double>((i - c) * (i - c) + (j - c) * (j - c));
            k.at(i, j) = std::exp(-0.5 * r2 / (stddev * stddev));
        }
    }
    return normalized(std::move(k));
}

Image motion_kernel(double length, double angle_deg)
{
    require(length >= 1.0, ErrorKind::Config, "motion length must be >= 1");
    const double theta = angle_deg * std::numbers::pi / 180.0;
    const double dx = std::cos(theta);
    const double dy = -std::sin(theta);
    const double half = 0.5 * (length - 1.0);
    const double extent = half * std::max(std::abs(dx), std::abs(dy));
    const int radius = static_cast<int>(std::ceil(extent - 1e-9));
    const int size = 2 * radius + 1;
    Image k(size, size, 1);
    const int samples = std::max(2, static_cast<int>(std::ceil(length)) * 16 + 1);
    for (int s = 0; s < samples; ++s) {
        const double t = samples == 1 ? 0.0 : -half + 2.0 * half * s / (samples - 1);
        const double col = radius + t * dx;
        const double row = radius + t * dy;
        const int c0 = static_cast<int>(std::floor(col));
        const int r0 = static_cast<int>(std::floor(row));
        const double fc = col - c0;
        const double fr = row - r0;
        const double wts[4] = {(1 - fr) * (1 - fc), (1 - fr) * fc, fr * (1 - fc), fr * fc};
        const int rr[4] = {r0, r0, r0 + 1, r0 + 1};
        const int cc[4] = {c0, c0 + 1, c0, c0 + 1};
        for (int q = 0; q < 4; ++q) {
            if (wts[q] == 0.0) continue;
            const int r = std::clamp(rr[q], 0, size - 1);
            const int c = std::clamp(cc[q], 0, size - 1);
            k.at(r, c) += wts[q];
        }
    }
    return normalized(std::move(k));
}

Image dirac_kernel() { return Image(1, 1, 1, 1.0); }

Image kernel_from_spec(const std::string& spec)
{
    const auto parts = split(spec, ':');
    const std::string& name = parts[0];
    if (name == "dirac" && parts.size() == 1) return dirac_kernel();
    if (name == "gaussian" && parts.size() == 2) return gaussian_kernel(parse_number(parts[1], spec));
    if (name == "motion" && parts.size() == 3) {
        return motion_kernel(parse_number(parts[1], spec), parse_number(parts[2], spec));
    }
    if (name == "box" && parts.size() == 2) {
        const double n = parse_number(parts[1], spec);
        const int size = static_cast<int>(n);
        require(size >= 1 && size % 2 == 1 && size == n, ErrorKind::Config,
                "box kernel size must be an odd integer");
        return Image(size, size, 1, 1.0 / (n * n));
    }
    if (spec.find(':') == std::string::npos && spec.find('.') != std::string::npos) {
        Image img = read_netpbm(spec);
        Image k = img.channel(0);
        validate_kernel(k);
        return normalized(std::move(k));
    }
    throw_error(ErrorKind::Config, "unknown kernel spec '" + spec +
                                       "' (valid: dirac, gaussian:STD, motion:LEN:ANGLE, box:N, "
                                       "or a .pgm/.pnm path)");
}

}  // namespace eqr
