#pragma once

#include <string>

#include "eqr/image.hpp"
#include "eqr/rng.hpp"

namespace eqr {

/// Linear forward operator A with its adjoint. Either a circular blur
/// followed by stride-s subsampling (offset 0), or an explicit dense matrix
/// acting on the flattened image.
class LinearOperator {
public:
    enum class Kind { Blur, Dense };

    static LinearOperator identity();
    static LinearOperator blur(Image kernel, int decimation = 1);
    /// `matrix` is rows x cols x 1 with cols = input.size(), rows = output.size().
    static LinearOperator dense(Image matrix, Shape input, Shape output);

    Kind kind() const noexcept { return kind_; }
    int decimation() const noexcept { return decimation_; }
    const Image& kernel() const noexcept { return kernel_; }
    const Image& matrix() const noexcept { return matrix_; }

    Shape output_shape(const Shape& input) const;
    Image apply(const Image& x) const;
    Image adjoint(const Image& v, const Shape& input) const;

    /// lambda_max(A^T A), exact: from the kernel spectrum (with the aliasing
    /// sum under decimation) or a symmetric eigensolve for dense matrices.
    double normal_norm(const Shape& input) const;

private:
    LinearOperator() = default;

    Kind kind_ = Kind::Blur;
    Image kernel_;
    int decimation_ = 1;
    Image matrix_;
    Shape in_{};
    Shape out_{};
};

/// Blur followed by stride-s subsampling as an (A, A^T) pair.
LinearOperator super_resolution_operator(Image kernel, int factor);

enum class FidelityKind { GaussianLinear, Speckle };

/// Data term f(x) = -log p(y | x) up to constants.
///   GaussianLinear: ||y - A x||^2 / (2 w^2), w the weighting std
///   Speckle:        L sum_i (log x_i + y_i / x_i), on x >= floor
class Fidelity {
public:
    /// Weighting std defaults to the noise std.
    static Fidelity gaussian(LinearOperator op, double noise_sigma);
    static Fidelity gaussian(LinearOperator op, double noise_sigma, double weight_sigma);
    static Fidelity speckle(double looks, double floor = 1e-3);

    FidelityKind kind() const noexcept { return kind_; }
    const LinearOperator& op() const noexcept { return op_; }
    double noise_sigma() const noexcept { return noise_sigma_; }
    double weight_sigma() const noexcept { return weight_sigma_; }
    double looks() const noexcept { return looks_; }
    double floor() const noexcept { return floor_; }

    Shape observation_shape(const Shape& input) const;
    double value(const Image& x, const Image& y) const;
    Image gradient(const Image& x, const Image& y) const;
    /// Lipschitz constant of the gradient (GaussianLinear only).
    double lipschitz(const Shape& input) const;

    /// GaussianLinear: A x + noise_sigma N(0, I). Speckle: x * s with
    /// s ~ Gamma(L, 1/L) per pixel.
    Image observe(const Image& x_true, Rng& rng) const;

private:
    Fidelity() = default;

    FidelityKind kind_ = FidelityKind::GaussianLinear;
    LinearOperator op_ = LinearOperator::identity();
    double noise_sigma_ = 0.0;
    double weight_sigma_ = 1.0;
    double looks_ = 1.0;
    double floor_ = 1e-3;
};

/// A data term together with its observation and the unknown's shape.
struct Problem {
    Fidelity fidelity;
    Image y;
    Shape x_shape;

    static Problem make(Fidelity fidelity, Image y, Shape x_shape);

    double f(const Image& x) const { return fidelity.value(x, y); }
    Image grad_f(const Image& x) const { return fidelity.gradient(x, y); }
    double lipschitz() const { return fidelity.lipschitz(x_shape); }
};

/// Initialization used when none is given: y for deblurring and denoising,
/// s^2 A^T y under decimation s, A^T y for dense operators, y clipped to
/// the floor for speckle.
Image default_initialization(const Problem& problem);

/// Normalized Gaussian kernel of the given std, `size` x `size` (odd).
Image gaussian_kernel(double stddev, int size = 25);
/// Straight-line motion blur of `length` pixels at `angle_deg`, rasterized
/// with bilinear splatting into the smallest odd square and normalized.
Image motion_kernel(double length, double angle_deg);
Image dirac_kernel();
/// "gaussian:STD", "motion:LEN:ANGLE", "dirac", "box:N", or a NetPBM path.
Image kernel_from_spec(const std::string& spec);

}  // namespace eqr
