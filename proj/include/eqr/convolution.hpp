#pragma once

#include <vector>

#include "eqr/image.hpp"

namespace eqr {

/// Kernels up to this size (both dimensions) are applied directly; larger
/// ones go through a real FFT.
inline constexpr int kDirectKernelLimit = 15;

/// Circular (periodic) 2-D convolution applied per channel:
///   out(r, c) = sum_{i,j} k(i, j) * x(r - (i - kh/2), c - (j - kw/2))
/// with indices taken modulo the image size. The kernel must be single
/// channel with odd height and width.
Image conv2d_circular(const Image& img, const Image& kernel);

/// Adjoint of conv2d_circular: correlation, i.e. convolution with the
/// flipped kernel.
Image conv2d_circular_adjoint(const Image& img, const Image& kernel);

Image conv2d_circular_direct(const Image& img, const Image& kernel);
Image conv2d_circular_fft(const Image& img, const Image& kernel);

/// k(i, j) -> k(kh-1-i, kw-1-j)
Image flip_kernel(const Image& kernel);

/// |K(u, v)|^2 on the full height x width frequency grid, row-major. These are
/// the eigenvalues of A^T A for the circular convolution A.
std::vector<double> kernel_power_spectrum(const Image& kernel, int height, int width);

/// Real part of the transfer function on the full grid; for a centrally
/// symmetric kernel these are the eigenvalues of the convolution itself, and
/// in general the eigenvalues of its symmetric part (A + A^T) / 2.
std::vector<double> kernel_symmetric_spectrum(const Image& kernel, int height, int width);

void validate_kernel(const Image& kernel);

}  // namespace eqr
