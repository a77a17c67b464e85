#pragma once

#include "eqr/image.hpp"

namespace eqr {

struct MetricReport {
    double psnr = 0.0;  // dB, peak 1.0
    double ssim = 0.0;
    double mse = 0.0;
};

inline constexpr double kPsnrCap = 100.0;

double mse(const Image& a, const Image& b);

/// 10 log10(1 / mse), capped at kPsnrCap for identical inputs.
double psnr(const Image& a, const Image& b);

/// Mean SSIM over all valid 11x11 Gaussian windows (std 1.5), K1 = 0.01,
/// K2 = 0.03, dynamic range 1. Color images: mean of the per-channel values.
double ssim(const Image& a, const Image& b);

/// SSIM is only evaluated when both sides are at least this large.
inline constexpr int kSsimWindow = 11;

MetricReport compare(const Image& reference, const Image& test);

}  // namespace eqr
