#include "eqr/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "eqr/error.hpp"

namespace eqr {
namespace {

constexpr double kSsimSigma = 1.5;
constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

std::array<double, kSsimWindow> gaussian_taps()
{
    std::array<double, kSsimWindow> taps{};
    const int half = kSsimWindow / 2;
    double total = 0.0;
    for (int i = 0; i < kSsimWindow; ++i) {
        const double t = static_cast<double>(i - half);
        taps[static_cast<std::size_t>(i)] = std::exp(-t * t / (2.0 * kSsimSigma * kSsimSigma));
        total += taps[static_cast<std::size_t>(i)];
    }
    for (double& t : taps) t /= total;
    return taps;
}

// Separable "valid" Gaussian filter of a single-channel plane.
std::vector<double> filter_valid(const std::vector<double>& plane, int h, int w,
                                 const std::array<double, kSsimWindow>& taps)
{
    const int oh = h - kSsimWindow + 1;
    const int ow = w - kSsimWindow + 1;
    std::vector<double> rows(static_cast<std::size_t>(h) * static_cast<std::size_t>(ow));
    for (int r = 0; r < h; ++r) {
        for (int c = 0; c < ow; ++c) {
            double s = 0.0;
            for (int k = 0; k < kSsimWindow; ++k) {
                s += taps[static_cast<std::size_t>(k)] *
                     plane[static_cast<std::size_t>(r) * static_cast<std::size_t>(w) +
                           static_cast<std::size_t>(c + k)];
            }
            rows[static_cast<std::size_t>(r) * static_cast<std::size_t>(ow) +
                 static_cast<std::size_t>(c)] = s;
        }
    }
    std::vector<double> out(static_cast<std::size_t>(oh) * static_cast<std::size_t>(ow));
    for (int r = 0; r < oh; ++r) {
        for (int c = 0; c < ow; ++c) {
            double s = 0.0;
            for (int k = 0; k < kSsimWindow; ++k) {
                s += taps[static_cast<std::size_t>(k)] *
                     rows[static_cast<std::size_t>(r + k) * static_cast<std::size_t>(ow) +
                          static_cast<std::size_t>(c)];
            }
            out[static_cast<std::size_t>(r) * static_cast<std::size_t>(ow) +
                static_cast<std::size_t>(c)] = s;
        }
    }
    return out;
}

double ssim_plane(const Image& a, const Image& b)
{
    const int h = a.height();
    const int w = a.width();
    const auto& taps = gaussian_taps();
    const std::size_t n = a.size();
    std::vector<double> pa(a.values()), pb(b.values()), paa(n), pbb(n), pab(n);
    for (std::size_t i = 0; i < n; ++i) {
        paa[i] = pa[i] * pa[i];
        pbb[i] = pb[i] * pb[i];
        pab[i] = pa[i] * pb[i];
    }
    const auto mu_a = filter_valid(pa, h, w, taps);
    const auto mu_b = filter_valid(pb, h, w, taps);
    const auto e_aa = filter_valid(paa, h, w, taps);
    const auto e_bb = filter_valid(pbb, h, w, taps);
    const auto e_ab = filter_valid(pab, h, w, taps);
    double total = 0.0;
    for (std::size_t i = 0; i < mu_a.size(); ++i) {
        const double ma = mu_a[i];
        const double mb = mu_b[i];
        const double va = e_aa[i] - ma * ma;
        const double vb = e_bb[i] - mb * mb;
        const double cov = e_ab[i] - ma * mb;
        total += ((2.0 * ma * mb + kC1) * (2.0 * cov + kC2)) /
                 ((ma * ma + mb * mb + kC1) * (va + vb + kC2));
    }
    return total / static_cast<double>(mu_a.size());
}

}  // namespace

double mse(const Image& a, const Image& b)
{
    require_same_shape(a, b, "mse");
    require(!a.empty(), ErrorKind::Dimension, "mse of empty images");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return s / static_cast<double>(a.size());
}

double psnr(const Image& a, const Image& b)
{
    const double m = mse(a, b);
    if (m == 0.0) return kPsnrCap;
    return std::min(kPsnrCap, 10.0 * std::log10(1.0 / m));
}

double ssim(const Image& a, const Image& b)
{
    require_same_shape(a, b, "ssim");
    require(a.height() >= kSsimWindow && a.width() >= kSsimWindow, ErrorKind::Dimension,
            "ssim needs images of at least 11x11, got " + to_string(a.shape()));
    double total = 0.0;
    for (int ch = 0; ch < a.channels(); ++ch) {
        total += a.channels() == 1 ? ssim_plane(a, b) : ssim_plane(a.channel(ch), b.channel(ch));
    }
    return total / static_cast<double>(a.channels());
}

MetricReport compare(const Image& reference, const Image& test)
{
    MetricReport report;
    report.mse = mse(reference, test);
    report.psnr = psnr(reference, test);
    const bool ssim_ok = reference.height() >= kSsimWindow && reference.width() >= kSsimWindow;
    report.ssim = ssim_ok ? ssim(reference, test) : std::nan("");
    return report;
}

}  // namespace eqr
