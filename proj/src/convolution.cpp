#include "eqr/convolution.hpp"

#include <fftw3.h>

#include <complex>
#include <memory>
#include <mutex>

#include "eqr/error.hpp"

namespace eqr {
namespace {

// FFTW planning is not thread-safe; execution on distinct buffers is.
std::mutex& planner_mutex()
{
    static std::mutex m;
    return m;
}

struct FftwFree {
    void operator()(void* p) const noexcept { fftw_free(p); }
};
using RealBuffer = std::unique_ptr<double[], FftwFree>;
using ComplexBuffer = std::unique_ptr<fftw_complex[], FftwFree>;

RealBuffer make_real(std::size_t n)
{
    return RealBuffer(static_cast<double*>(fftw_malloc(sizeof(double) * n)));
}
ComplexBuffer make_complex(std::size_t n)
{
    return ComplexBuffer(static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * n)));
}

class Plan {
public:
    explicit Plan(fftw_plan p) : plan_(p) {}
    Plan(const Plan&) = delete;
    Plan& operator=(const Plan&) = delete;
    ~Plan()
    {
        std::lock_guard lock(planner_mutex());
        fftw_destroy_plan(plan_);
    }
    void execute() const { fftw_execute(plan_); }

private:
    fftw_plan plan_;
};

// Forward real 2-D FFT of an h x w plane; output is h x (w/2 + 1).
class RealFft2d {
public:
    RealFft2d(int h, int w)
        : h_(h),
          w_(w),
          half_(w / 2 + 1),
          real_(make_real(static_cast<std::size_t>(h) * static_cast<std::size_t>(w))),
          spec_(make_complex(static_cast<std::size_t>(h) * static_cast<std::size_t>(half_))),
          forward_(plan_forward()),
          backward_(plan_backward())
    {
    }

    std::size_t real_size() const noexcept
    {
        return static_cast<std::size_t>(h_) * static_cast<std::size_t>(w_);
    }
    std::size_t spectrum_size() const noexcept
    {
        return static_cast<std::size_t>(h_) * static_cast<std::size_t>(half_);
    }
    double* real() noexcept { return real_.get(); }
    fftw_complex* spectrum() noexcept { return spec_.get(); }
    int half() const noexcept { return half_; }

    void forward() { forward_.execute(); }
    void backward() { backward_.execute(); }

private:
    fftw_plan plan_forward()
    {
        std::lock_guard lock(planner_mutex());
        return fftw_plan_dft_r2c_2d(h_, w_, real_.get(), spec_.get(), FFTW_ESTIMATE);
    }
    fftw_plan plan_backward()
    {
        std::lock_guard lock(planner_mutex());
        return fftw_plan_dft_c2r_2d(h_, w_, spec_.get(), real_.get(), FFTW_ESTIMATE);
    }

    int h_, w_, half_;
    RealBuffer real_;
    ComplexBuffer spec_;
    Plan forward_;
    Plan backward_;
};

int wrap(int i, int n) noexcept
{
    const int r = i % n;
    return r < 0 ? r + n : r;
}

// Kernel embedded on the h x w torus with its center at the origin.
std::vector<double> embed_kernel(const Image& kernel, int h, int w)
{
    std::vector<double> out(static_cast<std::size_t>(h) * static_cast<std::size_t>(w), 0.0);
    const int ch = kernel.height() / 2;
    const int cw = kernel.width() / 2;
    for (int i = 0; i < kernel.height(); ++i) {
        for (int j = 0; j < kernel.width(); ++j) {
            const int r = wrap(i - ch, h);
            const int c = wrap(j - cw, w);
            out[static_cast<std::size_t>(r) * static_cast<std::size_t>(w) +
                static_cast<std::size_t>(c)] += kernel.at(i, j);
        }
    }
    return out;
}

std::vector<std::complex<double>> half_transfer(const Image& kernel, int h, int w)
{
    RealFft2d fft(h, w);
    const auto embedded = embed_kernel(kernel, h, w);
    std::copy(embedded.begin(), embedded.end(), fft.real());
    fft.forward();
    std::vector<std::complex<double>> out(fft.spectrum_size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = {fft.spectrum()[i][0], fft.spectrum()[i][1]};
    }
    return out;
}

// Expand a Hermitian half spectrum (h x (w/2+1)) of real values to h x w.
std::vector<double> expand_half(const std::vector<double>& half, int h, int w)
{
    const int hw = w / 2 + 1;
    std::vector<double> full(static_cast<std::size_t>(h) * static_cast<std::size_t>(w));
    for (int u = 0; u < h; ++u) {
        for (int v = 0; v < w; ++v) {
            double value = 0.0;
            if (v < hw) {
                value = half[static_cast<std::size_t>(u) * static_cast<std::size_t>(hw) +
                             static_cast<std::size_t>(v)];
            } else {
                const int uu = wrap(-u, h);
                const int vv = w - v;
                value = half[static_cast<std::size_t>(uu) * static_cast<std::size_t>(hw) +
                             static_cast<std::size_t>(vv)];
            }
            full[static_cast<std::size_t>(u) * static_cast<std::size_t>(w) +
                 static_cast<std::size_t>(v)] = value;
        }
    }
    return full;
}

}  // namespace

void validate_kernel(const Image& kernel)
{
    require(!kernel.empty(), ErrorKind::Config, "empty kernel");
    require(kernel.channels() == 1, ErrorKind::Config, "kernel must be single channel");
    require(kernel.height() % 2 == 1 && kernel.width() % 2 == 1, ErrorKind::Config,
            "kernel dimensions must be odd, got " + to_string(kernel.shape()));
}

Image flip_kernel(const Image& kernel)
{
    Image out = Image::zeros_like(kernel);
    const int kh = kernel.height();
    const int kw = kernel.width();
    for (int i = 0; i < kh; ++i) {
        for (int j = 0; j < kw; ++j) {
            for (int c = 0; c < kernel.channels(); ++c) {
                out.at(i, j, c) = kernel.at(kh - 1 - i, kw - 1 - j, c);
            }
        }
    }
    return out;
}

Image conv2d_circular_direct(const Image& img, const Image& kernel)
{
    validate_kernel(kernel);
    const int h = img.height();
    const int w = img.width();
    const int nc = img.channels();
    const int kh = kernel.height();
    const int kw = kernel.width();
    const int ch = kh / 2;
    const int cw = kw / 2;
    Image out = Image::zeros_like(img);
    for (int i = 0; i < kh; ++i) {
        for (int j = 0; j < kw; ++j) {
            const double k = kernel.at(i, j);
            if (k == 0.0) continue;
            const int dr = i - ch;
            const int dc = j - cw;
            for (int r = 0; r < h; ++r) {
                const int sr = wrap(r - dr, h);
                for (int c = 0; c < w; ++c) {
                    const int sc = wrap(c - dc, w);
                    for (int p = 0; p < nc; ++p) out.at(r, c, p) += k * img.at(sr, sc, p);
                }
            }
        }
    }
    return out;
}

Image conv2d_circular_fft(const Image& img, const Image& kernel)
{
    validate_kernel(kernel);
    const int h = img.height();
    const int w = img.width();
    const auto transfer = half_transfer(kernel, h, w);
    RealFft2d fft(h, w);
    const double scale = 1.0 / static_cast<double>(fft.real_size());
    Image out = Image::zeros_like(img);
    for (int p = 0; p < img.channels(); ++p) {
        for (std::size_t i = 0; i < fft.real_size(); ++i) {
            fft.real()[i] = img[i * static_cast<std::size_t>(img.channels()) + static_cast<std::size_t>(p)];
        }
        fft.forward();
        for (std::size_t i = 0; i < fft.spectrum_size(); ++i) {
            const std::complex<double> x(fft.spectrum()[i][0], fft.spectrum()[i][1]);
            const std::complex<double> y = x * transfer[i];
            fft.spectrum()[i][0] = y.real();
            fft.spectrum()[i][1] = y.imag();
        }
        fft.backward();
        for (std::size_t i = 0; i < fft.real_size(); ++i) {
            out[i * static_cast<std::size_t>(img.channels()) + static_cast<std::size_t>(p)] =
                fft.real()[i] * scale;
        }
    }
    return out;
}

Image conv2d_circular(const Image& img, const Image& kernel)
{
    validate_kernel(kernel);
    if (kernel.height() <= kDirectKernelLimit && kernel.width() <= kDirectKernelLimit) {
        return conv2d_circular_direct(img, kernel);
    }
    return conv2d_circular_fft(img, kernel);
}

Image conv2d_circular_adjoint(const Image& img, const Image& kernel)
{
    return conv2d_circular(img, flip_kernel(kernel));
}

std::vector<double> kernel_power_spectrum(const Image& kernel, int height, int width)
{
    validate_kernel(kernel);
    const auto transfer = half_transfer(kernel, height, width);
    std::vector<double> half(transfer.size());
    for (std::size_t i = 0; i < half.size(); ++i) half[i] = std::norm(transfer[i]);
    return expand_half(half, height, width);
}

std::vector<double> kernel_symmetric_spectrum(const Image& kernel, int height, int width)
{
    validate_kernel(kernel);
    const auto transfer = half_transfer(kernel, height, width);
    std::vector<double> half(transfer.size());
    for (std::size_t i = 0; i < half.size(); ++i) half[i] = transfer[i].real();
    return expand_half(half, height, width);
}

}  // namespace eqr
