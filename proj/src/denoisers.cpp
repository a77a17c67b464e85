#include "eqr/denoisers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "eqr/convolution.hpp"
#include "eqr/error.hpp"

namespace eqr {
namespace {

constexpr int kLipschitzGrid = 256;

double scaled_strength(double base, double sigma, double sigma0) noexcept
{
    const double r = sigma / sigma0;
    return base * std::min(1.0, r * r);
}

void require_sigma(double sigma)
{
    require(std::isfinite(sigma) && sigma > 0.0, ErrorKind::Config,
            "denoiser sigma must be finite and > 0");
}

void require_domain(const Image& x, const Image& reference, const char* what)
{
    require(x.shape() == reference.shape(), ErrorKind::Dimension,
            std::string(what) + ": input shape " + to_string(x.shape()) +
                " does not match prior shape " + to_string(reference.shape()));
}

bool is_flip_symmetric(const Image& kernel) { return kernel == flip_kernel(kernel); }

double huber(double t, double eps) noexcept
{
    const double a = std::abs(t);
    return a <= eps ? 0.5 * t * t / eps : a - 0.5 * eps;
}

double huber_slope(double t, double eps) noexcept { return std::clamp(t / eps, -1.0, 1.0); }

int wrap_next(int i, int n) noexcept { return i + 1 == n ? 0 : i + 1; }
int wrap_prev(int i, int n) noexcept { return i == 0 ? n - 1 : i - 1; }

double max_abs_one_minus(const std::vector<double>& spectrum)
{
    double m = 0.0;
    for (double s : spectrum) m = std::max(m, std::abs(1.0 - s));
    return m;
}

}  // namespace

std::string to_string(DenoiserKind kind)
{
    switch (kind) {
        case DenoiserKind::GaussianMMSE: return "gaussian_mmse";
        case DenoiserKind::GmmMMSE: return "gmm_mmse";
        case DenoiserKind::LinearSmoothing: return "linear_smoothing";
        case DenoiserKind::HuberTV: return "huber_tv";
        case DenoiserKind::Box: return "box";
    }
    return "unknown";
}

Denoiser Denoiser::gaussian_mmse(Image mean, Image variances, double sigma)
{
    require_sigma(sigma);
    require(!mean.empty(), ErrorKind::Config, "gaussian prior needs a mean");
    require_same_shape(mean, variances, "gaussian prior");
    for (double v : variances.data()) {
        require(std::isfinite(v) && v > 0.0, ErrorKind::Config, "prior variances must be > 0");
    }
    Denoiser d;
    d.kind_ = DenoiserKind::GaussianMMSE;
    d.sigma_ = sigma;
    d.mean_ = std::move(mean);
    d.variances_ = std::move(variances);
    return d;
}

Denoiser Denoiser::gaussian_mmse_isotropic(Image mean, double variance, double sigma)
{
    Image v = Image::constant(mean.shape(), variance);
    return gaussian_mmse(std::move(mean), std::move(v), sigma);
}

Denoiser Denoiser::gmm_mmse(GmmPrior prior, double sigma)
{
    require_sigma(sigma);
    const std::size_t k = prior.weights.size();
    require(k > 0 && prior.means.size() == k && prior.variances.size() == k, ErrorKind::Config,
            "gmm prior needs matching weights, means and variances");
    double total = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
        require(prior.weights[i] > 0.0 && prior.variances[i] > 0.0, ErrorKind::Config,
                "gmm weights and variances must be > 0");
        require_same_shape(prior.means[i], prior.means[0], "gmm means");
        total += prior.weights[i];
    }
    for (double& w : prior.weights) w /= total;
    Denoiser d;
    d.kind_ = DenoiserKind::GmmMMSE;
    d.sigma_ = sigma;
    d.mean_ = prior.means[0];
    d.gmm_ = std::move(prior);
    return d;
}

Denoiser Denoiser::linear_smoothing_unchecked(Image kernel, double alpha0, double sigma0,
                                              double sigma)
{
    require_sigma(sigma);
    validate_kernel(kernel);
    require(alpha0 >= 0.0 && sigma0 > 0.0, ErrorKind::Config,
            "linear smoothing needs alpha0 >= 0 and sigma0 > 0");
    Denoiser d;
    d.kind_ = DenoiserKind::LinearSmoothing;
    d.sigma_ = sigma;
    d.kernel_ = std::move(kernel);
    d.strength0_ = alpha0;
    d.sigma0_ = sigma0;
    return d;
}

Denoiser Denoiser::linear_smoothing(Image kernel, double alpha0, double sigma0, double sigma)
{
    Denoiser d = linear_smoothing_unchecked(std::move(kernel), alpha0, sigma0, sigma);
    d.gate();
    return d;
}

Denoiser Denoiser::huber_tv_unchecked(double c0, double eps, double sigma0, double sigma)
{
    require_sigma(sigma);
    require(c0 >= 0.0 && eps > 0.0 && sigma0 > 0.0, ErrorKind::Config,
            "huber tv needs c0 >= 0, eps > 0 and sigma0 > 0");
    Denoiser d;
    d.kind_ = DenoiserKind::HuberTV;
    d.sigma_ = sigma;
    d.strength0_ = c0;
    d.eps_ = eps;
    d.sigma0_ = sigma0;
    return d;
}

Denoiser Denoiser::huber_tv(double c0, double eps, double sigma0, double sigma)
{
    Denoiser d = huber_tv_unchecked(c0, eps, sigma0, sigma);
    d.gate();
    return d;
}

Denoiser Denoiser::box(double sigma)
{
    require_sigma(sigma);
    Denoiser d;
    d.kind_ = DenoiserKind::Box;
    d.sigma_ = sigma;
    return d;
}

void Denoiser::gate() const
{
    const double lh = lipschitz_h();
    require(lh < 1.0, ErrorKind::Config,
            to_string(kind_) + ": Lipschitz constant of grad h is " + std::to_string(lh) +
                " (must be < 1 for a gradient-step denoiser)");
}

bool Denoiser::is_gradient_step() const noexcept
{
    return kind_ == DenoiserKind::LinearSmoothing || kind_ == DenoiserKind::HuberTV;
}

bool Denoiser::is_mmse() const noexcept
{
    return kind_ == DenoiserKind::GaussianMMSE || kind_ == DenoiserKind::GmmMMSE;
}

Denoiser Denoiser::with_sigma(double sigma) const
{
    require_sigma(sigma);
    Denoiser d = *this;
    d.sigma_ = sigma;
    return d;
}

Denoiser Denoiser::with_offset(Image offset) const
{
    require(is_mmse(), ErrorKind::Unsupported, "offsets are only supported on MMSE denoisers");
    require_domain(offset, mean_, "denoiser offset");
    Denoiser d = *this;
    d.offset_ = std::move(offset);
    return d;
}

double Denoiser::strength() const noexcept
{
    return scaled_strength(strength0_, sigma_, sigma0_);
}

double Denoiser::lipschitz_h() const
{
    switch (kind_) {
        case DenoiserKind::LinearSmoothing:
            return strength() *
                   max_abs_one_minus(kernel_symmetric_spectrum(kernel_, kLipschitzGrid, kLipschitzGrid));
        case DenoiserKind::HuberTV: return 8.0 * strength() / eps_;
        default:
            throw_error(ErrorKind::Unsupported, to_string(kind_) + " has no potential h");
    }
}

double Denoiser::lipschitz_h(const Shape& shape) const
{
    require(kind_ == DenoiserKind::LinearSmoothing, ErrorKind::Unsupported,
            "grid Lipschitz constant is only defined for linear smoothing");
    return strength() * max_abs_one_minus(kernel_symmetric_spectrum(kernel_, shape.height, shape.width));
}

Image Denoiser::grad_h(const Image& x) const
{
    x.require_finite("denoiser input");
    switch (kind_) {
        case DenoiserKind::LinearSmoothing: {
            const double a = strength();
            Image out = Image::zeros_like(x);
            if (a == 0.0) return out;
            const Image wx = conv2d_circular(x, kernel_);
            const Image wtx = is_flip_symmetric(kernel_) ? wx : conv2d_circular_adjoint(x, kernel_);
            for (std::size_t i = 0; i < out.size(); ++i) {
                out[i] = a * (x[i] - 0.5 * (wx[i] + wtx[i]));
            }
            return out;
        }
        case DenoiserKind::HuberTV: {
            const double c = strength();
            Image out = Image::zeros_like(x);
            if (c == 0.0) return out;
            const int h = x.height();
            const int w = x.width();
            const int nc = x.channels();
            Image px = Image::zeros_like(x);
            Image py = Image::zeros_like(x);
            for (int r = 0; r < h; ++r) {
                for (int col = 0; col < w; ++col) {
                    for (int p = 0; p < nc; ++p) {
                        const double v = x.at(r, col, p);
                        px.at(r, col, p) = huber_slope(x.at(r, wrap_next(col, w), p) - v, eps_);
                        py.at(r, col, p) = huber_slope(x.at(wrap_next(r, h), col, p) - v, eps_);
                    }
                }
            }
            for (int r = 0; r < h; ++r) {
                for (int col = 0; col < w; ++col) {
                    for (int p = 0; p < nc; ++p) {
                        const double gx = px.at(r, wrap_prev(col, w), p) - px.at(r, col, p);
                        const double gy = py.at(wrap_prev(r, h), col, p) - py.at(r, col, p);
                        out.at(r, col, p) = c * (gx + gy);
                    }
                }
            }
            return out;
        }
        default:
            throw_error(ErrorKind::Unsupported, to_string(kind_) + " is not a gradient-step denoiser");
    }
}

double Denoiser::h(const Image& x) const
{
    x.require_finite("denoiser input");
    switch (kind_) {
        case DenoiserKind::LinearSmoothing: {
            const double a = strength();
            if (a == 0.0) return 0.0;
            const Image wx = conv2d_circular(x, kernel_);
            return 0.5 * a * (squared_norm(x) - dot(x, wx));
        }
        case DenoiserKind::HuberTV: {
            const double c = strength();
            const int h = x.height();
            const int w = x.width();
            double s = 0.0;
            for (int r = 0; r < h; ++r) {
                for (int col = 0; col < w; ++col) {
                    for (int p = 0; p < x.channels(); ++p) {
                        const double v = x.at(r, col, p);
                        s += huber(x.at(r, wrap_next(col, w), p) - v, eps_);
                        s += huber(x.at(wrap_next(r, h), col, p) - v, eps_);
                    }
                }
            }
            return c * s;
        }
        default:
            throw_error(ErrorKind::Unsupported, to_string(kind_) + " has no potential h");
    }
}

Image Denoiser::denoise(const Image& x) const
{
    x.require_finite("denoiser input");
    switch (kind_) {
        case DenoiserKind::GaussianMMSE: {
            require_domain(x, mean_, "gaussian mmse");
            const double s2 = sigma_ * sigma_;
            Image out = Image::zeros_like(x);
            for (std::size_t i = 0; i < out.size(); ++i) {
                const double v = variances_[i];
                out[i] = mean_[i] + v / (v + s2) * (x[i] - mean_[i]);
            }
            if (!offset_.empty()) out += offset_;
            return out;
        }
        case DenoiserKind::GmmMMSE: {
            require_domain(x, mean_, "gmm mmse");
            const double s2 = sigma_ * sigma_;
            const double d = static_cast<double>(x.size());
            const std::size_t k = gmm_.weights.size();
            std::vector<double> logr(k);
            double top = -std::numeric_limits<double>::infinity();
            for (std::size_t j = 0; j < k; ++j) {
                const double var = gmm_.variances[j] + s2;
                const double dist = squared_norm(x - gmm_.means[j]);
                logr[j] = std::log(gmm_.weights[j]) - 0.5 * d * std::log(var) - 0.5 * dist / var;
                top = std::max(top, logr[j]);
            }
            double z = 0.0;
            for (double& l : logr) {
                l = std::exp(l - top);
                z += l;
            }
            Image out = Image::zeros_like(x);
            for (std::size_t j = 0; j < k; ++j) {
                const double r = logr[j] / z;
                const double shrink = gmm_.variances[j] / (gmm_.variances[j] + s2);
                const Image& m = gmm_.means[j];
                for (std::size_t i = 0; i < out.size(); ++i) {
                    out[i] += r * (m[i] + shrink * (x[i] - m[i]));
                }
            }
            if (!offset_.empty()) out += offset_;
            return out;
        }
        case DenoiserKind::LinearSmoothing:
        case DenoiserKind::HuberTV: {
            const Image g = grad_h(x);
            Image out = Image::zeros_like(x);
            for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] - g[i];
            return out;
        }
        case DenoiserKind::Box: return clamp(x, 0.0, 1.0);
    }
    return x;
}

Image Denoiser::prior_score(const Image& x, double s) const
{
    require(s >= 0.0, ErrorKind::Config, "score noise level must be >= 0");
    const double s2 = s * s;
    switch (kind_) {
        case DenoiserKind::GaussianMMSE: {
            require_domain(x, mean_, "gaussian score");
            Image out = Image::zeros_like(x);
            for (std::size_t i = 0; i < out.size(); ++i) {
                out[i] = (x[i] - mean_[i]) / (variances_[i] + s2);
            }
            return out;
        }
        case DenoiserKind::GmmMMSE: {
            require_domain(x, mean_, "gmm score");
            const double d = static_cast<double>(x.size());
            const std::size_t k = gmm_.weights.size();
            std::vector<double> logr(k);
            double top = -std::numeric_limits<double>::infinity();
            for (std::size_t j = 0; j < k; ++j) {
                const double var = gmm_.variances[j] + s2;
                logr[j] = std::log(gmm_.weights[j]) - 0.5 * d * std::log(var) -
                          0.5 * squared_norm(x - gmm_.means[j]) / var;
                top = std::max(top, logr[j]);
            }
            double z = 0.0;
            for (double& l : logr) {
                l = std::exp(l - top);
                z += l;
            }
            Image out = Image::zeros_like(x);
            for (std::size_t j = 0; j < k; ++j) {
                const double r = logr[j] / z / (gmm_.variances[j] + s2);
                const Image& m = gmm_.means[j];
                for (std::size_t i = 0; i < out.size(); ++i) out[i] += r * (x[i] - m[i]);
            }
            return out;
        }
        default:
            throw_error(ErrorKind::Unsupported, to_string(kind_) + " has no closed-form prior score");
    }
}

ProxInversion invert_denoiser(const Denoiser& d, const Image& x, const Image* start, double tol,
                              int max_iter)
{
    require(d.is_gradient_step(), ErrorKind::Unsupported,
            "inversion needs a gradient-step denoiser, got " + to_string(d.kind()));
    ProxInversion out;
    out.u = start != nullptr ? *start : x;
    require_same_shape(out.u, x, "denoiser inversion");
    const double scale = std::max(1.0, norm(x));
    for (int it = 1; it <= max_iter; ++it) {
        Image next = x + d.grad_h(out.u);
        out.residual = norm(next - out.u);
        out.u = std::move(next);
        out.iterations = it;
        if (out.residual <= tol * scale) return out;
    }
    throw_error(ErrorKind::Numeric, "denoiser inversion did not converge in " +
                                        std::to_string(max_iter) + " iterations (residual " +
                                        std::to_string(out.residual) + ")");
}

double eval_g_prox(const Denoiser& d, const Image& x, const Image* start)
{
    const ProxInversion inv = invert_denoiser(d, x, start);
    return d.h(inv.u) - 0.5 * squared_norm(inv.u - x);
}

Image grad_g_prox(const Denoiser& d, const Image& x, const Image* start)
{
    return invert_denoiser(d, x, start).u - x;
}

EquivariantDenoiser::EquivariantDenoiser(Denoiser base, TransformLaw law, AverageMode mode, int samples)
    : base_(std::move(base)), law_(std::move(law)), mode_(mode), samples_(samples)
{
    require(mode_ != AverageMode::Exact || law_.enumerable(), ErrorKind::Unsupported,
            "exact equivariant averaging needs an enumerable law, got '" + law_.name() + "'");
    require(mode_ != AverageMode::MonteCarlo || samples_ >= 1, ErrorKind::Config,
            "monte-carlo averaging needs at least one sample");
}

template <class Term>
Image EquivariantDenoiser::average(const Image& x, Rng& rng, Term term) const
{
    switch (mode_) {
        case AverageMode::Stochastic: return term(law_.sample(rng, x.shape()));
        case AverageMode::Exact: {
            Image acc = Image::zeros_like(x);
            for (const auto& [g, w] : law_.enumerate()) acc.axpy(w, term(g));
            return acc;
        }
        case AverageMode::MonteCarlo: {
            Image acc = Image::zeros_like(x);
            for (int i = 0; i < samples_; ++i) acc += term(law_.sample(rng, x.shape()));
            acc *= 1.0 / static_cast<double>(samples_);
            return acc;
        }
    }
    return x;
}

Image EquivariantDenoiser::denoise(const Image& x, Rng& rng) const
{
    return average(x, rng, [&](const Transform& g) {
        return g.jacobian_transpose(base_.denoise(g.apply(x)));
    });
}

Image EquivariantDenoiser::score(const Image& x, Rng& rng) const
{
    const double inv_s2 = 1.0 / (base_.sigma() * base_.sigma());
    return average(x, rng, [&](const Transform& g) {
        const Image gx = g.apply(x);
        Image r = gx - base_.denoise(gx);
        r *= inv_s2;
        return g.jacobian_transpose(r);
    });
}

double estimate_lipschitz(const ImageMap& op, const PairSampler& sampler, int n_pairs, Rng& rng)
{
    double best = 0.0;
    for (int i = 0; i < n_pairs; ++i) {
        const auto [a, b] = sampler(rng);
        const double gap = norm(a - b);
        if (gap == 0.0) continue;
        best = std::max(best, norm(op(a) - op(b)) / gap);
    }
    return best;
}

}  // namespace eqr
