#pragma once

#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "eqr/image.hpp"
#include "eqr/rng.hpp"
#include "eqr/transforms.hpp"

namespace eqr {

enum class DenoiserKind { GaussianMMSE, GmmMMSE, LinearSmoothing, HuberTV, Box };

std::string to_string(DenoiserKind kind);

/// Isotropic Gaussian mixture prior: sum_k w_k N(m_k, v_k I).
struct GmmPrior {
    std::vector<double> weights;
    std::vector<Image> means;
    std::vector<double> variances;
};

/// A denoiser D_sigma. MMSE kinds are exact posterior means for their prior;
/// LinearSmoothing and HuberTV are gradient-step denoisers D = I - grad h.
///
///   LinearSmoothing: h(x) = (alpha/2) <x, (I - S) x>, S = (W + W^T)/2,
///                    so grad h = alpha (I - S) x; W is circular convolution.
///   HuberTV:         h(x) = c sum huber_eps(forward differences, circular).
///
/// Strengths follow alpha(sigma) = alpha0 * min(1, (sigma/sigma0)^2).
class Denoiser {
public:
    /// Prior N(mean, diag(variances)).
    static Denoiser gaussian_mmse(Image mean, Image variances, double sigma);
    static Denoiser gaussian_mmse_isotropic(Image mean, double variance, double sigma);
    static Denoiser gmm_mmse(GmmPrior prior, double sigma);
    /// Rejects any configuration whose certified L_h is >= 1.
    static Denoiser linear_smoothing(Image kernel, double alpha0, double sigma0, double sigma);
    static Denoiser huber_tv(double c0, double eps, double sigma0, double sigma);
    static Denoiser box(double sigma);

    /// Same as linear_smoothing / huber_tv without the L_h < 1 gate; only for
    /// experiments that deliberately leave the gradient-step hypothesis.
    static Denoiser linear_smoothing_unchecked(Image kernel, double alpha0, double sigma0,
                                               double sigma);
    static Denoiser huber_tv_unchecked(double c0, double eps, double sigma0, double sigma);

    DenoiserKind kind() const noexcept { return kind_; }
    double sigma() const noexcept { return sigma_; }
    bool is_gradient_step() const noexcept;
    bool is_mmse() const noexcept;

    /// Copy with another noise level (strength rescaled for gradient-step kinds).
    Denoiser with_sigma(double sigma) const;
    /// Copy whose output is shifted by a fixed image (MMSE kinds only); used to
    /// inject a known bias D = D* + offset.
    Denoiser with_offset(Image offset) const;

    Image denoise(const Image& x) const;
    Image operator()(const Image& x) const { return denoise(x); }

    /// grad h_sigma; unsupported for MMSE and Box kinds.
    Image grad_h(const Image& x) const;
    double h(const Image& x) const;

    /// Current strength: alpha(sigma) or c(sigma).
    double strength() const noexcept;
    /// Certified Lipschitz constant of grad h. LinearSmoothing uses the
    /// sup over frequencies of alpha (1 - Re W), sampled on a 256 x 256
    /// grid; HuberTV uses 8 c / eps.
    double lipschitz_h() const;
    /// LinearSmoothing only: the exact constant on a given image grid.
    double lipschitz_h(const Shape& shape) const;

    /// Closed-form -grad log p_s for the MMSE kinds, p_s the prior convolved
    /// with N(0, s^2 I); s defaults to sigma() and s = 0 gives the prior
    /// itself. Any offset is ignored.
    Image prior_score(const Image& x) const { return prior_score(x, sigma_); }
    Image prior_score(const Image& x, double s) const;

    const Image& kernel() const noexcept { return kernel_; }
    const Image& mean() const noexcept { return mean_; }
    const Image& variances() const noexcept { return variances_; }
    const GmmPrior& gmm() const noexcept { return gmm_; }
    double huber_eps() const noexcept { return eps_; }
    double base_strength() const noexcept { return strength0_; }
    double sigma0() const noexcept { return sigma0_; }

private:
    Denoiser() = default;
    void gate() const;

    DenoiserKind kind_ = DenoiserKind::Box;
    double sigma_ = 0.0;
    Image mean_;
    Image variances_;
    GmmPrior gmm_;
    Image kernel_;
    double strength0_ = 0.0;
    double sigma0_ = 1.0;
    double eps_ = 0.0;
    Image offset_;
};

/// Outcome of inverting D by the fixed point u <- x + grad h(u).
struct ProxInversion {
    Image u;
    int iterations = 0;
    double residual = 0.0;
};

/// D^{-1}(x) for a gradient-step denoiser; `start` defaults to x.
/// Non-convergence within max_iter is a numeric error.
ProxInversion invert_denoiser(const Denoiser& d, const Image& x, const Image* start = nullptr,
                              double tol = 1e-10, int max_iter = 200);

/// g_sigma(x) = h(D^{-1} x) - 0.5 ||D^{-1} x - x||^2 (constant K = 0), the
/// function whose proximal map is D.
double eval_g_prox(const Denoiser& d, const Image& x, const Image* start = nullptr);

/// grad g_sigma(x) = D^{-1}(x) - x.
Image grad_g_prox(const Denoiser& d, const Image& x, const Image* start = nullptr);

enum class AverageMode { Stochastic, Exact, MonteCarlo };

/// D~(x) = E_{G ~ pi}[J_G^T D(G x)] evaluated with one draw, by enumeration,
/// or as a Monte-Carlo mean of `samples` draws.
class EquivariantDenoiser {
public:
    EquivariantDenoiser(Denoiser base, TransformLaw law, AverageMode mode = AverageMode::Stochastic,
                        int samples = 1);

    Image denoise(const Image& x, Rng& rng) const;
    /// (1/sigma^2) J_G^T (G(x) - D(G(x))), averaged like denoise().
    Image score(const Image& x, Rng& rng) const;

    const Denoiser& base() const noexcept { return base_; }
    const TransformLaw& law() const noexcept { return law_; }
    AverageMode mode() const noexcept { return mode_; }
    int samples() const noexcept { return samples_; }

private:
    template <class Term>
    Image average(const Image& x, Rng& rng, Term term) const;

    Denoiser base_;
    TransformLaw law_;
    AverageMode mode_;
    int samples_;
};

using ImageMap = std::function<Image(const Image&)>;
using PairSampler = std::function<std::pair<Image, Image>(Rng&)>;

/// max over n_pairs sampled pairs of ||op(a) - op(b)|| / ||a - b||; a lower
/// bound on the Lipschitz constant of op.
double estimate_lipschitz(const ImageMap& op, const PairSampler& sampler, int n_pairs, Rng& rng);

}  // namespace eqr
