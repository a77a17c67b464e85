#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "eqr/denoisers.hpp"
#include "eqr/fidelity.hpp"
#include "eqr/image.hpp"
#include "eqr/solvers.hpp"
#include "eqr/transforms.hpp"

namespace eqr {

/// Small closed-form test problem: f(x) = ||A x - y||^2 / (2 w^2) with an
/// explicit matrix A, and a Gaussian prior N(mean, diag(variances)) or an
/// isotropic GMM.
struct SyntheticProblem {
    Shape shape{};
    Image matrix;
    double weight_sigma = 1.0;
    Image x_true;
    Image y;
    Image prior_mean;
    Image prior_variances;
    std::optional<GmmPrior> gmm;
    double lambda = 1.0;
    double sigma = 0.1;

    Problem problem() const;
    Denoiser mmse(double s) const;
    Denoiser mmse() const { return mmse(sigma); }
    double lipschitz_f() const;
    std::size_t dimension() const noexcept { return shape.size(); }
};

struct SyntheticOptions {
    int side = 8;
    double singular_min = 0.8;
    double singular_max = 1.0;
    double weight_sigma = 0.25;
    double noise = 0.05;
    double prior_mean = 0.5;
    double prior_variance = 1.0;
    /// Relative left-right variation of the prior variances; 0 gives an
    /// isotropic (rotation and flip invariant) prior.
    double anisotropy = 0.0;
    double lambda = 3.0;
    double sigma = 0.1;
    std::uint64_t seed = 2024;
};

/// A = U diag(s) V^T with Haar-random U, V and s linearly spaced in
/// [singular_min, singular_max]; y = A x_true + noise N(0, I).
SyntheticProblem make_synthetic(const SyntheticOptions& options);
/// The instance the checkers use unless told otherwise (8 x 8, mildly
/// anisotropic prior).
SyntheticOptions default_synthetic_options();
SyntheticProblem default_instance();

/// Instance for the PnP-family checks: a linear, flip-symmetric
/// LinearSmoothing denoiser (3 x 3 binomial kernel) whose strength does not
/// depend on sigma over the tested range, and lambda = 3 L_f.
struct LinearPnpInstance {
    SyntheticProblem base;
    Denoiser denoiser;
};
LinearPnpInstance default_linear_instance();

/// grad F(x) = H x - b with H, b assembled by dense algebra. Permutations and
/// convolution matrices are built from explicit index formulas, not from
/// the transform or convolution code.
class AffineModel {
public:
    /// F_s^pi = f + lambda E_G[-log p_s(G x)].  s = 0 uses the prior itself.
    /// Supports enumerable laws and the Gaussian shift (whose expectation of
    /// an affine score is the score itself).
    static AffineModel ered_target(const SyntheticProblem& sp, const TransformLaw& law, double s);
    /// F = f + lambda g with D = Prox_g, for a LinearSmoothing denoiser:
    /// grad g(x) = M^{-1} x - x.
    static AffineModel pnp_target(const SyntheticProblem& sp, const Denoiser& linear);

    Image gradient(const Image& x) const;
    /// 0.5 x^T H x - b^T x, the target up to an additive constant.
    double objective(const Image& x) const;
    /// The unique critical point; singular H is a degenerate-problem error.
    Image critical_point() const;
    /// The affine map x -> M x of a LinearSmoothing denoiser (pnp_target only).
    Image denoiser_matrix_apply(const Image& x) const;
    double smallest_eigenvalue() const;
    double largest_eigenvalue() const;

private:
    struct Impl;
    std::shared_ptr<const Impl> impl_;
};

Image critical_point_closed_form(const SyntheticProblem& sp, double s,
                                 const TransformLaw& law = TransformLaw::identity());

struct Measurement {
    std::string name;
    double value = 0.0;
    /// Human-readable bound, empty for reported-only quantities.
    std::string bound;
    bool ok = true;
};

struct CheckReport {
    std::string name;
    std::vector<Measurement> measurements;
    std::vector<std::uint64_t> seeds;
    std::string note;

    /// All gated measurements hold.
    bool passed() const noexcept;
    void add(std::string measurement, double value);
    void add(std::string measurement, double value, std::string bound, bool ok);
    /// Rows: check,measurement,value,bound,ok
    std::string csv_rows() const;
    std::string summary() const;
};

inline constexpr const char* kReportCsvHeader = "check,measurement,value,bound,ok";

std::vector<std::uint64_t> seed_list(std::uint64_t master, int count);

struct Prop2Options {
    StepSchedule schedule = StepSchedule::power(0.1, 0.9);
    int iterations = 10000;
    std::vector<int> checkpoints = {1000, 10000};
    double grad_tolerance = 1e-4;
    double required_fraction = 0.95;
};
/// Unbiased ERED with the exact MMSE denoiser converges to critical points
/// of F_sigma^pi.
CheckReport check_prop2_unbiased_convergence(const SyntheticProblem& sp, const TransformLaw& law,
                                             const Prop2Options& options,
                                             const std::vector<std::uint64_t>& seeds);

struct Prop3Options {
    StepSchedule schedule = StepSchedule::power(0.1, 0.9);
    int iterations = 2000;
    std::vector<double> biases = {1e-3, 1e-2, 1e-1};
    int bias_points = 8;
};
/// ERED with D = D* + eps u keeps ||grad F_sigma^pi|| at a plateau that
/// grows with eps; the mean perturbation obeys ||E xi|| <= (lambda/sigma^2) eps.
CheckReport check_prop3_bias_bound(const SyntheticProblem& sp, const TransformLaw& law,
                                   const Prop3Options& options, const std::vector<std::uint64_t>& seeds);

/// sup over a fixed grid of ||s(x) - s_sigma^pi(x)|| shrinks as sigma -> 0.
CheckReport check_prop5_score_convergence(const SyntheticProblem& sp, const TransformLaw& law,
                                          const std::vector<double>& sigmas, int grid_points = 32);

/// d(x*_sigma, S*) -> 0 along the sigma grid.
CheckReport check_prop6_critical_limit(const SyntheticProblem& sp, const TransformLaw& law,
                                       const std::vector<double>& sigmas, double final_tolerance = 1e-3);

struct PlateauOptions {
    int iterations = 2000;
    std::vector<double> levels = {0.0, 0.01, 0.02, 0.04};
    double slope_low = 1.7;
    double slope_high = 2.3;
    double zero_plateau = 1e-10;
};

/// EPnP with a Gaussian-shift law as a perturbed proximal gradient method:
/// residual^2 and ||grad F~(x_k - zeta_k)||^2 plateaus scale like mu^2.
CheckReport check_lemma1_prop8_epnp(const LinearPnpInstance& inst, const PlateauOptions& options,
                                    const std::vector<std::uint64_t>& seeds);

/// SnoPnP: the Cesaro mean of ||grad F(x_k)||^2 plateaus like sigma^2.
CheckReport check_lemma2_prop9_snopnp(const LinearPnpInstance& inst, const PlateauOptions& options,
                                      const std::vector<std::uint64_t>& seeds);

/// min_k d(x_k, S*) does not decrease with sigma (median over seeds, 10%
/// slack); reported, gated only on that monotonicity.
CheckReport check_cor1_distance_scaling(const LinearPnpInstance& inst, const PlateauOptions& options,
                                        const std::vector<std::uint64_t>& seeds);

/// Central differences; h must be > 0.
Image finite_difference_gradient(const std::function<double(const Image&)>& fn, const Image& x,
                                 double h = 1e-6);

/// Least-squares fit of c(n) = a / n + b; returns {a, b}.
std::pair<double, double> fit_inverse_plus_constant(const std::vector<double>& n,
                                                    const std::vector<double>& c);
/// Least-squares slope of log y against log x.
double loglog_slope(const std::vector<double>& x, const std::vector<double>& y);

/// Check names accepted by run_checks / the CLI.
const std::vector<std::string>& check_names();
std::vector<CheckReport> run_checks(const std::vector<std::string>& names, std::uint64_t master_seed,
                                    int seed_count);

}  // namespace eqr
