#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "eqr/denoisers.hpp"
#include "eqr/fidelity.hpp"
#include "eqr/image.hpp"
#include "eqr/rng.hpp"
#include "eqr/transforms.hpp"

namespace eqr {

/// delta_k = delta (constant) or delta / (k + 1)^alpha with alpha in (1/2, 1].
class StepSchedule {
public:
    static StepSchedule constant(double delta);
    static StepSchedule power(double delta, double alpha);

    double at(int k) const noexcept;
    bool is_power() const noexcept { return power_; }
    double delta() const noexcept { return delta_; }
    double alpha() const noexcept { return alpha_; }
    /// sum delta_k = inf and sum delta_k^2 < inf.
    bool square_summable_not_summable() const noexcept { return power_; }

private:
    StepSchedule(double delta, double alpha, bool power) : delta_(delta), alpha_(alpha), power_(power) {}

    double delta_;
    double alpha_;
    bool power_;
};

enum class Algorithm { RED, ERED, PnP, EPnP, SnoPnP, AnnealedERED };

std::string to_string(Algorithm a);
Algorithm algorithm_from_name(const std::string& name);
bool is_pnp_family(Algorithm a) noexcept;

// Single steps. The transform/noise overloads make every draw explicit; the
// Rng overloads draw exactly one transform (or one z) per call.

/// x - delta grad f(x) - (delta lambda / sigma^2) (x - D(x))
Image red_step(const Image& x, const Problem& problem, const Denoiser& d, double delta, double lambda);
/// x - delta grad f(x) - (delta lambda / sigma^2) J_g^T (g(x) - D(g(x)))
Image ered_step(const Image& x, const Problem& problem, const Denoiser& d, const Transform& g,
                double delta, double lambda);
Image ered_step(const Image& x, const Problem& problem, const Denoiser& d, const TransformLaw& law,
                double delta, double lambda, Rng& rng);
/// D(x - grad f(x) / lambda)
Image pnp_step(const Image& x, const Problem& problem, const Denoiser& d, double lambda);
/// y = x - grad f(x) / lambda;  J_g^T D(g(y))
Image epnp_step(const Image& x, const Problem& problem, const Denoiser& d, const Transform& g,
                double lambda);
Image epnp_step(const Image& x, const Problem& problem, const Denoiser& d, const TransformLaw& law,
                double lambda, Rng& rng);
/// D(x - grad f(x) / lambda + s z) with s = noise_scale (the denoiser sigma
/// by default).
Image snopnp_step(const Image& x, const Problem& problem, const Denoiser& d, double lambda,
                  const Image& z, std::optional<double> noise_scale = {});
Image snopnp_step(const Image& x, const Problem& problem, const Denoiser& d, double lambda, Rng& rng);

struct IterationRecord {
    int k = 0;
    double residual = 0.0;
    std::optional<double> objective;
    std::optional<double> grad_norm;
    std::optional<double> psnr;
    std::string transform_id;
    double noise_norm = 0.0;
};

enum class RunStatus { Completed, Diverged };

struct TraceOptions {
    /// Objective and gradient of the target, evaluated on every iterate when
    /// set. When left empty and `builtin_objective` holds, RED-family runs
    /// with a gradient-step denoiser record f + (lambda/sigma^2) h and its
    /// gradient norm.
    std::function<double(const Image&)> objective;
    std::function<Image(const Image&)> gradient;
    bool builtin_objective = false;
    const Image* ground_truth = nullptr;
    /// Keep x_k every `snapshot_every` iterations (0: never).
    int snapshot_every = 0;
    /// Called with (k + 1, x_{k+1}) after every iteration.
    std::function<void(int, const Image&)> observer;
};

struct SolverConfig {
    Algorithm algorithm = Algorithm::RED;
    StepSchedule schedule = StepSchedule::constant(1.0);
    double lambda = 1.0;
    Denoiser denoiser = Denoiser::box(1.0);
    TransformLaw law = TransformLaw::identity();
    int iterations = 0;
    std::uint64_t seed = 0;
    /// AnnealedERED: sigma levels, each held for an equal share of the run.
    std::vector<double> sigma_schedule;
    /// Runs stop with RunStatus::Diverged once ||x_k|| exceeds this.
    double divergence_threshold = 1e6;
};

struct RunTrace {
    std::vector<IterationRecord> records;
    std::vector<std::pair<int, Image>> snapshots;
    Image final_image;
    RunStatus status = RunStatus::Completed;
    int diverged_at = -1;
    std::string message;
    /// Pixels clipped to the speckle floor, summed over the run.
    std::size_t projections = 0;
    double wall_ms = 0.0;
    std::uint64_t seed = 0;

    bool ok() const noexcept { return status == RunStatus::Completed; }
};

/// Linearly spaced levels from start to end.
std::vector<double> linear_sigma_schedule(double start, double end, int levels);

/// Validates the configuration against the problem (schedule ranges,
/// PnP-family step, annealing list) and throws a config error otherwise.
void validate(const SolverConfig& config, const Problem& problem);

RunTrace run(const SolverConfig& config, const Problem& problem, const Image& x0,
             const TraceOptions& options = {});

/// Fixed CSV header shared by every trace file.
inline constexpr const char* kTraceCsvHeader = "k,residual,objective,grad_norm,psnr,transform_id,noise_norm";
std::string trace_to_csv(const RunTrace& trace);

}  // namespace eqr
