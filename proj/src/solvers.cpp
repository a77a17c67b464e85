#include "eqr/solvers.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>

#include "eqr/error.hpp"
#include "eqr/metrics.hpp"

namespace eqr {
namespace {

// x - delta * grad - c * residual, element by element. Every gradient-family
// step goes through here so that reductions stay bit-identical.
Image gradient_update(const Image& x, const Image& grad, const Image& residual, double delta, double c)
{
    Image out = Image::zeros_like(x);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] - delta * grad[i] - c * residual[i];
    return out;
}

// x - grad f(x) / lambda; shared by the PnP family.
Image forward_step(const Image& x, const Problem& problem, double lambda)
{
    const Image g = problem.grad_f(x);
    const double inv = 1.0 / lambda;
    Image y = Image::zeros_like(x);
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = x[i] - inv * g[i];
    return y;
}

double regularization_weight(const Denoiser& d, double delta, double lambda)
{
    return delta * lambda / (d.sigma() * d.sigma());
}

void require_step_inputs(const Image& x, const Problem& problem)
{
    require(x.shape() == problem.x_shape, ErrorKind::Dimension,
            "iterate shape " + to_string(x.shape()) + " does not match problem shape " +
                to_string(problem.x_shape));
}

double noise_norm_of(const Transform& g)
{
    if (const auto* n = std::get_if<Transform::NoiseShift>(&g.variant())) return std::abs(n->scale) * norm(n->z);
    return 0.0;
}

std::string format_double(double v)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace

StepSchedule StepSchedule::constant(double delta)
{
    require(std::isfinite(delta) && delta >= 0.0, ErrorKind::Config, "step size must be >= 0");
    return StepSchedule(delta, 0.0, false);
}

StepSchedule StepSchedule::power(double delta, double alpha)
{
    require(std::isfinite(delta) && delta > 0.0, ErrorKind::Config, "step size must be > 0");
    require(alpha > 0.5 && alpha <= 1.0, ErrorKind::Config,
            "power schedule exponent must lie in (1/2, 1], got " + format_double(alpha));
    return StepSchedule(delta, alpha, true);
}

double StepSchedule::at(int k) const noexcept
{
    if (!power_) return delta_;
    return delta_ / std::pow(static_cast<double>(k) + 1.0, alpha_);
}

std::string to_string(Algorithm a)
{
    switch (a) {
        case Algorithm::RED: return "red";
        case Algorithm::ERED: return "ered";
        case Algorithm::PnP: return "pnp";
        case Algorithm::EPnP: return "epnp";
        case Algorithm::SnoPnP: return "snopnp";
        case Algorithm::AnnealedERED: return "annealed_ered";
    }
    return "unknown";
}

Algorithm algorithm_from_name(const std::string& name)
{
    for (Algorithm a : {Algorithm::RED, Algorithm::ERED, Algorithm::PnP, Algorithm::EPnP,
                        Algorithm::SnoPnP, Algorithm::AnnealedERED}) {
        if (to_string(a) == name) return a;
    }
    throw_error(ErrorKind::Config, "unknown algorithm '" + name +
                                       "' (valid: red, ered, pnp, epnp, snopnp, annealed_ered)");
}

bool is_pnp_family(Algorithm a) noexcept
{
    return a == Algorithm::PnP || a == Algorithm::EPnP || a == Algorithm::SnoPnP;
}

Image red_step(const Image& x, const Problem& problem, const Denoiser& d, double delta, double lambda)
{
    require_step_inputs(x, problem);
    const Image grad = problem.grad_f(x);
    const Image residual = x - d.denoise(x);
    return gradient_update(x, grad, residual, delta, regularization_weight(d, delta, lambda));
}

Image ered_step(const Image& x, const Problem& problem, const Denoiser& d, const Transform& g,
                double delta, double lambda)
{
    require_step_inputs(x, problem);
    const Image grad = problem.grad_f(x);
    const Image gx = g.apply(x);
    const Image residual = g.jacobian_transpose(gx - d.denoise(gx));
    return gradient_update(x, grad, residual, delta, regularization_weight(d, delta, lambda));
}

Image ered_step(const Image& x, const Problem& problem, const Denoiser& d, const TransformLaw& law,
                double delta, double lambda, Rng& rng)
{
    return ered_step(x, problem, d, law.sample(rng, x.shape()), delta, lambda);
}

Image pnp_step(const Image& x, const Problem& problem, const Denoiser& d, double lambda)
{
    require_step_inputs(x, problem);
    return d.denoise(forward_step(x, problem, lambda));
}

Image epnp_step(const Image& x, const Problem& problem, const Denoiser& d, const Transform& g,
                double lambda)
{
    require_step_inputs(x, problem);
    const Image y = forward_step(x, problem, lambda);
    return g.jacobian_transpose(d.denoise(g.apply(y)));
}

Image epnp_step(const Image& x, const Problem& problem, const Denoiser& d, const TransformLaw& law,
                double lambda, Rng& rng)
{
    return epnp_step(x, problem, d, law.sample(rng, x.shape()), lambda);
}

Image snopnp_step(const Image& x, const Problem& problem, const Denoiser& d, double lambda,
                  const Image& z, std::optional<double> noise_scale)
{
    require_step_inputs(x, problem);
    require_same_shape(x, z, "snopnp noise");
    const double s = noise_scale.value_or(d.sigma());
    Image u = forward_step(x, problem, lambda);
    for (std::size_t i = 0; i < u.size(); ++i) u[i] = u[i] + s * z[i];
    return d.denoise(u);
}

Image snopnp_step(const Image& x, const Problem& problem, const Denoiser& d, double lambda, Rng& rng)
{
    return snopnp_step(x, problem, d, lambda, rng.normal_image(x.shape()));
}

std::vector<double> linear_sigma_schedule(double start, double end, int levels)
{
    require(levels >= 1, ErrorKind::Config, "annealing needs at least one level");
    require(start > 0.0 && end > 0.0, ErrorKind::Config, "annealing levels must be > 0");
    std::vector<double> out(static_cast<std::size_t>(levels));
    for (int i = 0; i < levels; ++i) {
        out[static_cast<std::size_t>(i)] =
            levels == 1 ? start : start + (end - start) * static_cast<double>(i) / (levels - 1);
    }
    return out;
}

void validate(const SolverConfig& config, const Problem& problem)
{
    require(config.iterations >= 0, ErrorKind::Config, "iteration count must be >= 0");
    require(std::isfinite(config.lambda) && config.lambda > 0.0, ErrorKind::Config,
            "lambda must be finite and > 0");
    require(config.divergence_threshold > 0.0, ErrorKind::Config, "divergence threshold must be > 0");
    if (config.algorithm == Algorithm::AnnealedERED) {
        require(!config.sigma_schedule.empty(), ErrorKind::Config,
                "annealed_ered needs a sigma schedule");
        for (double s : config.sigma_schedule) {
            require(std::isfinite(s) && s > 0.0, ErrorKind::Config, "annealing levels must be > 0");
        }
    }
    (void)problem;
}

RunTrace run(const SolverConfig& config, const Problem& problem, const Image& x0,
             const TraceOptions& options)
{
    validate(config, problem);
    require_step_inputs(x0, problem);
    const auto t0 = std::chrono::steady_clock::now();

    RunTrace trace;
    trace.seed = config.seed;
    trace.records.reserve(static_cast<std::size_t>(config.iterations));
    Rng rng(config.seed);
    const bool speckle = problem.fidelity.kind() == FidelityKind::Speckle;
    const double floor = problem.fidelity.floor();
    auto project = [&](Image& v) {
        if (!speckle) return;
        for (double& e : v.data()) {
            if (e < floor) {
                e = floor;
                ++trace.projections;
            }
        }
    };

    Image x = x0;
    project(x);

    std::vector<Denoiser> levels;
    std::vector<TransformLaw> level_laws;
    if (config.algorithm == Algorithm::AnnealedERED) {
        for (double s : config.sigma_schedule) {
            levels.push_back(config.denoiser.with_sigma(s));
            level_laws.push_back(config.law.with_noise_sigma(s));
        }
    }

    const bool builtin = options.builtin_objective && !options.objective &&
                         config.denoiser.is_gradient_step();
    const int n = config.iterations;
    for (int k = 0; k < n; ++k) {
        IterationRecord rec;
        rec.k = k;
        Image next;
        try {
            switch (config.algorithm) {
                case Algorithm::RED:
                    next = red_step(x, problem, config.denoiser, config.schedule.at(k), config.lambda);
                    break;
                case Algorithm::ERED:
                case Algorithm::AnnealedERED: {
                    const bool annealed = config.algorithm == Algorithm::AnnealedERED;
                    const std::size_t level =
                        annealed ? static_cast<std::size_t>(k) * levels.size() / static_cast<std::size_t>(n) : 0;
                    const Denoiser& d = annealed ? levels[level] : config.denoiser;
                    const TransformLaw& law = annealed ? level_laws[level] : config.law;
                    const Transform g = law.sample(rng, x.shape());
                    rec.transform_id = g.id();
                    rec.noise_norm = noise_norm_of(g);
                    next = ered_step(x, problem, d, g, config.schedule.at(k), config.lambda);
                    break;
                }
                case Algorithm::PnP: next = pnp_step(x, problem, config.denoiser, config.lambda); break;
                case Algorithm::EPnP: {
                    const Transform g = config.law.sample(rng, x.shape());
                    rec.transform_id = g.id();
                    rec.noise_norm = noise_norm_of(g);
                    next = epnp_step(x, problem, config.denoiser, g, config.lambda);
                    break;
                }
                case Algorithm::SnoPnP: {
                    const Image z = rng.normal_image(x.shape());
                    rec.transform_id = "noise";
                    rec.noise_norm = config.denoiser.sigma() * norm(z);
                    next = snopnp_step(x, problem, config.denoiser, config.lambda, z);
                    break;
                }
            }
        } catch (const Error& e) {
            if (e.kind() != ErrorKind::Numeric && e.kind() != ErrorKind::Domain) throw;
            trace.status = RunStatus::Diverged;
            trace.diverged_at = k;
            trace.message = "iteration " + std::to_string(k) + ": " + e.what();
            break;
        }
        project(next);

        const bool finite = next.all_finite();
        const double size = finite ? norm(next) : INFINITY;
        rec.residual = finite ? norm(next - x) : INFINITY;
        if (!finite || size > config.divergence_threshold) {
            trace.records.push_back(rec);
            trace.status = RunStatus::Diverged;
            trace.diverged_at = k;
            trace.message = "iteration " + std::to_string(k) + ": " +
                            (finite ? "||x|| = " + format_double(size) + " exceeds threshold " +
                                          format_double(config.divergence_threshold)
                                    : std::string("non-finite iterate"));
            if (finite) x = std::move(next);
            break;
        }
        x = std::move(next);

        if (options.objective) rec.objective = options.objective(x);
        if (options.gradient) rec.grad_norm = norm(options.gradient(x));
        if (builtin) {
            const Denoiser& d = config.denoiser;
            if (is_pnp_family(config.algorithm)) {
                try {
                    const ProxInversion inv = invert_denoiser(d, x);
                    rec.objective = problem.f(x) + config.lambda * (d.h(inv.u) - 0.5 * squared_norm(inv.u - x));
                    Image g = problem.grad_f(x);
                    g.axpy(config.lambda, inv.u - x);
                    rec.grad_norm = norm(g);
                } catch (const Error&) {
                }
            } else {
                const double w = config.lambda / (d.sigma() * d.sigma());
                rec.objective = problem.f(x) + w * d.h(x);
                Image g = problem.grad_f(x);
                g.axpy(w, d.grad_h(x));
                rec.grad_norm = norm(g);
            }
        }
        if (options.ground_truth != nullptr) rec.psnr = psnr(*options.ground_truth, x);
        trace.records.push_back(std::move(rec));
        if (options.snapshot_every > 0 && (k + 1) % options.snapshot_every == 0) {
            trace.snapshots.emplace_back(k + 1, x);
        }
        if (options.observer) options.observer(k + 1, x);
    }

    trace.final_image = std::move(x);
    trace.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    return trace;
}

std::string trace_to_csv(const RunTrace& trace)
{
    std::string out = kTraceCsvHeader;
    out += '\n';
    auto opt = [](const std::optional<double>& v) { return v ? format_double(*v) : std::string(); };
    for (const auto& r : trace.records) {
        out += std::to_string(r.k);
        out += ',';
        out += format_double(r.residual);
        out += ',';
        out += opt(r.objective);
        out += ',';
        out += opt(r.grad_norm);
        out += ',';
        out += opt(r.psnr);
        out += ',';
        out += r.transform_id;
        out += ',';
        out += format_double(r.noise_norm);
        out += '\n';
    }
    return out;
}

}  // namespace eqr
