#include "eqr/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <mutex>
#include <numbers>
#include <set>
#include <thread>
#include <tuple>

#include "eqr/error.hpp"
#include "eqr/netpbm.hpp"
#include "eqr/rng.hpp"
#include "eqr/transforms.hpp"
#include "eqr/verify.hpp"

namespace eqr {
namespace {

constexpr double k255 = 255.0;

const std::set<std::string>& allowed_keys()
{
    static const std::set<std::string> keys = {
        "task",
        "seed",
        "out",
        "input.image",
        "input.observation",
        "input.directory",
        "input.size",
        "input.channels",
        "input.count",
        "forward.kernel",
        "forward.scale",
        "forward.noise",
        "forward.weight",
        "forward.looks",
        "solver.algorithm",
        "solver.delta",
        "solver.step_exponent",
        "solver.sigma",
        "solver.lambda",
        "solver.iterations",
        "solver.sigma_schedule",
        "solver.divergence_threshold",
        "solver.snapshot_every",
        "law.group",
        "law.max_shift",
        "law.sigma",
        "denoiser.kind",
        "denoiser.kernel",
        "denoiser.alpha0",
        "denoiser.sigma0",
        "denoiser.c0",
        "denoiser.eps",
        "denoiser.mean",
        "denoiser.variance",
        "bench.methods",
        "bench.kernels",
        "denoise_avg.sigmas",
        "denoise_avg.laws",
        "denoise_avg.mode",
        "denoise_avg.samples",
        "verify.checks",
        "verify.seeds",
    };
    return keys;
}

std::string join(const std::vector<std::string>& items)
{
    std::string out;
    for (const auto& s : items) out += (out.empty() ? "" : ", ") + s;
    return out;
}

std::string join_numbers(const std::vector<double>& items)
{
    std::string out;
    for (double v : items) out += (out.empty() ? "" : ", ") + format_number(v);
    return out;
}

int positive_int(const ConfigTree& t, const std::string& key, int fallback, int min_value = 1)
{
    const auto v = t.get_int(key);
    if (!v) return fallback;
    require(*v >= min_value && *v <= 1'000'000'000, ErrorKind::Config,
            "'" + key + "' must be >= " + std::to_string(min_value));
    return static_cast<int>(*v);
}

void write_text(const std::filesystem::path& path, const std::string& text)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) throw_error(ErrorKind::Io, "cannot write " + path.string());
    out << text;
    if (!out) throw_error(ErrorKind::Io, "write failed for " + path.string());
}

void make_out_dir(const std::filesystem::path& dir)
{
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw_error(ErrorKind::Io, "cannot create output directory " + dir.string() + ": " + ec.message());
}

std::uint64_t fnv1a(const std::string& s)
{
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

std::string num(double v)
{
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string fixed(double v, int digits)
{
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

std::string manifest_text(const ExperimentConfig& config, const std::string& verb,
                          const std::vector<std::pair<std::string, std::string>>& extra)
{
    ConfigTree t = config.to_tree();
    t.set("manifest.version", kVersion);
    t.set("manifest.verb", verb);
    t.set("manifest.seed", std::to_string(config.seed));
    for (const auto& [k, v] : extra) t.set("resolved." + k, v);
    return t.to_text();
}

bool has_metrics(const Image& truth, const Image& x) { return truth.size() > 0 && truth.shape() == x.shape(); }

}  // namespace

// ---------------------------------------------------------------------------

std::string to_string(Task task)
{
    switch (task) {
    case Task::Deblur: return "deblur";
    case Task::SuperResolution: return "super_resolution";
    case Task::Despeckle: return "despeckle";
    case Task::Denoise: return "denoise";
    case Task::Verify: return "verify";
    }
    return "deblur";
}

Task task_from_name(const std::string& name)
{
    if (name == "deblur") return Task::Deblur;
    if (name == "super_resolution" || name == "sr") return Task::SuperResolution;
    if (name == "despeckle") return Task::Despeckle;
    if (name == "denoise") return Task::Denoise;
    if (name == "verify") return Task::Verify;
    throw_error(ErrorKind::Config,
                "unknown task '" + name + "' (valid: deblur, super_resolution, despeckle, denoise, verify)");
}

std::optional<HyperRow> default_hyperparameters(Task task, Algorithm algorithm, const std::string& law)
{
    const bool snore = law == "snore" || law == "gaussian_shift";
    switch (task) {
    case Task::Deblur:
        switch (algorithm) {
        case Algorithm::RED: return HyperRow{1.5, 7 / k255, 0.15, 400};
        case Algorithm::ERED:
            if (snore) return HyperRow{1.5, 5 / k255, 0.5, 1000};
            return HyperRow{1.5, 8 / k255, 0.17, 400};
        case Algorithm::AnnealedERED: return HyperRow{1.5, 5 / k255, 0.5, 1500};
        case Algorithm::PnP:
        case Algorithm::EPnP: return HyperRow{1.0, 4 / k255, 0.53, 400};
        case Algorithm::SnoPnP: return HyperRow{1.0, 5 / k255, 0.53, 100};
        }
        break;
    case Task::SuperResolution:
        if (algorithm == Algorithm::RED) return HyperRow{2.0, 11 / k255, 0.07, 200};
        if (algorithm == Algorithm::ERED) return HyperRow{2.0, 13 / k255, 0.05, 200};
        break;
    case Task::Despeckle:
        if (algorithm == Algorithm::RED || algorithm == Algorithm::ERED) return HyperRow{0.01, 8 / k255, 100.0, 100};
        break;
    case Task::Denoise:
    case Task::Verify: break;
    }
    return std::nullopt;
}

Denoiser build_denoiser(const DenoiserSpec& spec, double sigma, const Shape& shape, bool pnp_family)
{
    const double alpha0 = spec.alpha0.value_or(pnp_family ? 0.2 : 0.6);
    const double sigma0 = spec.sigma0.value_or(pnp_family ? 4 / k255 : 1.0);
    if (spec.kind == "linear_smoothing") {
        return Denoiser::linear_smoothing(kernel_from_spec(spec.kernel), alpha0, sigma0, sigma);
    }
    if (spec.kind == "huber_tv") return Denoiser::huber_tv(spec.huber_c0, spec.huber_eps, sigma0, sigma);
    if (spec.kind == "box") return Denoiser::box(sigma);
    if (spec.kind == "gaussian_mmse") {
        return Denoiser::gaussian_mmse_isotropic(Image::constant(shape, spec.prior_mean), spec.prior_variance, sigma);
    }
    throw_error(ErrorKind::Config, "unknown denoiser kind '" + spec.kind +
                                       "' (valid: linear_smoothing, huber_tv, box, gaussian_mmse)");
}

// ---------------------------------------------------------------------------

ExperimentConfig ExperimentConfig::defaults_for(Task task)
{
    ExperimentConfig c;
    c.task = task;
    if (task == Task::Despeckle) {
        c.kernel = "dirac";
        c.noise = 0.0;
    }
    if (task == Task::SuperResolution) c.kernel = "gaussian:1.6";
    return c;
}

ExperimentConfig ExperimentConfig::from_tree(const ConfigTree& t)
{
    t.reject_unknown(allowed_keys());
    const Task task = task_from_name(t.get_string("task").value_or("deblur"));
    ExperimentConfig c = defaults_for(task);
    c.seed = t.get_u64("seed").value_or(c.seed);
    c.out = t.get_string("out").value_or(c.out);

    c.image = t.get_string("input.image").value_or(c.image);
    c.observation = t.get_string("input.observation").value_or(c.observation);
    c.directory = t.get_string("input.directory").value_or(c.directory);
    c.synthetic_size = positive_int(t, "input.size", c.synthetic_size, 8);
    c.synthetic_channels = positive_int(t, "input.channels", c.synthetic_channels);
    require(c.synthetic_channels == 1 || c.synthetic_channels == 3, ErrorKind::Config,
            "'input.channels' must be 1 or 3");
    c.synthetic_count = positive_int(t, "input.count", c.synthetic_count);

    c.kernel = t.get_string("forward.kernel").value_or(c.kernel);
    c.scale = positive_int(t, "forward.scale", c.scale);
    c.noise = t.get_number("forward.noise").value_or(c.noise);
    require(c.noise >= 0.0, ErrorKind::Config, "'forward.noise' must be >= 0");
    c.weight = t.get_number("forward.weight").value_or(c.weight);
    require(c.weight > 0.0, ErrorKind::Config, "'forward.weight' must be > 0");
    c.looks = t.get_number("forward.looks").value_or(c.looks);
    require(c.looks > 0.0, ErrorKind::Config, "'forward.looks' must be > 0");

    if (const auto a = t.get_string("solver.algorithm")) c.algorithm = algorithm_from_name(*a);
    c.delta = t.get_number("solver.delta");
    c.step_exponent = t.get_number("solver.step_exponent");
    c.sigma = t.get_number("solver.sigma");
    c.lambda = t.get_number("solver.lambda");
    if (t.has("solver.iterations")) c.iterations = positive_int(t, "solver.iterations", 0, 0);
    c.sigma_schedule = t.get_number_list("solver.sigma_schedule").value_or(c.sigma_schedule);
    c.divergence_threshold = t.get_number("solver.divergence_threshold").value_or(c.divergence_threshold);
    c.snapshot_every = positive_int(t, "solver.snapshot_every", c.snapshot_every, 0);

    c.law = t.get_string("law.group").value_or(c.law);
    c.max_shift = positive_int(t, "law.max_shift", c.max_shift, 0);
    c.law_sigma = t.get_number("law.sigma");
    (void)law_from_name(c.law, 1.0, c.max_shift);  // validates the name

    c.denoiser.kind = t.get_string("denoiser.kind").value_or(c.denoiser.kind);
    c.denoiser.kernel = t.get_string("denoiser.kernel").value_or(c.denoiser.kernel);
    if (t.has("denoiser.alpha0")) c.denoiser.alpha0 = t.get_number("denoiser.alpha0");
    if (t.has("denoiser.sigma0")) c.denoiser.sigma0 = t.get_number("denoiser.sigma0");
    c.denoiser.huber_c0 = t.get_number("denoiser.c0").value_or(c.denoiser.huber_c0);
    c.denoiser.huber_eps = t.get_number("denoiser.eps").value_or(c.denoiser.huber_eps);
    c.denoiser.prior_mean = t.get_number("denoiser.mean").value_or(c.denoiser.prior_mean);
    c.denoiser.prior_variance = t.get_number("denoiser.variance").value_or(c.denoiser.prior_variance);

    c.methods = t.get_list("bench.methods").value_or(c.methods);
    c.kernels = t.get_list("bench.kernels").value_or(c.kernels);
    if (t.has("bench.methods")) {
        require(!c.methods.empty(), ErrorKind::Config, "'bench.methods' is empty; list at least one method");
        for (const auto& m : c.methods) (void)parse_method(m, c.law);
    }

    c.sigmas = t.get_number_list("denoise_avg.sigmas").value_or(c.sigmas);
    c.laws = t.get_list("denoise_avg.laws").value_or(c.laws);
    c.average_mode = t.get_string("denoise_avg.mode").value_or(c.average_mode);
    require(c.average_mode == "exact" || c.average_mode == "monte_carlo", ErrorKind::Config,
            "'denoise_avg.mode' must be exact or monte_carlo");
    c.samples = positive_int(t, "denoise_avg.samples", c.samples);

    c.checks = t.get_list("verify.checks").value_or(c.checks);
    c.verify_seeds = positive_int(t, "verify.seeds", c.verify_seeds);
    return c;
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path)
{
    return from_tree(ConfigTree::load(path));
}

ConfigTree ExperimentConfig::to_tree() const
{
    ConfigTree t;
    t.set("task", to_string(task));
    t.set("seed", std::to_string(seed));
    t.set("out", out);
    t.set("input.image", image);
    if (!observation.empty()) t.set("input.observation", observation);
    if (!directory.empty()) t.set("input.directory", directory);
    t.set("input.size", std::to_string(synthetic_size));
    t.set("input.channels", std::to_string(synthetic_channels));
    t.set("input.count", std::to_string(synthetic_count));
    t.set("forward.kernel", kernel);
    t.set("forward.scale", std::to_string(scale));
    t.set("forward.noise", format_number(noise));
    t.set("forward.weight", format_number(weight));
    t.set("forward.looks", format_number(looks));
    t.set("solver.algorithm", to_string(algorithm));
    if (delta) t.set("solver.delta", format_number(*delta));
    if (step_exponent) t.set("solver.step_exponent", format_number(*step_exponent));
    if (sigma) t.set("solver.sigma", format_number(*sigma));
    if (lambda) t.set("solver.lambda", format_number(*lambda));
    if (iterations) t.set("solver.iterations", std::to_string(*iterations));
    if (!sigma_schedule.empty()) t.set("solver.sigma_schedule", join_numbers(sigma_schedule));
    t.set("solver.divergence_threshold", format_number(divergence_threshold));
    t.set("solver.snapshot_every", std::to_string(snapshot_every));
    t.set("law.group", law);
    t.set("law.max_shift", std::to_string(max_shift));
    if (law_sigma) t.set("law.sigma", format_number(*law_sigma));
    t.set("denoiser.kind", denoiser.kind);
    t.set("denoiser.kernel", denoiser.kernel);
    if (denoiser.alpha0) t.set("denoiser.alpha0", format_number(*denoiser.alpha0));
    if (denoiser.sigma0) t.set("denoiser.sigma0", format_number(*denoiser.sigma0));
    t.set("denoiser.c0", format_number(denoiser.huber_c0));
    t.set("denoiser.eps", format_number(denoiser.huber_eps));
    t.set("denoiser.mean", format_number(denoiser.prior_mean));
    t.set("denoiser.variance", format_number(denoiser.prior_variance));
    if (!methods.empty()) t.set("bench.methods", join(methods));
    if (!kernels.empty()) t.set("bench.kernels", join(kernels));
    t.set("denoise_avg.sigmas", join_numbers(sigmas));
    t.set("denoise_avg.laws", join(laws));
    t.set("denoise_avg.mode", average_mode);
    t.set("denoise_avg.samples", std::to_string(samples));
    t.set("verify.checks", join(checks));
    t.set("verify.seeds", std::to_string(verify_seeds));
    return t;
}

// ---------------------------------------------------------------------------

Image synthetic_texture(int size, int channels, std::uint64_t seed)
{
    require(size >= 8, ErrorKind::Config, "texture size must be >= 8");
    require(channels == 1 || channels == 3, ErrorKind::Config, "texture channels must be 1 or 3");
    Rng rng(seed);
    Image img(size, size, channels);
    const double two_pi = 2.0 * std::numbers::pi;
    const double scale = size / 128.0;

    struct Grating {
        int fx, fy;
        double phase, amp;
    };
    std::vector<Grating> gratings;
    for (int i = 0; i < 4; ++i) {
        int fx = 0;
        int fy = 0;
        while (fx == 0 && fy == 0) {
            fx = static_cast<int>(rng.uniform_int(-6, 6));
            fy = static_cast<int>(rng.uniform_int(-6, 6));
        }
        gratings.push_back({fx, fy, rng.uniform(0.0, two_pi), rng.uniform(0.05, 0.15)});
    }
    struct Disc {
        double cx, cy, radius, value;
    };
    std::vector<Disc> discs;
    for (int i = 0; i < 7; ++i) {
        discs.push_back({rng.uniform(0.0, size), rng.uniform(0.0, size), rng.uniform(5.0, 18.0) * scale,
                         rng.uniform(-0.3, 0.3)});
    }
    struct Bar {
        bool vertical;
        double pos, width, value;
    };
    std::vector<Bar> bars;
    for (int i = 0; i < 3; ++i) {
        bars.push_back({rng.uniform() < 0.5, rng.uniform(0.0, size), rng.uniform(3.0, 10.0) * scale,
                        rng.uniform(-0.2, 0.2)});
    }
    std::vector<double> tint(static_cast<std::size_t>(channels));
    for (double& t : tint) t = channels == 1 ? 1.0 : rng.uniform(0.6, 1.4);

    auto wrapped = [size](double d) {
        d = std::fmod(std::abs(d), static_cast<double>(size));
        return std::min(d, size - d);
    };
    for (int r = 0; r < size; ++r) {
        for (int c = 0; c < size; ++c) {
            double v = 0.0;
            for (const auto& g : gratings) {
                v += g.amp * std::sin(two_pi * (g.fx * c + g.fy * r) / size + g.phase);
            }
            for (const auto& d : discs) {
                const double dx = wrapped(c - d.cx);
                const double dy = wrapped(r - d.cy);
                if (dx * dx + dy * dy <= d.radius * d.radius) v += d.value;
            }
            for (const auto& b : bars) {
                if (wrapped((b.vertical ? c : r) - b.pos) <= 0.5 * b.width) v += b.value;
            }
            for (int ch = 0; ch < channels; ++ch) img.at(r, c, ch) = v * tint[static_cast<std::size_t>(ch)];
        }
    }
    double lo = img[0];
    double hi = img[0];
    for (double v : img.data()) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    const double span = hi > lo ? hi - lo : 1.0;
    for (double& v : img.data()) v = 0.05 + 0.9 * (v - lo) / span;
    return img;
}

std::vector<std::pair<std::string, Image>> load_images(const ExperimentConfig& config)
{
    std::vector<std::pair<std::string, Image>> out;
    if (!config.directory.empty()) {
        std::error_code ec;
        std::vector<std::filesystem::path> files;
        for (const auto& e : std::filesystem::directory_iterator(config.directory, ec)) {
            const auto ext = e.path().extension().string();
            if (e.is_regular_file() && (ext == ".pgm" || ext == ".ppm" || ext == ".pnm")) files.push_back(e.path());
        }
        if (ec) throw_error(ErrorKind::Io, "cannot list " + config.directory + ": " + ec.message());
        std::sort(files.begin(), files.end());
        require(!files.empty(), ErrorKind::Io, "no NetPBM images in " + config.directory);
        for (const auto& f : files) out.emplace_back(f.filename().string(), read_netpbm(f));
        return out;
    }
    if (config.image == "synthetic") {
        for (int i = 0; i < config.synthetic_count; ++i) {
            out.emplace_back("texture" + std::to_string(i),
                             synthetic_texture(config.synthetic_size, config.synthetic_channels,
                                               Rng::derive_seed(config.seed, 100 + static_cast<std::uint64_t>(i))));
        }
        return out;
    }
    out.emplace_back(std::filesystem::path(config.image).filename().string(), read_netpbm(config.image));
    return out;
}

Fidelity build_fidelity(const ExperimentConfig& config, const std::string& kernel_spec)
{
    switch (config.task) {
    case Task::Deblur:
        return Fidelity::gaussian(LinearOperator::blur(kernel_from_spec(kernel_spec)), config.noise, config.weight);
    case Task::SuperResolution:
        return Fidelity::gaussian(super_resolution_operator(kernel_from_spec(kernel_spec), config.scale), config.noise,
                                  config.weight);
    case Task::Despeckle: return Fidelity::speckle(config.looks);
    case Task::Denoise: return Fidelity::gaussian(LinearOperator::identity(), config.noise, config.weight);
    case Task::Verify: break;
    }
    throw_error(ErrorKind::Config, "task 'verify' has no data term");
}

std::string MethodSpec::label() const
{
    if (algorithm == Algorithm::RED || algorithm == Algorithm::PnP || algorithm == Algorithm::SnoPnP) {
        return to_string(algorithm);
    }
    return to_string(algorithm) + ":" + law;
}

MethodSpec parse_method(const std::string& text, const std::string& default_law)
{
    MethodSpec m;
    const auto colon = text.find(':');
    m.algorithm = algorithm_from_name(text.substr(0, colon));
    m.law = colon == std::string::npos ? default_law : text.substr(colon + 1);
    (void)law_from_name(m.law, 1.0);
    if (m.algorithm == Algorithm::RED || m.algorithm == Algorithm::PnP || m.algorithm == Algorithm::SnoPnP) {
        m.law = "identity";
    }
    return m;
}

SolverConfig build_solver(const ExperimentConfig& config, const MethodSpec& method, const Shape& shape,
                          std::uint64_t seed, HyperRow* resolved)
{
    const auto row = default_hyperparameters(config.task, method.algorithm, method.law);
    auto pick = [&](const std::optional<double>& set, double HyperRow::*field, const char* name) {
        if (set) return *set;
        if (!row) {
            throw_error(ErrorKind::Config, std::string("no default ") + name + " for " + method.label() + " on " +
                                               to_string(config.task) + "; set solver." + name);
        }
        return (*row).*field;
    };
    HyperRow h;
    h.delta = pick(config.delta, &HyperRow::delta, "delta");
    h.sigma = pick(config.sigma, &HyperRow::sigma, "sigma");
    h.lambda = pick(config.lambda, &HyperRow::lambda, "lambda");
    if (config.iterations) {
        h.iterations = *config.iterations;
    } else if (row) {
        h.iterations = row->iterations;
    } else {
        throw_error(ErrorKind::Config, "no default iterations for " + method.label() + "; set solver.iterations");
    }
    require(h.sigma > 0.0, ErrorKind::Config, "solver sigma must be > 0");
    if (resolved != nullptr) *resolved = h;

    SolverConfig s;
    s.algorithm = method.algorithm;
    s.schedule = config.step_exponent ? StepSchedule::power(h.delta, *config.step_exponent)
                                      : StepSchedule::constant(h.delta);
    s.lambda = h.lambda;
    s.denoiser = build_denoiser(config.denoiser, h.sigma, shape, is_pnp_family(method.algorithm));
    s.law = law_from_name(method.law, config.law_sigma.value_or(h.sigma), config.max_shift);
    s.iterations = h.iterations;
    s.seed = seed;
    s.divergence_threshold = config.divergence_threshold;
    if (method.algorithm == Algorithm::AnnealedERED) {
        s.sigma_schedule = config.sigma_schedule.empty() ? linear_sigma_schedule(3.0 * h.sigma, h.sigma, 10)
                                                         : config.sigma_schedule;
    }
    return s;
}

ResolvedRun prepare_restore(const ExperimentConfig& config, const MethodSpec& method, const Image& truth,
                            const std::string& kernel_spec, std::uint64_t seed, const Image* observation)
{
    Fidelity fidelity = build_fidelity(config, kernel_spec);
    Image y;
    Shape x_shape{};
    if (observation != nullptr) {
        y = *observation;
        x_shape = y.shape();
        if (config.task == Task::SuperResolution) {
            x_shape = Shape{y.height() * config.scale, y.width() * config.scale, y.channels()};
        }
        if (truth.size() > 0) {
            require(truth.shape() == x_shape, ErrorKind::Dimension,
                    "ground truth shape does not match the observation");
        }
    } else {
        require(truth.size() > 0, ErrorKind::Config, "need a ground-truth image or an observation");
        Rng noise(Rng::derive_seed(seed, 1));
        y = fidelity.observe(truth, noise);
        x_shape = truth.shape();
    }
    ResolvedRun r{Problem::make(std::move(fidelity), std::move(y), x_shape), truth, Image{}, SolverConfig{}, {},
                  method.law};
    r.x0 = default_initialization(r.problem);
    r.solver = build_solver(config, method, x_shape, Rng::derive_seed(seed, 2), &r.hyper);
    return r;
}

RestoreOutcome execute(const ResolvedRun& run_spec, const TraceOptions& extra)
{
    TraceOptions opts = extra;
    if (run_spec.truth.size() > 0 && run_spec.truth.shape() == run_spec.x0.shape()) {
        opts.ground_truth = &run_spec.truth;
    }
    if (!opts.objective && !opts.gradient) opts.builtin_objective = !is_pnp_family(run_spec.solver.algorithm);
    RestoreOutcome out;
    out.trace = run(run_spec.solver, run_spec.problem, run_spec.x0, opts);
    out.restored = clamp(out.trace.final_image, 0.0, 1.0);
    if (has_metrics(run_spec.truth, run_spec.x0)) {
        out.init = compare(run_spec.truth, clamp(run_spec.x0, 0.0, 1.0));
        if (out.restored.all_finite()) out.final = compare(run_spec.truth, out.restored);
    }
    return out;
}

// ---------------------------------------------------------------------------

int exit_code_for(ErrorKind kind) noexcept
{
    switch (kind) {
    case ErrorKind::Config:
    case ErrorKind::Parse:
    case ErrorKind::Unsupported:
    case ErrorKind::Dimension: return kExitConfig;
    case ErrorKind::Io: return kExitIo;
    case ErrorKind::Numeric:
    case ErrorKind::Domain:
    case ErrorKind::Diverged:
    case ErrorKind::Degenerate: return kExitNumeric;
    }
    return kExitNumeric;
}

int cmd_restore(const ExperimentConfig& config, std::ostream& log)
{
    require(config.task == Task::Deblur || config.task == Task::SuperResolution || config.task == Task::Despeckle ||
                config.task == Task::Denoise,
            ErrorKind::Config, "restore needs task deblur, super_resolution, despeckle or denoise");
    Image truth;
    if (config.image == "synthetic") {
        truth = synthetic_texture(config.synthetic_size, config.synthetic_channels, Rng::derive_seed(config.seed, 100));
    } else if (!config.image.empty()) {
        truth = read_netpbm(config.image);
    }
    std::optional<Image> observation;
    if (!config.observation.empty()) observation = read_netpbm(config.observation);

    const MethodSpec method = parse_method(to_string(config.algorithm) + ":" + config.law, config.law);
    const ResolvedRun spec =
        prepare_restore(config, method, truth, config.kernel, config.seed, observation ? &*observation : nullptr);
    TraceOptions opts;
    opts.snapshot_every = config.snapshot_every;
    const RestoreOutcome result = execute(spec, opts);

    const std::filesystem::path dir(config.out);
    make_out_dir(dir);
    const bool diverged = !result.trace.ok();
    if (!diverged) write_netpbm(result.restored, dir / "restored.pnm");
    write_text(dir / "trace.csv", trace_to_csv(result.trace));

    std::string report = std::string(kRestoreCsvHeader) + "\n";
    report += "method," + method.label() + "\n";
    report += "iterations," + std::to_string(result.trace.records.size()) + "\n";
    report += std::string("status,") + (diverged ? "diverged" : "completed") + "\n";
    if (result.init) {
        report += "psnr_init," + num(result.init->psnr) + "\nssim_init," + num(result.init->ssim) + "\n";
    }
    if (result.final) report += "psnr," + num(result.final->psnr) + "\nssim," + num(result.final->ssim) + "\n";
    write_text(dir / "report.csv", report);
    write_text(dir / "manifest.txt",
               manifest_text(config, "restore",
                             {{"method", method.label()},
                              {"delta", format_number(spec.hyper.delta)},
                              {"sigma", format_number(spec.hyper.sigma)},
                              {"lambda", format_number(spec.hyper.lambda)},
                              {"iterations", std::to_string(spec.hyper.iterations)},
                              {"solver_seed", std::to_string(spec.solver.seed)},
                              {"status", diverged ? "diverged" : "completed"}}));

    log << "restore " << method.label() << " N=" << spec.hyper.iterations;
    if (result.final && result.init) {
        log << " psnr " << fixed(result.final->psnr, 2) << " dB (init " << fixed(result.init->psnr, 2) << " dB) ssim "
            << fixed(result.final->ssim, 4);
    }
    log << (diverged ? " DIVERGED at k=" + std::to_string(result.trace.diverged_at) : std::string(" completed"))
        << "\n";
    if (diverged) {
        log << "error: " << result.trace.message << "\n";
        return kExitNumeric;
    }
    return kExitOk;
}

int cmd_bench(const ExperimentConfig& config, int threads, std::ostream& log)
{
    require(!config.methods.empty(), ErrorKind::Config, "bench needs at least one method (bench.methods)");
    require(config.task == Task::Deblur || config.task == Task::SuperResolution || config.task == Task::Despeckle,
            ErrorKind::Config, "bench needs task deblur, super_resolution or despeckle");
    const std::vector<std::string> kernels = config.kernels.empty() ? std::vector<std::string>{config.kernel}
                                                                    : config.kernels;
    const auto images = load_images(config);

    struct Cell {
        MethodSpec method;
        std::string kernel;
        std::size_t image = 0;
        double psnr = NAN;
        double ssim = NAN;
        int iterations = 0;
        double wall_ms = 0.0;
        std::string error;
        ErrorKind error_kind = ErrorKind::Numeric;
        bool thrown = false;
    };
    std::vector<Cell> cells;
    for (const auto& m : config.methods) {
        const MethodSpec spec = parse_method(m, config.law);
        for (const auto& k : kernels) {
            for (std::size_t i = 0; i < images.size(); ++i) {
                Cell c;
                c.method = spec;
                c.kernel = k;
                c.image = i;
                cells.push_back(std::move(c));
            }
        }
    }
    std::stable_sort(cells.begin(), cells.end(), [&](const Cell& a, const Cell& b) {
        return std::make_tuple(a.method.label(), a.kernel, images[a.image].first) <
               std::make_tuple(b.method.label(), b.kernel, images[b.image].first);
    });

    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < cells.size(); i = next++) {
            Cell& c = cells[i];
            const std::string key = c.method.label() + "|" + c.kernel + "|" + images[c.image].first;
            try {
                const ResolvedRun spec = prepare_restore(config, c.method, images[c.image].second, c.kernel,
                                                         Rng::derive_seed(config.seed, fnv1a(key)));
                const RestoreOutcome r = execute(spec);
                c.iterations = static_cast<int>(r.trace.records.size());
                c.wall_ms = r.trace.wall_ms;
                if (r.final && r.trace.ok()) {
                    c.psnr = r.final->psnr;
                    c.ssim = r.final->ssim;
                }
            } catch (const Error& e) {
                c.thrown = true;
                c.error = e.what();
                c.error_kind = e.kind();
            }
        }
    };
    const int n_threads = std::max(1, std::min<int>(threads, static_cast<int>(cells.size())));
    std::vector<std::thread> pool;
    for (int t = 1; t < n_threads; ++t) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();
    for (const Cell& c : cells) {
        if (c.thrown) throw_error(c.error_kind, c.method.label() + " / " + c.kernel + ": " + c.error);
    }

    std::string csv = std::string(kBenchCsvHeader) + "\n";
    std::map<std::string, std::vector<const Cell*>> by_method;
    std::vector<std::string> order;
    for (const Cell& c : cells) {
        csv += c.method.label() + "," + c.kernel + "," + images[c.image].first + "," + num(c.psnr) + "," +
               num(c.ssim) + "," + std::to_string(c.iterations) + "," + fixed(c.wall_ms, 3) + "\n";
        if (by_method.count(c.method.label()) == 0) order.push_back(c.method.label());
        by_method[c.method.label()].push_back(&c);
    }
    std::map<std::string, double> mean_psnr;
    for (const auto& label : order) {
        double p = 0.0;
        double s = 0.0;
        double it = 0.0;
        double ms = 0.0;
        const auto& list = by_method[label];
        for (const Cell* c : list) {
            p += c->psnr;
            s += c->ssim;
            it += c->iterations;
            ms += c->wall_ms;
        }
        const double n = static_cast<double>(list.size());
        mean_psnr[label] = p / n;
        csv += label + ",*,mean," + num(p / n) + "," + num(s / n) + "," + num(it / n) + "," + fixed(ms / n, 3) + "\n";
        log << "bench " << label << ": mean psnr " << fixed(p / n, 2) << " dB, ssim " << fixed(s / n, 4) << " over "
            << list.size() << " cells\n";
    }
    for (std::size_t i = 1; i < order.size(); ++i) {
        log << "bench " << order[i] << " - " << order[0] << ": "
            << fixed(mean_psnr[order[i]] - mean_psnr[order[0]], 3) << " dB\n";
    }
    const std::filesystem::path dir(config.out);
    make_out_dir(dir);
    write_text(dir / "report.csv", csv);
    write_text(dir / "manifest.txt",
               manifest_text(config, "bench",
                             {{"cells", std::to_string(cells.size())}, {"threads", std::to_string(n_threads)}}));
    return kExitOk;
}

int cmd_denoise_avg(const ExperimentConfig& config, std::ostream& log)
{
    require(!config.sigmas.empty(), ErrorKind::Config, "denoise-avg needs at least one sigma");
    require(!config.laws.empty(), ErrorKind::Config, "denoise-avg needs at least one law");
    const auto images = load_images(config);
    std::string csv = std::string(kDenoiseCsvHeader) + "\n";
    for (std::size_t ii = 0; ii < images.size(); ++ii) {
        const auto& [name, x] = images[ii];
        for (std::size_t si = 0; si < config.sigmas.size(); ++si) {
            const double s = config.sigmas[si];
            require(s > 0.0, ErrorKind::Config, "denoise-avg sigmas must be > 0");
            Rng noise_rng(Rng::derive_seed(config.seed, fnv1a(name + "|" + std::to_string(si))));
            Image noisy = x;
            noisy.axpy(s, noise_rng.normal_image(x.shape()));
            const Denoiser base = build_denoiser(config.denoiser, s, x.shape());
            const double psnr_noisy = psnr(x, noisy);
            auto row = [&](const std::string& law, const Image& out) {
                const Image c = clamp(out, 0.0, 1.0);
                csv += name + "," + format_number(s) + "," + law + "," + num(psnr_noisy) + "," + num(psnr(x, c)) +
                       "," + num(ssim(x, c)) + "\n";
                log << "denoise-avg " << name << " sigma " << fixed(s * 255.0, 1) << "/255 " << law << ": "
                    << fixed(psnr(x, c), 3) << " dB\n";
            };
            row("simple", base.denoise(noisy));
            for (const auto& law_name : config.laws) {
                const TransformLaw law = law_from_name(law_name, s, config.max_shift);
                const bool exact = config.average_mode == "exact";
                require(!exact || law.enumerable(), ErrorKind::Config,
                        "law '" + law_name + "' cannot be enumerated; use denoise_avg.mode = monte_carlo");
                const EquivariantDenoiser ed(base, law, exact ? AverageMode::Exact : AverageMode::MonteCarlo,
                                             config.samples);
                Rng rng(Rng::derive_seed(config.seed, fnv1a(name + "|" + std::to_string(si) + "|" + law_name)));
                row(law_name, ed.denoise(noisy, rng));
            }
        }
    }
    const std::filesystem::path dir(config.out);
    make_out_dir(dir);
    write_text(dir / "report.csv", csv);
    write_text(dir / "manifest.txt", manifest_text(config, "denoise-avg", {{"images", std::to_string(images.size())}}));
    return kExitOk;
}

int cmd_verify(const ExperimentConfig& config, std::ostream& log)
{
    const auto reports = run_checks(config.checks, config.seed, config.verify_seeds);
    std::string csv = std::string(kReportCsvHeader) + "\n";
    bool all_ok = true;
    for (const auto& r : reports) {
        csv += r.csv_rows();
        log << r.summary();
        all_ok = all_ok && r.passed();
    }
    const std::filesystem::path dir(config.out);
    make_out_dir(dir);
    write_text(dir / "report.csv", csv);
    write_text(dir / "manifest.txt", manifest_text(config, "verify",
                                                   {{"checks", std::to_string(reports.size())},
                                                    {"passed", all_ok ? "true" : "false"}}));
    log << "verify: " << (all_ok ? "all checks passed" : "some checks FAILED") << "\n";
    return all_ok ? kExitOk : kExitCheckFailed;
}

}  // namespace eqr
