#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "eqr/config.hpp"
#include "eqr/denoisers.hpp"
#include "eqr/error.hpp"
#include "eqr/fidelity.hpp"
#include "eqr/image.hpp"
#include "eqr/metrics.hpp"
#include "eqr/solvers.hpp"

namespace eqr {

inline constexpr const char* kVersion = "0.3.0";

enum class Task { Deblur, SuperResolution, Despeckle, Denoise, Verify };

std::string to_string(Task task);
Task task_from_name(const std::string& name);

/// Step size, denoiser noise level, regularization weight, iterations.
struct HyperRow {
    double delta = 0.0;
    double sigma = 0.0;
    double lambda = 0.0;
    int iterations = 0;
};

/// Published per-task defaults. ERED with the "snore" law takes the SNORE
/// row. Empty when the task has no row for the method.
std::optional<HyperRow> default_hyperparameters(Task task, Algorithm algorithm, const std::string& law);

struct DenoiserSpec {
    /// gaussian_mmse, linear_smoothing, huber_tv, box
    std::string kind = "linear_smoothing";
    std::string kernel = "gaussian:1";
    /// Strength and reference level of the smoothing/TV stand-ins. Unset
    /// values take family defaults: a weak regularizer for the RED family
    /// (alpha0 0.6, sigma0 1) and a working denoiser at the solver's noise
    /// level for the PnP family (alpha0 0.2, sigma0 4/255).
    std::optional<double> alpha0;
    std::optional<double> sigma0;
    double huber_c0 = 2e-6;
    double huber_eps = 0.01;
    double prior_mean = 0.5;
    double prior_variance = 0.05;
};

Denoiser build_denoiser(const DenoiserSpec& spec, double sigma, const Shape& shape, bool pnp_family = false);

struct ExperimentConfig {
    Task task = Task::Deblur;
    std::uint64_t seed = 0;
    std::string out = "out";

    // [input]
    std::string image = "synthetic";  // ground truth: NetPBM path or "synthetic"
    std::string observation;          // optional, already degraded
    std::string directory;            // bench / denoise-avg image directory
    int synthetic_size = 128;
    int synthetic_channels = 1;
    int synthetic_count = 2;

    // [forward]
    std::string kernel = "gaussian:2";
    int scale = 2;
    double noise = 5.0 / 255.0;
    /// Weighting std of the Gaussian data term; 1 gives f = ||Ax - y||^2 / 2.
    double weight = 1.0;
    double looks = 50.0;

    // [solver]
    Algorithm algorithm = Algorithm::ERED;
    std::optional<double> delta;
    std::optional<double> step_exponent;  // power schedule when set
    std::optional<double> sigma;
    std::optional<double> lambda;
    std::optional<int> iterations;
    std::vector<double> sigma_schedule;  // annealed_ered
    double divergence_threshold = 1e6;
    int snapshot_every = 0;

    // [law]
    std::string law = "flip";
    int max_shift = 8;
    std::optional<double> law_sigma;  // snore/all; defaults to the solver sigma

    // [denoiser]
    DenoiserSpec denoiser;

    // [bench]
    std::vector<std::string> methods;
    std::vector<std::string> kernels;

    // [denoise_avg]
    std::vector<double> sigmas = {5.0 / 255.0, 15.0 / 255.0, 25.0 / 255.0};
    std::vector<std::string> laws = {"identity", "rotation", "flip"};
    std::string average_mode = "exact";
    int samples = 16;

    // [verify]
    std::vector<std::string> checks = {"all"};
    int verify_seeds = 50;

    static ExperimentConfig from_tree(const ConfigTree& tree);
    static ExperimentConfig load(const std::filesystem::path& path);
    static ExperimentConfig defaults_for(Task task);
    ConfigTree to_tree() const;
};

/// Periodic grayscale or color texture in [0.05, 0.95]: random integer-
/// frequency gratings plus wrapped discs and bars (edges).
Image synthetic_texture(int size, int channels, std::uint64_t seed);

/// Ground-truth images named by the config: the NetPBM files of a directory
/// (sorted) or synthetic textures.
std::vector<std::pair<std::string, Image>> load_images(const ExperimentConfig& config);

Fidelity build_fidelity(const ExperimentConfig& config, const std::string& kernel_spec);

struct MethodSpec {
    Algorithm algorithm = Algorithm::ERED;
    std::string law = "identity";
    std::string label() const;
};
/// "red", "ered:flip", "snopnp", ...
MethodSpec parse_method(const std::string& text, const std::string& default_law);

struct ResolvedRun {
    Problem problem;
    Image truth;
    Image x0;
    SolverConfig solver;
    HyperRow hyper;
    std::string law;
};

/// Simulated (or loaded) observation, initialization and solver settings for
/// one restoration. The observation noise uses a stream derived from
/// `seed`; the solver uses another.
ResolvedRun prepare_restore(const ExperimentConfig& config, const MethodSpec& method, const Image& truth,
                            const std::string& kernel_spec, std::uint64_t seed,
                            const Image* observation = nullptr);

SolverConfig build_solver(const ExperimentConfig& config, const MethodSpec& method, const Shape& shape,
                          std::uint64_t seed, HyperRow* resolved = nullptr);

struct RestoreOutcome {
    RunTrace trace;
    Image restored;
    std::optional<MetricReport> init;
    std::optional<MetricReport> final;
};
RestoreOutcome execute(const ResolvedRun& run, const TraceOptions& extra = {});

// Verbs. Each writes its files under config.out and returns the exit code.
int cmd_restore(const ExperimentConfig& config, std::ostream& log);
int cmd_bench(const ExperimentConfig& config, int threads, std::ostream& log);
int cmd_denoise_avg(const ExperimentConfig& config, std::ostream& log);
int cmd_verify(const ExperimentConfig& config, std::ostream& log);

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 1;
inline constexpr int kExitIo = 2;
inline constexpr int kExitNumeric = 3;
inline constexpr int kExitCheckFailed = 4;

int exit_code_for(ErrorKind kind) noexcept;

inline constexpr const char* kBenchCsvHeader = "method,kernel,image,psnr,ssim,iterations,wall_ms";
inline constexpr const char* kDenoiseCsvHeader = "image,sigma,law,psnr_noisy,psnr,ssim";
inline constexpr const char* kRestoreCsvHeader = "metric,value";

/// argv entry point: eqr <verb> [--config PATH] [--seed U64] [--out DIR] [--threads N]
int cli_main(int argc, char** argv, std::ostream& out, std::ostream& err);

}  // namespace eqr
