#include <CLI11.hpp>

#include <charconv>
#include <cstdlib>
#include <filesystem>

#include "eqr/error.hpp"
#include "eqr/experiment.hpp"

namespace eqr {
namespace {

int resolve_threads(const std::optional<int>& flag)
{
    if (flag) {
        require(*flag >= 1, ErrorKind::Config, "--threads must be >= 1");
        return *flag;
    }
    if (const char* env = std::getenv("EQR_THREADS"); env != nullptr && *env != '\0') {
        int v = 0;
        const char* end = env + std::char_traits<char>::length(env);
        const auto [ptr, ec] = std::from_chars(env, end, v);
        require(ec == std::errc() && ptr == end && v >= 1, ErrorKind::Config,
                std::string("EQR_THREADS must be a positive integer, got '") + env + "'");
        return v;
    }
    return 1;
}

}  // namespace

int cli_main(int argc, char** argv, std::ostream& out, std::ostream& err)
{
    CLI::App app{"Equivariant plug-and-play restoration"};
    app.require_subcommand(1, 1);
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out_dir;
    std::optional<int> threads;
    const std::vector<std::pair<std::string, std::string>> verbs = {
        {"restore", "restore one image"},
        {"bench", "method x kernel x image sweep"},
        {"denoise-avg", "equivariant denoiser averaging"},
        {"verify", "run the convergence checks"},
    };
    for (const auto& [name, help] : verbs) {
        CLI::App* sub = app.add_subcommand(name, help);
        sub->add_option("--config", config_path, "experiment config file");
        sub->add_option("--seed", seed, "master seed (overrides the config)");
        sub->add_option("--out", out_dir, "output directory (overrides the config)");
        sub->add_option("--threads", threads, "worker threads (default $EQR_THREADS or 1)");
    }
    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n";
        return e.get_exit_code() == 0 ? kExitOk : kExitConfig;
    }
    const std::string verb = app.get_subcommands().front()->get_name();
    try {
        ExperimentConfig config;
        if (!config_path.empty()) {
            config = ExperimentConfig::load(config_path);
        } else if (verb == "verify") {
            config = ExperimentConfig::defaults_for(Task::Verify);
        } else if (verb == "denoise-avg") {
            config = ExperimentConfig::defaults_for(Task::Denoise);
        }
        if (seed) config.seed = *seed;
        if (out_dir) config.out = *out_dir;
        const int n_threads = resolve_threads(threads);
        if (verb == "restore") return cmd_restore(config, out);
        if (verb == "bench") return cmd_bench(config, n_threads, out);
        if (verb == "denoise-avg") return cmd_denoise_avg(config, out);
        return cmd_verify(config, out);
    } catch (const Error& e) {
        err << "error (" << to_string(e.kind()) << "): " << e.what() << "\n";
        return exit_code_for(e.kind());
    } catch (const std::filesystem::filesystem_error& e) {
        err << "error (io): " << e.what() << "\n";
        return kExitIo;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitNumeric;
    }
}

}  // namespace eqr
