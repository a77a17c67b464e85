#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "eqr/config.hpp"
#include "eqr/error.hpp"
#include "eqr/experiment.hpp"
#include "eqr/netpbm.hpp"
#include "eqr/rng.hpp"
#include "eqr/solvers.hpp"
#include "eqr/verify.hpp"

using namespace eqr;
namespace fs = std::filesystem;

namespace {

ErrorKind kind_of(const std::function<void()>& fn)
{
    try {
        fn();
    } catch (const Error& e) {
        return e.kind();
    }
    FAIL("expected an eqr::Error");
    return ErrorKind::Numeric;
}

std::string error_text(const std::function<void()>& fn)
{
    try {
        fn();
    } catch (const Error& e) {
        return e.what();
    }
    return {};
}

fs::path scratch(const std::string& name)
{
    const fs::path p = fs::temp_directory_path() / ("eqr_test_cli_" + std::to_string(::getpid())) / name;
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

void write_file(const fs::path& p, const std::string& text)
{
    std::ofstream f(p, std::ios::binary);
    f << text;
}

std::string read_file(const fs::path& p)
{
    std::ifstream f(p, std::ios::binary);
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

struct CliResult {
    int code = 0;
    std::string out;
    std::string err;
};

CliResult cli(std::vector<std::string> args)
{
    args.insert(args.begin(), "eqr");
    std::vector<char*> argv;
    for (auto& a : args) argv.push_back(a.data());
    std::ostringstream out;
    std::ostringstream err;
    CliResult r;
    r.code = cli_main(static_cast<int>(argv.size()), argv.data(), out, err);
    r.out = out.str();
    r.err = err.str();
    return r;
}

// metric,value rows of a restore report.
std::map<std::string, std::string> report_rows(const fs::path& p)
{
    std::map<std::string, std::string> rows;
    std::istringstream in(read_file(p));
    std::string line;
    while (std::getline(in, line)) {
        const auto comma = line.find(',');
        if (comma != std::string::npos) rows[line.substr(0, comma)] = line.substr(comma + 1);
    }
    return rows;
}

std::vector<std::vector<std::string>> csv_rows(const fs::path& p)
{
    std::vector<std::vector<std::string>> rows;
    std::istringstream in(read_file(p));
    std::string line;
    std::getline(in, line);  // header
    while (std::getline(in, line)) {
        std::vector<std::string> cells;
        std::stringstream ls(line);
        std::string cell;
        while (std::getline(ls, cell, ',')) cells.push_back(cell);
        rows.push_back(cells);
    }
    return rows;
}

}  // namespace

TEST_CASE("numbers: decimals and rationals")
{
    CHECK(parse_number("7/255") == 7.0 / 255.0);
    CHECK(parse_number("0.17") == 0.17);
    CHECK(parse_number("1e-3") == 1e-3);
    CHECK(parse_number("-2.5") == -2.5);
    CHECK(parse_number(" 8/255 ") == 8.0 / 255.0);
    for (const char* bad : {"", "abc", "7/", "/255", "1/0", "0.1x", "1//2"}) {
        CHECK_MESSAGE(!try_parse_number(bad).has_value(), bad);
        CHECK(kind_of([&] { (void)parse_number(bad); }) == ErrorKind::Parse);
    }
    Rng rng(1);
    for (int i = 0; i < 1000; ++i) {
        const double v = std::ldexp(rng.uniform() - 0.5, static_cast<int>(rng.uniform() * 40.0) - 20);
        CHECK(parse_number(format_number(v)) == v);
    }
    CHECK(format_number(0.5) == "0.5");
}

TEST_CASE("config tree: sections, comments, lines")
{
    const std::string text = "# experiment\n"
                             "seed = 3\n"
                             "task = deblur ; trailing\n"
                             "[solver]\n"
                             "sigma = 8/255\n"
                             "\n"
                             "iterations = 40\n"
                             "[bench]\n"
                             "methods = red, ered:flip\n";
    const ConfigTree t = ConfigTree::parse(text, "demo.cfg");
    CHECK(t.get_u64("seed") == 3u);
    CHECK(t.get_string("task") == "deblur");
    CHECK(t.get_number("solver.sigma") == 8.0 / 255.0);
    CHECK(t.get_int("solver.iterations") == 40);
    CHECK(t.line_of("solver.iterations") == 7);
    CHECK(t.get_list("bench.methods") == std::vector<std::string>{"red", "ered:flip"});
    CHECK_FALSE(t.has("solver.lambda"));

    const ConfigTree back = ConfigTree::parse(t.to_text());
    CHECK(back.keys() == t.keys());
    for (const auto& k : t.keys()) CHECK(back.get_string(k) == t.get_string(k));
    CHECK(back.to_text() == t.to_text());

    CHECK(kind_of([] { (void)ConfigTree::parse("seed 3\n"); }) == ErrorKind::Parse);
    CHECK(kind_of([] { (void)ConfigTree::parse("[solver\nx = 1\n"); }) == ErrorKind::Parse);
    CHECK(kind_of([] { (void)ConfigTree::parse("a = 1\na = 2\n"); }) == ErrorKind::Parse);
    CHECK(kind_of([] { (void)ConfigTree::load("/nonexistent/eqr.cfg"); }) == ErrorKind::Io);
}

TEST_CASE("experiment config: unknown keys and round trip")
{
    const std::string text = "task = deblur\n[solver]\nsigma = 8/255\nsigmaa = 1\n";
    const std::string msg = error_text([&] { (void)ExperimentConfig::from_tree(ConfigTree::parse(text, "x.cfg")); });
    CHECK(msg.find("solver.sigmaa") != std::string::npos);
    CHECK(msg.find("x.cfg") != std::string::npos);
    CHECK(msg.find('4') != std::string::npos);
    CHECK(kind_of([&] { (void)ExperimentConfig::from_tree(ConfigTree::parse(text)); }) == ErrorKind::Config);

    const std::string full = "task = super_resolution\nseed = 9\n"
                             "[solver]\nalgorithm = ered\nsigma = 13/255\nlambda = 0.05\niterations = 12\n"
                             "[law]\ngroup = rotation\n"
                             "[denoiser]\nkind = huber_tv\neps = 0.02\n"
                             "[bench]\nmethods = red, ered:flip\nkernels = gaussian:1, box:3\n";
    const ExperimentConfig c = ExperimentConfig::from_tree(ConfigTree::parse(full));
    CHECK(c.task == Task::SuperResolution);
    CHECK(c.kernel == "gaussian:1.6");
    CHECK(c.sigma == 13.0 / 255.0);
    CHECK(c.iterations == 12);
    CHECK(c.methods.size() == 2);
    const ExperimentConfig d = ExperimentConfig::from_tree(c.to_tree());
    CHECK(d.to_tree().to_text() == c.to_tree().to_text());
    CHECK(d.sigma == c.sigma);
    CHECK(d.denoiser.huber_eps == 0.02);

    for (const char* bad : {"task = inpaint\n", "[solver]\nalgorithm = admm\n", "[bench]\nmethods = \n",
                            "[denoise_avg]\nmode = average\n", "[input]\nsize = 2\n", "[bench]\nmethods = red:spin\n"}) {
        CHECK_MESSAGE(kind_of([&] { (void)ExperimentConfig::from_tree(ConfigTree::parse(bad)); }) == ErrorKind::Config,
                      bad);
    }
}

TEST_CASE("published per-task defaults")
{
    // Deblurring at sigma_y = 5/255, super-resolution, despeckling.
    struct Row {
        Task task;
        Algorithm algorithm;
        const char* law;
        double delta, sigma, lambda;
        int n;
    };
    const Row rows[] = {
        {Task::Deblur, Algorithm::RED, "identity", 1.5, 7 / 255.0, 0.15, 400},
        {Task::Deblur, Algorithm::ERED, "flip", 1.5, 8 / 255.0, 0.17, 400},
        {Task::Deblur, Algorithm::ERED, "snore", 1.5, 5 / 255.0, 0.5, 1000},
        {Task::Deblur, Algorithm::PnP, "identity", 1.0, 4 / 255.0, 0.53, 400},
        {Task::Deblur, Algorithm::EPnP, "flip", 1.0, 4 / 255.0, 0.53, 400},
        {Task::Deblur, Algorithm::SnoPnP, "identity", 1.0, 5 / 255.0, 0.53, 100},
        {Task::SuperResolution, Algorithm::RED, "identity", 2.0, 11 / 255.0, 0.07, 200},
        {Task::SuperResolution, Algorithm::ERED, "flip", 2.0, 13 / 255.0, 0.05, 200},
        {Task::Despeckle, Algorithm::RED, "identity", 0.01, 8 / 255.0, 100.0, 100},
        {Task::Despeckle, Algorithm::ERED, "flip", 0.01, 8 / 255.0, 100.0, 100},
    };
    for (const Row& r : rows) {
        const auto h = default_hyperparameters(r.task, r.algorithm, r.law);
        REQUIRE(h.has_value());
        CHECK(h->delta == r.delta);
        CHECK(h->sigma == r.sigma);
        CHECK(h->lambda == r.lambda);
        CHECK(h->iterations == r.n);
    }
    CHECK_FALSE(default_hyperparameters(Task::SuperResolution, Algorithm::SnoPnP, "identity").has_value());
    CHECK_FALSE(default_hyperparameters(Task::Despeckle, Algorithm::PnP, "identity").has_value());

    // The config resolves them when the solver keys are absent.
    ExperimentConfig c = ExperimentConfig::defaults_for(Task::Deblur);
    c.algorithm = Algorithm::RED;
    HyperRow used;
    (void)build_solver(c, parse_method("red", "identity"), {16, 16, 1}, 1, &used);
    CHECK(used.delta == 1.5);
    CHECK(used.sigma == 7 / 255.0);
    CHECK(used.iterations == 400);
    c.sigma = 3 / 255.0;
    (void)build_solver(c, parse_method("red", "identity"), {16, 16, 1}, 1, &used);
    CHECK(used.sigma == 3 / 255.0);
    CHECK(used.lambda == 0.15);
}

TEST_CASE("exit codes")
{
    CHECK(exit_code_for(ErrorKind::Config) == 1);
    CHECK(exit_code_for(ErrorKind::Parse) == 1);
    CHECK(exit_code_for(ErrorKind::Unsupported) == 1);
    CHECK(exit_code_for(ErrorKind::Dimension) == 1);
    CHECK(exit_code_for(ErrorKind::Io) == 2);
    CHECK(exit_code_for(ErrorKind::Numeric) == 3);
    CHECK(exit_code_for(ErrorKind::Diverged) == 3);
    CHECK(exit_code_for(ErrorKind::Domain) == 3);
    CHECK(exit_code_for(ErrorKind::Degenerate) == 3);

    const fs::path dir = scratch("codes");
    CHECK(cli({"restore", "--config", (dir / "missing.cfg").string()}).code == kExitIo);
    write_file(dir / "bad.cfg", "[solver]\nsigmaa = 1\n");
    const CliResult bad = cli({"restore", "--config", (dir / "bad.cfg").string()});
    CHECK(bad.code == kExitConfig);
    CHECK(bad.err.find("solver.sigmaa") != std::string::npos);
    CHECK(cli({"frobnicate"}).code == kExitConfig);
    CHECK(cli({}).code == kExitConfig);
    CHECK(cli({"restore", "--threads", "0"}).code == kExitConfig);
    CHECK(cli({"restore", "--help"}).code == kExitOk);

    write_file(dir / "input.cfg", "[input]\nimage = " + (dir / "nothere.pgm").string() + "\n");
    CHECK(cli({"restore", "--config", (dir / "input.cfg").string(), "--out", (dir / "o").string()}).code == kExitIo);

    // A run that leaves the divergence ball: numeric exit, no image written.
    write_file(dir / "div.cfg", "[input]\nsize = 16\n[solver]\nalgorithm = red\ndelta = 50\niterations = 30\n"
                                "[law]\ngroup = identity\n");
    const CliResult div = cli({"restore", "--config", (dir / "div.cfg").string(), "--out", (dir / "div").string()});
    CHECK(div.code == kExitNumeric);
    CHECK_FALSE(fs::exists(dir / "div" / "restored.pnm"));
    CHECK(report_rows(dir / "div" / "report.csv")["status"] == "diverged");

    ::setenv("EQR_THREADS", "two", 1);
    CHECK(cli({"verify", "--out", (dir / "v").string()}).code == kExitConfig);
    ::unsetenv("EQR_THREADS");
}

TEST_CASE("restore: no-op pipeline returns the input")
{
    const fs::path dir = scratch("noop");
    Rng rng(3);
    Image truth(16, 16, 1);
    for (std::size_t i = 0; i < truth.size(); ++i) truth[i] = std::round(rng.uniform() * 255.0) / 255.0;
    write_netpbm(truth, dir / "truth.pgm");
    write_file(dir / "noop.cfg", "[input]\nimage = " + (dir / "truth.pgm").string() +
                                     "\n[forward]\nkernel = dirac\nnoise = 0\n[solver]\niterations = 0\n");
    const CliResult r = cli({"restore", "--config", (dir / "noop.cfg").string(), "--out", (dir / "out").string()});
    REQUIRE_MESSAGE(r.code == 0, r.err);
    auto rows = report_rows(dir / "out" / "report.csv");
    CHECK(parse_number(rows["psnr"]) == 100.0);
    CHECK(parse_number(rows["ssim"]) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(rows["iterations"] == "0");
    const Image back = read_netpbm(dir / "out" / "restored.pnm");
    CHECK(back == truth);
    CHECK(read_file(dir / "out" / "trace.csv") == std::string(kTraceCsvHeader) + "\n");
    const std::string manifest = read_file(dir / "out" / "manifest.txt");
    CHECK(manifest.find(kVersion) != std::string::npos);
    CHECK(manifest.find("seed") != std::string::npos);
}

TEST_CASE("restore: byte-identical reruns")
{
    const fs::path dir = scratch("det");
    write_file(dir / "det.cfg", "seed = 17\n[input]\nsize = 32\n[solver]\nalgorithm = ered\niterations = 25\n"
                                "[law]\ngroup = rotation\n");
    // Same --out both times; the manifest echoes it.
    for (const char* o : {"a", "b"}) {
        const CliResult r = cli({"restore", "--config", (dir / "det.cfg").string(), "--out", (dir / "run").string()});
        REQUIRE_MESSAGE(r.code == 0, r.err);
        fs::rename(dir / "run", dir / o);
    }
    for (const char* f : {"restored.pnm", "trace.csv", "report.csv", "manifest.txt"}) {
        CHECK_MESSAGE(read_file(dir / "a" / f) == read_file(dir / "b" / f), f);
    }
    const CliResult other = cli({"restore", "--config", (dir / "det.cfg").string(), "--seed", "18", "--out",
                                 (dir / "c").string()});
    REQUIRE(other.code == 0);
    CHECK(read_file(dir / "a" / "restored.pnm") != read_file(dir / "c" / "restored.pnm"));
    const auto rows = report_rows(dir / "a" / "report.csv");
    CHECK(rows.at("iterations") == "25");
    CHECK(parse_number(rows.at("psnr")) > parse_number(rows.at("psnr_init")));
    CHECK(csv_rows(dir / "a" / "trace.csv").size() == 25);
}

TEST_CASE("bench: cells and means")
{
    const fs::path dir = scratch("bench");
    write_file(dir / "b.cfg", "[input]\nsize = 32\ncount = 1\n[solver]\niterations = 5\n"
                              "[bench]\nmethods = red, ered:flip\nkernels = gaussian:1\n");
    const CliResult r = cli({"bench", "--config", (dir / "b.cfg").string(), "--out", (dir / "o").string()});
    REQUIRE_MESSAGE(r.code == 0, r.err);
    const std::string csv = read_file(dir / "o" / "report.csv");
    CHECK(csv.rfind(std::string(kBenchCsvHeader) + "\n", 0) == 0);
    const auto rows = csv_rows(dir / "o" / "report.csv");
    REQUIRE(rows.size() == 4);
    int means = 0;
    for (const auto& row : rows) {
        REQUIRE(row.size() == 7);
        if (row[2] == "mean") ++means;
        CHECK(std::isfinite(parse_number(row[3])));
    }
    CHECK(means == 2);
    CHECK(r.out.find(" dB") != std::string::npos);

    // Threads change the schedule, not the table.
    const CliResult t2 = cli({"bench", "--config", (dir / "b.cfg").string(), "--out", (dir / "p").string(),
                              "--threads", "2"});
    REQUIRE(t2.code == 0);
    const auto rows2 = csv_rows(dir / "p" / "report.csv");
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (std::size_t c = 0; c < 6; ++c) CHECK(rows[i][c] == rows2[i][c]);
    }

    ExperimentConfig empty = ExperimentConfig::defaults_for(Task::Deblur);
    empty.out = (dir / "e").string();
    std::ostringstream log;
    CHECK(kind_of([&] { (void)cmd_bench(empty, 1, log); }) == ErrorKind::Config);
}

TEST_CASE("denoise-avg: averaging rows")
{
    const fs::path dir = scratch("avg");
    auto run_avg = [&](const std::string& kernel, const std::string& name) {
        write_file(dir / (name + ".cfg"), "task = denoise\n[input]\nsize = 32\ncount = 1\n"
                                          "[denoiser]\nkernel = " + kernel +
                                              "\nalpha0 = 0.8\n"
                                              "[denoise_avg]\nsigmas = 15/255\nlaws = identity, rotation, flip\n");
        const CliResult r = cli({"denoise-avg", "--config", (dir / (name + ".cfg")).string(), "--out",
                                 (dir / name).string()});
        REQUIRE_MESSAGE(r.code == 0, r.err);
        std::map<std::string, double> psnr_by_law;
        for (const auto& row : csv_rows(dir / name / "report.csv")) psnr_by_law[row[2]] = parse_number(row[4]);
        return psnr_by_law;
    };
    const auto iso = run_avg("gaussian:1", "iso");
    CHECK(iso.at("identity") == iso.at("simple"));
    CHECK(std::abs(iso.at("rotation") - iso.at("simple")) < 1e-12);
    CHECK(std::abs(iso.at("flip") - iso.at("simple")) < 1e-12);
    CHECK(iso.at("simple") > 0.0);

    const auto skew = run_avg("motion:5:30", "skew");
    CHECK(skew.at("identity") == skew.at("simple"));
    CHECK(skew.at("rotation") != skew.at("simple"));
}

TEST_CASE("verify verb")
{
    const fs::path dir = scratch("verify");
    write_file(dir / "bad.cfg", "task = verify\n[verify]\nchecks = prop4\n");
    const CliResult bad = cli({"verify", "--config", (dir / "bad.cfg").string(), "--out", (dir / "x").string()});
    CHECK(bad.code == kExitConfig);
    CHECK(bad.err.find("prop2") != std::string::npos);
    CHECK(bad.err.find("prop4") != std::string::npos);

    write_file(dir / "ok.cfg", "task = verify\nseed = 5\n[verify]\nchecks = prop5, prop6\nseeds = 2\n");
    for (const char* o : {"a", "b"}) {
        const CliResult r = cli({"verify", "--config", (dir / "ok.cfg").string(), "--out", (dir / "run").string()});
        CHECK_MESSAGE(r.code == 0, r.out);
        fs::rename(dir / "run", dir / o);
    }
    const std::string report = read_file(dir / "a" / "report.csv");
    CHECK(report.rfind(std::string(kReportCsvHeader) + "\n", 0) == 0);
    CHECK(report.find("prop5_") != std::string::npos);
    CHECK(report == read_file(dir / "b" / "report.csv"));
    CHECK(read_file(dir / "a" / "manifest.txt") == read_file(dir / "b" / "manifest.txt"));
}
