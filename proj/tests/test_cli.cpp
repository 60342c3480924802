#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

#include "embedlab/pipeline.hpp"

namespace fs = std::filesystem;

namespace {

std::string cli_path() {
    const char* p = std::getenv("EMBEDLAB_CLI");
    REQUIRE(p != nullptr);
    return p;
}

int run_cli(const std::string& args) {
    std::string cmd = cli_path() + " " + args + " >/dev/null 2>&1";
    int rc = std::system(cmd.c_str());
    REQUIRE(rc != -1);
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

fs::path fresh_dir(const std::string& name) {
    fs::path dir = fs::temp_directory_path() / ("embedlab_test_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

void write_file(const fs::path& p, const std::string& text) {
    std::ofstream out(p);
    out << text;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

const std::string small_bs_cfg =
    "model = bs\n"
    "pipeline = solve, embed, paste, order, fbp_residual, mc_compare\n"
    "[bs]\nr = 0.05\nsigma = 0.2\nT = 1.0\n"
    "[payoff]\nspec = put:100\n"
    "[grid]\nt_steps = 60\nx_points = 120\ncenter = 100\n"
    "[mc]\npaths = 2000\n";

} // namespace

TEST_CASE("cli reports its version and stage catalog") {
    REQUIRE(run_cli("version") == 0);
    REQUIRE(run_cli("list") == 0);
    REQUIRE(run_cli("list chain") == 0);
    REQUIRE(run_cli("list bogus") == 2);
}

TEST_CASE("usage errors exit with code 2") {
    REQUIRE(run_cli("") == 2);
    REQUIRE(run_cli("frobnicate") == 2);
    REQUIRE(run_cli("run /nonexistent/config.ini") == 2);
    REQUIRE(run_cli("run --out") == 2);

    fs::path dir = fresh_dir("usage");
    write_file(dir / "bad_model.ini", "model = heston\npipeline = solve\n");
    REQUIRE(run_cli("run " + (dir / "bad_model.ini").string()) == 2);

    write_file(dir / "bad_stage.ini", "model = bs\npipeline = solve, teleport\n");
    REQUIRE(run_cli("run " + (dir / "bad_stage.ini").string()) == 2);

    write_file(dir / "bad_tol.ini",
               "model = bs\npipeline = solve\n[tolerances]\nfbp_eq = -1\n");
    REQUIRE(run_cli("run " + (dir / "bad_tol.ini").string()) == 2);

    write_file(dir / "ok.ini", small_bs_cfg);
    REQUIRE(run_cli("run " + (dir / "ok.ini").string() + " --tol-scale -2") == 2);
}

TEST_CASE("a small pipeline run passes and writes its artifacts") {
    fs::path dir = fresh_dir("run");
    write_file(dir / "cfg.ini", small_bs_cfg);
    int rc = run_cli("run " + (dir / "cfg.ini").string() + " --out " + (dir / "out").string() +
                     " --seed 5");
    REQUIRE(rc == 0);
    for (const char* name : {"summary.csv", "surface.csv", "payoff.csv", "pasted.csv",
                             "order.csv", "fbp_residual.csv", "mc_compare.csv"})
        REQUIRE(fs::exists(dir / "out" / name));
    REQUIRE_FALSE(fs::exists(dir / "out" / "FAILED"));
    std::string summary = slurp(dir / "out" / "summary.csv");
    REQUIRE(summary.rfind("stage,check,value,pass\n", 0) == 0);
    REQUIRE(summary.find(",fail") == std::string::npos);
}

TEST_CASE("identical config and seed reproduce byte-identical outputs") {
    fs::path dir = fresh_dir("repro");
    write_file(dir / "cfg.ini", small_bs_cfg);
    REQUIRE(run_cli("run " + (dir / "cfg.ini").string() + " --out " + (dir / "a").string() +
                    " --seed 11") == 0);
    REQUIRE(run_cli("run " + (dir / "cfg.ini").string() + " --out " + (dir / "b").string() +
                    " --seed 11") == 0);
    std::size_t compared = 0;
    for (const auto& entry : fs::directory_iterator(dir / "a")) {
        fs::path twin = dir / "b" / entry.path().filename();
        REQUIRE(fs::exists(twin));
        REQUIRE(slurp(entry.path()) == slurp(twin));
        ++compared;
    }
    REQUIRE(compared >= 6);

    // a different seed changes the sampled stages
    REQUIRE(run_cli("run " + (dir / "cfg.ini").string() + " --out " + (dir / "c").string() +
                    " --seed 12") == 0);
    REQUIRE(slurp(dir / "a" / "mc_compare.csv") != slurp(dir / "c" / "mc_compare.csv"));
}

TEST_CASE("crushed tolerances turn the exit code into a check failure") {
    fs::path dir = fresh_dir("tolscale");
    write_file(dir / "cfg.ini", small_bs_cfg);
    REQUIRE(run_cli("run " + (dir / "cfg.ini").string() + " --out " + (dir / "out").string() +
                    " --tol-scale 1e-12") == 1);
    std::string summary = slurp(dir / "out" / "summary.csv");
    REQUIRE(summary.find(",fail") != std::string::npos);
}

TEST_CASE("engine failures leave a FAILED marker and exit 3") {
    fs::path dir = fresh_dir("engine");
    // jump intensity that breaks the explicit monotonicity bound
    std::ofstream jumps(dir / "jumps.csv");
    jumps << "z,density\n-0.5,1\n0.5,1\n";
    jumps.close();
    write_file(dir / "cfg.ini",
               "model = uvol\npipeline = solve\n"
               "[uvol]\nr = 0.0\nb_lo = 0\nb_hi = 0\nc_lo = 0.04\nc_hi = 0.04\nT = 1.0\n"
               "jump_intensity = 100000\njumps = " + (dir / "jumps.csv").string() + "\n"
               "[payoff]\nspec = put:0\n"
               "[grid]\nt_steps = 50\nx_points = 100\ncenter = 0\n");
    REQUIRE(run_cli("run " + (dir / "cfg.ini").string() + " --out " + (dir / "out").string()) == 3);
    REQUIRE(fs::exists(dir / "out" / "FAILED"));
    std::string marker = slurp(dir / "out" / "FAILED");
    REQUIRE(marker.find("stage: solve") != std::string::npos);
}

TEST_CASE("merton without a singleton set is a usage error") {
    fs::path dir = fresh_dir("merton_usage");
    std::ofstream jumps(dir / "jumps.csv");
    jumps << "z,density\n-0.5,1\n0.5,1\n";
    jumps.close();
    write_file(dir / "cfg.ini",
               "model = uvol\npipeline = merton\n"
               "[uvol]\nc_lo = 0.01\nc_hi = 0.09\n"
               "jump_intensity = 0.3\njumps = " + (dir / "jumps.csv").string() + "\n"
               "[grid]\ncenter = 0\n");
    REQUIRE(run_cli("run " + (dir / "cfg.ini").string() + " --out " + (dir / "out").string()) == 2);
}

TEST_CASE("experiment config validation happens before any stage runs") {
    using embedlab::Config;
    using embedlab::ExperimentConfig;
    Config cfg = Config::parse_string("model = bs\npipeline = solve\n[tolerances]\npsor = 0\n");
    REQUIRE_THROWS_AS(ExperimentConfig::from_config(cfg), embedlab::UsageError);
    Config ok = Config::parse_string("model = bs\npipeline = solve\nseed = 9\n");
    ExperimentConfig ec = ExperimentConfig::from_config(ok);
    REQUIRE(ec.seed == 9);
    REQUIRE(ec.tol("fbp_eq", 2e-3) == 2e-3);
}
