#include <cstdlib>
#include <iostream>
#include <string>
#include <vector>

#include "embedlab/pipeline.hpp"
#include "embedlab/version.hpp"

namespace {

void usage(std::ostream& out) {
    out << "usage: embedlab <command> [options]\n"
           "\n"
           "commands:\n"
           "  run <config>      execute the pipeline described by a config file\n"
           "  list [model]      show available pipeline stages (bs, uvol, chain)\n"
           "  version           print the version string\n"
           "\n"
           "options for run:\n"
           "  --out DIR         output directory (overrides the config)\n"
           "  --seed N          RNG seed (overrides the config)\n"
           "  --tol-scale X     multiply every pass/fail tolerance by X > 0\n";
}

int run_command(const std::vector<std::string>& args) {
    std::string config_path;
    std::string out_override;
    bool has_seed = false, has_scale = false;
    std::uint64_t seed = 0;
    double tol_scale = 1.0;

    for (std::size_t i = 0; i < args.size(); ++i) {
        const std::string& a = args[i];
        auto next = [&](const char* flag) -> std::string {
            if (i + 1 >= args.size()) throw embedlab::UsageError(std::string(flag) + " needs a value");
            return args[++i];
        };
        if (a == "--out") {
            out_override = next("--out");
        } else if (a == "--seed") {
            seed = static_cast<std::uint64_t>(std::stoull(next("--seed")));
            has_seed = true;
        } else if (a == "--tol-scale") {
            tol_scale = embedlab::parse_double(next("--tol-scale"));
            has_scale = true;
        } else if (!a.empty() && a[0] == '-') {
            throw embedlab::UsageError("unknown flag: " + a);
        } else if (config_path.empty()) {
            config_path = a;
        } else {
            throw embedlab::UsageError("unexpected argument: " + a);
        }
    }
    if (config_path.empty()) throw embedlab::UsageError("run: missing config file path");
    if (has_scale && !(tol_scale > 0.0)) throw embedlab::UsageError("--tol-scale must be positive");

    embedlab::Config cfg;
    try {
        cfg = embedlab::Config::parse_file(config_path);
    } catch (const std::exception& e) {
        throw embedlab::UsageError(e.what());
    }
    embedlab::ExperimentConfig ec = embedlab::ExperimentConfig::from_config(cfg);
    if (!out_override.empty()) ec.out_dir = out_override;
    if (has_seed) ec.seed = seed;
    ec.tol_scale = tol_scale;
    return embedlab::run_pipeline(ec);
}

} // namespace

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    try {
        if (args.empty() || args[0] == "--help" || args[0] == "-h" || args[0] == "help") {
            usage(args.empty() ? std::cerr : std::cout);
            return args.empty() ? 2 : 0;
        }
        const std::string cmd = args[0];
        args.erase(args.begin());
        if (cmd == "version") {
            std::cout << "embedlab " << embedlab::version_string() << "\n";
            return 0;
        }
        if (cmd == "list") {
            if (args.size() > 1) throw embedlab::UsageError("list takes at most one model name");
            std::cout << embedlab::list_pipelines(args.empty() ? "" : args[0]);
            return 0;
        }
        if (cmd == "run") return run_command(args);
        throw embedlab::UsageError("unknown command: " + cmd);
    } catch (const embedlab::UsageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "engine error: " << e.what() << "\n";
        return 3;
    }
}
