// vrjp_lab: batch driver for the VRJP experiments.
//
//   vrjp_lab <ward|decay|equivalence|percolation|simulate|check> [--config f.json]
//            [--seed n] [--out path] [--format csv|json] [--workers n] [--dry-run]
//
// Exit status: 0 success, 1 configuration error, 2 failed check.

#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "vrjp/experiments.hpp"

namespace {

struct Options {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> workers;
    std::string out;
    std::string format;
    bool dry_run = false;
};

void add_common(CLI::App* cmd, Options& o) {
    cmd->add_option("--config", o.config_path, "JSON configuration file");
    cmd->add_option("--seed", o.seed, "master seed (overrides the config)");
    cmd->add_option("--out", o.out, "output path (default: stdout)");
    cmd->add_option("--format", o.format, "output format")->check(CLI::IsMember({"csv", "json"}));
    cmd->add_option("--workers", o.workers, "worker threads")->check(CLI::PositiveNumber);
    cmd->add_flag("--dry-run", o.dry_run, "validate the configuration and exit");
}

int run(const std::string& name, const Options& o) {
    using namespace vrjp;
    json config = json::object();
    if (!o.config_path.empty()) {
        std::ifstream in(o.config_path);
        if (!in) throw ConfigError(o.config_path, "cannot open configuration file");
        try {
            config = json::parse(in);
        } catch (const json::parse_error& e) {
            throw ConfigError(o.config_path, e.what());
        }
    }
    auto cfg = make_experiment_config(name, std::move(config), o.seed, o.workers);
    if (!o.format.empty()) cfg.format = o.format;
    if (!o.out.empty()) cfg.out = o.out;
    validate_experiment(cfg);
    if (o.dry_run) {
        std::cerr << name << ": configuration ok (hash " << cfg.hash() << ", seed " << cfg.seed << ")\n";
        return 0;
    }

    const auto result = run_experiment(cfg);
    if (cfg.out.empty()) {
        write_result(std::cout, result, cfg.format);
    } else {
        std::ofstream out(cfg.out);
        if (!out) throw ConfigError("/output/path", "cannot write '" + cfg.out + "'");
        write_result(out, result, cfg.format);
    }
    std::cerr << name << ": " << result.rows.size() << " rows in " << result.wall_seconds << " s";
    for (const auto& w : result.metadata["warnings"]) std::cerr << "\n  warning: " << w.get<std::string>();
    std::cerr << '\n';
    if (name == "check" && !result.passed()) {
        for (const auto& row : result.rows)
            if (row.pass && !*row.pass) std::cerr << "FAIL " << row.name << " = " << row.value << '\n';
        return 2;
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"VRJP simulation and sampling lab"};
    app.require_subcommand(1);
    Options opts;
    const char* names[] = {"ward", "decay", "equivalence", "percolation", "simulate", "check"};
    const char* help[] = {"E[exp(u_x)] at listed vertices",
                          "E[exp(u_x/2)] against distance on a wired box",
                          "first-jump laws of the VRJP and the annealed RWRE",
                          "cluster radius tails of eps-percolation unions",
                          "exact VRJP trajectories and the Q identity",
                          "fast invariant suite"};
    for (std::size_t i = 0; i < std::size(names); ++i) add_common(app.add_subcommand(names[i], help[i]), opts);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    const std::string name = app.get_subcommands().front()->get_name();
    try {
        return run(name, opts);
    } catch (const vrjp::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 1;
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 1;
    } catch (const nlohmann::json::exception& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 1;
    }
}
