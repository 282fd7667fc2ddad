// Experiment runner: loads or assembles an ExperimentConfig, validates it,
// and either reports the validation result or runs the scenario and writes
// its artifacts. Exit codes: 0 success, 1 usage or invalid input, 2 a
// scenario's internal check suite failed.

#include <cstdio>
#include <exception>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "voisim/experiment.hpp"

namespace {

// --set key=value, applied after --config and the individual flags
bool apply_override(voisim::ExperimentConfig& cfg, const std::string& kv, std::string& err) {
    size_t eq = kv.find('=');
    if (eq == std::string::npos || eq == 0) {
        err = "--set expects key=value, got '" + kv + "'";
        return false;
    }
    cfg.overrides[kv.substr(0, eq)] = kv.substr(eq + 1);
    return true;
}

int print_validation(const voisim::ValidationReport& rep) {
    if (rep.ok) {
        std::printf("config valid\n");
        return 0;
    }
    std::printf("config invalid:\n");
    for (const auto& v : rep.violations) std::printf("  - %s\n", v.c_str());
    return 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"voisim: value-of-information experiments on stochastic sequential models"};
    app.footer(
        "Scenarios: tabular_properties, platoon_voi, platoon_comm, custom.\n"
        "VOISIM_MAX_WORKERS caps episode parallelism (default: hardware threads).\n"
        "Exit codes: 0 success, 1 usage/invalid input, 2 scenario check suite failed.");

    std::string config_path, scenario_name, out_dir;
    long long seed = 0;
    int episodes = 0;
    std::vector<std::string> sets;

    auto* opt_config = app.add_option("--config", config_path, "JSON config file to start from")
                           ->check(CLI::ExistingFile);
    auto* opt_scenario = app.add_option("--scenario", scenario_name, "scenario name (overrides the file)");
    auto* opt_seed = app.add_option("--seed", seed, "base RNG seed (non-negative)");
    auto* opt_episodes = app.add_option("--episodes", episodes, "episode count for sampled scenarios");
    auto* opt_out = app.add_option("--out", out_dir, "artifact directory");
    app.add_option("--set", sets, "override a config key, key=value (repeatable)")
        ->take_all();

    auto* cmd_run = app.add_subcommand("run", "run the scenario and write artifacts");
    auto* cmd_validate = app.add_subcommand("validate", "check the config without running");
    cmd_run->fallthrough();
    cmd_validate->fallthrough();
    app.require_subcommand(0, 1);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    voisim::ExperimentConfig cfg;
    try {
        if (*opt_config) cfg = voisim::ExperimentConfig::load_file(config_path);
        if (*opt_scenario) cfg.scenario = voisim::scenario_from_name(scenario_name);
        if (*opt_seed) cfg.seed = seed;
        if (*opt_episodes) cfg.episodes = episodes;
        if (*opt_out) cfg.out_dir = out_dir;
        for (const auto& kv : sets) {
            std::string err;
            if (!apply_override(cfg, kv, err)) {
                std::fprintf(stderr, "%s\n", err.c_str());
                return 1;
            }
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "%s\n", e.what());
        return 1;
    }

    if (cmd_validate->parsed()) return print_validation(voisim::validate_experiment(cfg));

    try {
        int code = voisim::run_experiment(cfg);
        std::printf("artifacts in %s\n", cfg.out_dir.c_str());
        if (code != 0) std::printf("one or more check suites failed; see summary.json\n");
        return code;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "%s\n", e.what());
        return 1;
    }
}
