#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "experiment.hpp"

int main(int argc, char** argv) {
    using namespace mfbm;
    CLI::App app{"Mean-field control with fractional noise: experiment runner"};
    app.require_subcommand(1);

    auto* list = app.add_subcommand("list-presets", "print the named coefficient presets");
    auto* run = app.add_subcommand("run", "run the experiment described by a JSON config");
    std::string config_path, out_dir;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> particles;
    run->add_option("config", config_path, "config file")->required();
    run->add_option("--seed", seed, "override the seed");
    run->add_option("--particles", particles, "override n_particles");
    run->add_option("--out-dir", out_dir, "override output_dir");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 2;
    }

    if (*list) {
        std::cout << cli::preset_listing();
        return 0;
    }

    cli::ExperimentConfig cfg;
    try {
        std::ifstream f(config_path);
        if (!f) throw ConfigError({"config: cannot open '" + config_path + "'"});
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(f);
        } catch (const nlohmann::json::parse_error& e) {
            throw ConfigError({std::string("config: ") + e.what()});
        }
        if (j.is_object()) {
            if (seed) j["seed"] = *seed;
            if (particles) j["n_particles"] = *particles;
            if (!out_dir.empty()) j["output_dir"] = out_dir;
        }
        cfg = cli::parse_config(j);
    } catch (const ConfigError& e) {
        std::cerr << "invalid configuration:\n";
        for (const auto& field : e.fields()) std::cerr << "  " << field << "\n";
        return 2;
    }

    try {
        std::cout << cli::run_experiment(cfg);
    } catch (const NonConvergenceError& e) {
        std::cerr << "solver error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "solver error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
