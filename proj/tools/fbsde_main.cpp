#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "fbsdelab/acceptance.hpp"
#include "fbsdelab/cli.hpp"

int main(int argc, char** argv) {
    CLI::App app{"fbsde: forward-backward SDE laboratory with jump environments"};
    app.require_subcommand(1);

    std::string config_path;
    CLI::App* run_cmd = app.add_subcommand("run", "execute an experiment from a JSON config");
    run_cmd->add_option("config", config_path, "path to JSON config")->required();

    std::string manifest_path;
    CLI::App* replay_cmd =
        app.add_subcommand("replay", "re-execute a recorded run and compare digests");
    replay_cmd->add_option("manifest", manifest_path, "path to manifest.json")->required();

    app.add_subcommand("accept", "run the acceptance criteria suite");

    CLI11_PARSE(app, argc, argv);

    try {
        if (run_cmd->parsed()) {
            std::ifstream is(config_path);
            if (!is) throw std::runtime_error("cannot open config: " + config_path);
            fbsde::RunConfig cfg = fbsde::RunConfig::from_json(fbsde::json::parse(is));
            fbsde::RunManifest man = fbsde::run(cfg);
            std::cout << "experiment: " << man.config.at("experiment").get<std::string>()
                      << "\n"
                      << "output:     " << man.config.at("output_dir").get<std::string>()
                      << "\n"
                      << "config:     " << man.config_digest << "\n"
                      << "wall time:  " << man.wall_time_s << " s\n";
            for (const auto& c : man.checks)
                std::cout << (c.pass ? "[pass] " : "[FAIL] ") << c.name << ": " << c.detail
                          << "\n";
            return man.all_pass() ? 0 : 1;
        }
        if (replay_cmd->parsed()) {
            fbsde::ReplayVerdict v = fbsde::replay(manifest_path);
            if (v.identical) {
                std::cout << "identical\n";
                return 0;
            }
            std::cout << "differs: " << v.first_diff << "\n";
            return 1;
        }
        return fbsde::run_acceptance(std::cout) ? 0 : 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
