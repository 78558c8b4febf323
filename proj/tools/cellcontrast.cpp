// Command-line entry point: one subcommand per pipeline stage.

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cellcontrast/config.hpp"
#include "cellcontrast/errors.hpp"
#include "cellcontrast/pipeline.hpp"

namespace {

constexpr int exit_ok = 0;
constexpr int exit_failure = 1;
constexpr int exit_config = 2;
constexpr int exit_io = 3;
constexpr int exit_numeric = 4;

int report(const std::string& stage, const std::exception& e, int code) {
    std::cerr << "cellcontrast: " << (stage.empty() ? "" : stage + ": ") << e.what() << '\n';
    return code;
}

}

int main(int argc, char** argv) {
    CLI::App app{"Contrastive single-cell profiling toolkit"};
    app.require_subcommand(1);
    app.fallthrough();

    std::string config_path;
    std::vector<std::string> overrides;
    std::optional<std::uint64_t> seed;
    std::string precision;
    app.add_option("--config", config_path, "JSON run configuration")->check(CLI::ExistingFile);
    app.add_option("--set", overrides, "Override one key, e.g. --set train.temperature=0.1 (repeatable)")->take_all();
    app.add_option("--seed", seed, "Run seed");
    app.add_option("--precision", precision, "Numeric precision")->check(CLI::IsMember({"f32", "f64"}));

    for (const auto& stage : cellcontrast::pipeline::stage_names()) {
        app.add_subcommand(stage, "Run the " + stage + " stage");
    }
    app.add_subcommand("pipeline", "Run every stage in order");
    app.add_subcommand("show-config", "Print the effective configuration");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return exit_config;
    }

    if (seed) {
        overrides.push_back("seed=" + std::to_string(*seed));
    }
    if (!precision.empty()) {
        overrides.push_back("precision=\"" + precision + "\"");
    }

    cellcontrast::RunConfig config;
    try {
        config = cellcontrast::load_config(config_path.empty() ? std::nullopt : std::optional<std::filesystem::path>(config_path),
                                           overrides);
    } catch (const cellcontrast::IoError& e) {
        return report("config", e, exit_io);
    } catch (const std::exception& e) {
        return report("config", e, exit_config);
    }

    const auto command = app.get_subcommands().front()->get_name();
    if (command == "show-config") {
        std::cout << cellcontrast::to_json(config);
        return exit_ok;
    }

    std::vector<std::string> stages;
    if (command == "pipeline") {
        stages = cellcontrast::pipeline::stage_names();
    } else {
        stages.push_back(command);
    }

    std::string current;
    try {
        for (const auto& stage : stages) {
            current = stage;
            cellcontrast::pipeline::run_stage(stage, config, std::cout);
        }
    } catch (const cellcontrast::ConfigError& e) {
        return report(current, e, exit_config);
    } catch (const cellcontrast::IoError& e) {
        return report(current, e, exit_io);
    } catch (const cellcontrast::NumericError& e) {
        return report(current, e, exit_numeric);
    } catch (const std::exception& e) {
        return report(current, e, exit_failure);
    }
    return exit_ok;
}
