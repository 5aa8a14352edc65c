#include <CLI11.hpp>

#include <iostream>
#include <string>

#include "strataflow/cli.hpp"
#include "strataflow/version.hpp"

int main(int argc, char** argv) {
    CLI::App app{"strataflow: steering equivariant particle systems inside their strata"};
    app.set_version_flag("--version", std::string("strataflow ") + strataflow::kVersion);
    app.require_subcommand(1);

    std::string config_path;
    std::string demo_outdir = "demo_run";

    auto add_config_command = [&](const std::string& name, const std::string& help) {
        CLI::App* sub = app.add_subcommand(name, help);
        sub->add_option("config", config_path, "experiment config file")
            ->required()
            ->check(CLI::ExistingFile);
        return sub;
    };

    CLI::App* stratum = add_config_command(
        "stratum", "coincidence / spectrum signatures and same-stratum checks");
    CLI::App* rank =
        add_config_command("rank", "bracket span rank sweep over sample configurations");
    CLI::App* steer = add_config_command("steer", "search a switching schedule steering one pair");
    CLI::App* ensemble =
        add_config_command("ensemble", "steer several pairs with one shared schedule");
    CLI::App* layers =
        add_config_command("layers", "run discrete skip-connection layers of a kernel");
    CLI::App* spin = add_config_command("spin", "dynamical Lie algebra closure of spin networks");
    CLI::App* demo = app.add_subcommand("demo", "run the shipped example experiments end to end");
    demo->add_option("--outdir", demo_outdir, "directory for demo configs and outputs");

    CLI11_PARSE(app, argc, argv);

    using strataflow::cli::dispatch;
    if (stratum->parsed()) return dispatch("stratum", config_path, std::cout, std::cerr);
    if (rank->parsed()) return dispatch("rank", config_path, std::cout, std::cerr);
    if (steer->parsed()) return dispatch("steer", config_path, std::cout, std::cerr);
    if (ensemble->parsed()) return dispatch("ensemble", config_path, std::cout, std::cerr);
    if (layers->parsed()) return dispatch("layers", config_path, std::cout, std::cerr);
    if (spin->parsed()) return dispatch("spin", config_path, std::cout, std::cerr);
    if (demo->parsed()) return strataflow::cli::run_demo(demo_outdir, std::cout, std::cerr);
    return strataflow::cli::kExitFailure;
}
