#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "bmx/cli.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Bayes minimax prior toolkit: construct, verify, risk, transform"};
    app.set_version_flag("--version", bmx::cli::kToolVersion);
    app.require_subcommand(1);

    std::string config;
    std::optional<std::string> out, grid;
    std::optional<std::uint64_t> seed;
    const auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", config, "run configuration (JSON)")->required();
        sub->add_option("--out", out, "output directory");
        sub->add_option("--seed", seed, "Monte Carlo master seed");
        sub->add_option("--grid", grid, "evaluation grid lo,hi,n,log|lin");
    };
    add_common(app.add_subcommand("construct", "build a prior from a phi specification"));
    add_common(app.add_subcommand("verify", "check minimaxity conditions on a grid"));
    add_common(app.add_subcommand("risk", "Monte Carlo risk and SURE along a ray"));
    add_common(app.add_subcommand("transform", "tabulate I/K transforms"));
    app.add_subcommand("report", "print the status recorded in a manifest")
        ->add_option("--config", config, "manifest.json of an earlier run")
        ->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return bmx::cli::kConfig;
    }
    const std::string command = app.get_subcommands().front()->get_name();
    return bmx::cli::run(command, config, {out, seed, grid});
}
