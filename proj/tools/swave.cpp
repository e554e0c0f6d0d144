#include <iostream>
#include <limits>

#include <CLI11.hpp>

#include "swave/commands.hpp"

int main(int argc, char** argv)
{
    CLI::App app{"swave: spectral simulator and checks for damped stochastic wave equations"};
    app.require_subcommand(1);
    swave::CliOptions opts;
    std::uint64_t seed = 0;
    std::size_t paths = 0;
    std::string out_dir;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", opts.config_path, "TOML run configuration")->required()->check(CLI::ExistingFile);
        sub->add_option("--out", out_dir, "output directory (overrides output.directory)");
        sub->add_option("--seed", seed, "master seed (overrides ensemble.seed)")
            ->check(CLI::Range(std::uint64_t{0}, static_cast<std::uint64_t>(std::numeric_limits<std::int64_t>::max())));
        sub->add_option("--paths", paths, "number of paths (overrides ensemble.paths)")->check(CLI::PositiveNumber);
    };
    auto* simulate = app.add_subcommand("simulate", "ensemble statistics of the configured functionals");
    auto* oracle = app.add_subcommand("oracle-linear", "exact moments of the linear additive model");
    auto* verify = app.add_subcommand("verify", "run one verification and emit a JSON verdict");
    auto* check = app.add_subcommand("check-conditions", "evaluate the structural conditions of the drift family");
    for (auto* sub : {simulate, oracle, verify, check})
    {
        add_common(sub);
    }
    verify->add_option("--kind", opts.kind, "verification kind")
        ->required()
        ->check(CLI::IsMember(swave::verify_kinds()));

    try
    {
        app.parse(argc, argv);
    }
    catch (CLI::ParseError const& e)
    {
        int const rc = app.exit(e);
        return rc == 0 ? 0 : swave::exit_validation;
    }
    opts.command = app.get_subcommands().front()->get_name();
    for (auto* sub : {simulate, oracle, verify, check})
    {
        if (sub->parsed())
        {
            if (sub->count("--out"))
            {
                opts.out_dir = out_dir;
            }
            if (sub->count("--seed"))
            {
                opts.seed = seed;
            }
            if (sub->count("--paths"))
            {
                opts.paths = paths;
            }
        }
    }
    return swave::run_cli(opts, std::cout, std::cerr);
}
