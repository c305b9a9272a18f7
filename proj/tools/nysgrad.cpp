// nysgrad: run hypergradient experiments from config files.

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "nysgrad/cli/config.hpp"
#include "nysgrad/cli/experiments.hpp"
#include "nysgrad/error.hpp"

namespace {

using nysgrad::cli::ExperimentKind;

constexpr int kExitConfig = 1;
constexpr int kExitNumerical = 2;
constexpr int kExitIo = 3;

struct Overrides {
    std::string config;
    std::string output;
    std::string seeds;
    int jobs = 0;
    bool no_plots = false;
    bool print_config = false;
};

int exit_code(nysgrad::ErrorKind kind) {
    switch (kind) {
        case nysgrad::ErrorKind::Config:
        case nysgrad::ErrorKind::Argument:
            return kExitConfig;
        case nysgrad::ErrorKind::Io:
            return kExitIo;
        default:
            return kExitNumerical;
    }
}

int run_subcommand(ExperimentKind kind, const Overrides& o) {
    using namespace nysgrad::cli;
    ExperimentConfig cfg = default_config(kind);
    if (!o.config.empty()) {
        cfg = load_config(o.config);
        if (cfg.experiment != kind)
            throw nysgrad::ConfigError("config file '" + o.config + "' is for experiment '" +
                                       to_string(cfg.experiment) + "', not '" + to_string(kind) + "'");
    }
    if (!o.output.empty()) cfg.output_dir = o.output;
    if (!o.seeds.empty()) cfg.seeds = parse_seed_list(o.seeds);
    if (o.jobs != 0) cfg.jobs = o.jobs;
    if (o.no_plots) cfg.plots = false;
    validate(cfg);

    if (o.print_config) {
        std::cout << serialize(cfg);
        return 0;
    }
    const int code = execute(cfg, std::cout);
    std::cout << "outputs written to " << cfg.output_dir << "\n";
    return code;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Approximate hypergradients with Nystrom, CG and Neumann IHVP solvers"};
    app.require_subcommand(1);

    Overrides o;
    std::optional<ExperimentKind> chosen;
    const std::pair<ExperimentKind, const char*> commands[] = {
        {ExperimentKind::InvertDemo, "compare approximate inverses of a low-rank PSD matrix"},
        {ExperimentKind::Logreg, "per-parameter weight decay for logistic regression"},
        {ExperimentKind::QuadraticOracle, "check the pipeline against a closed-form hypergradient"},
        {ExperimentKind::BoundCheck, "check measured hypergradient errors against the error bound"},
        {ExperimentKind::Bench, "time and workspace of one hypergradient per backend and size"},
    };
    for (const auto& [kind, help] : commands) {
        CLI::App* sub = app.add_subcommand(nysgrad::cli::to_string(kind), help);
        sub->add_option("--config", o.config, "key = value config file");
        sub->add_option("--output", o.output, "output directory");
        sub->add_option("--seeds", o.seeds, "seed list, e.g. 0,1,2 or 0-4");
        sub->add_option("--jobs", o.jobs, "worker threads")->check(CLI::PositiveNumber);
        sub->add_flag("--no-plots", o.no_plots, "skip SVG plots");
        sub->add_flag("--print-config", o.print_config, "print the resolved config and exit");
        sub->callback([&chosen, kind = kind] { chosen = kind; });
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitConfig;
    }

    try {
        return run_subcommand(*chosen, o);
    } catch (const nysgrad::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_code(e.kind());
    } catch (const std::filesystem::filesystem_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitIo;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitNumerical;
    }
}
