#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "nysgrad/bilevel.hpp"
#include "nysgrad/hypergrad.hpp"
#include "nysgrad/tasks.hpp"

namespace nysgrad::cli {

enum class ExperimentKind { InvertDemo, Logreg, QuadraticOracle, BoundCheck, Bench };

const char* to_string(ExperimentKind kind);
ExperimentKind parse_experiment(const std::string& name);

/// One experiment, read from a `key = value` file.
///
/// Only the fields of the selected experiment are read or written; a key that
/// the experiment does not use is a ConfigError.
struct ExperimentConfig {
    ExperimentKind experiment = ExperimentKind::Logreg;
    std::string output_dir = "out";
    std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
    int jobs = 1;
    bool plots = true;

    // invert-demo
    LowRankDemoSpec demo{};
    std::vector<Index> demo_nystrom_ranks{5, 10, 20};
    std::vector<int> demo_neumann_truncations{5, 10, 20};
    double demo_neumann_alpha = 0.01;

    // logreg
    LogRegTaskSpec logreg{};
    ScheduleConfig schedule{};
    std::vector<IhvpConfig> ihvps{};
    std::vector<double> sweep_rho{};
    std::vector<Index> sweep_k{};
    std::vector<double> sweep_alpha{};
    bool record_wall_time = true;

    // quadratic-oracle
    Index quad_p = 20;
    int quad_instances = 20;
    double quad_rho = 1e-8;
    double quad_inner_tol = 1e-10;
    double quad_tolerance = 1e-4;

    // bound-check
    int bound_instances = 100;
    Index bound_p_min = 5;
    Index bound_p_max = 100;
    std::vector<double> bound_rhos{0.01, 0.1, 1.0};
    int bound_indefinite = 0;
    double bound_slack = 1e-9;

    // bench
    Index bench_dim = 20000;
    Index bench_samples = 200;
    std::vector<Index> bench_ks{5, 10, 20, 40};
    std::vector<int> bench_ls{5, 10, 20};
    double bench_rho = 0.01;
    double bench_alpha = 0.01;
    int bench_warmup = 1;
    int bench_reps = 5;

    bool operator==(const ExperimentConfig&) const = default;
};

/// Defaults for `kind`; logreg gets the three-backend comparison.
ExperimentConfig default_config(ExperimentKind kind);

ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& path);

/// Writes every key of the selected experiment; parse_config(serialize(c)) == c.
std::string serialize(const ExperimentConfig& cfg);

void validate(const ExperimentConfig& cfg);

// Value grammars shared with the command line.
std::string format_ihvp(const IhvpConfig& cfg);
IhvpConfig parse_ihvp(const std::string& text);
std::string format_optimizer(const OptimizerConfig& cfg);
OptimizerConfig parse_optimizer(const std::string& text);
std::vector<std::uint64_t> parse_seed_list(const std::string& text);

}  // namespace nysgrad::cli
