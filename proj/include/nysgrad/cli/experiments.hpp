#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "nysgrad/bilevel.hpp"
#include "nysgrad/cli/config.hpp"
#include "nysgrad/cli/csv.hpp"

namespace nysgrad::cli {

// ---------------------------------------------------------------------------
// invert-demo

struct InvertDemoRow {
    std::uint64_t seed = 0;
    std::string method;     // "nystrom" | "neumann"
    Index param = 0;        // k or l
    double alpha = 0.0;     // neumann only
    double frobenius_error = 0.0;
    double relative_error = 0.0;  // divided by ||(A + rho I)^{-1}||_F
    std::string status = "ok";    // or the error kind
};

struct InvertDemoResult {
    std::vector<InvertDemoRow> rows;
    // dense inverses of the first seed, for the heatmap
    Matrix exact;
    std::vector<std::pair<std::string, Matrix>> approximations;
};

InvertDemoResult invert_demo(const ExperimentConfig& cfg);

/// Dense (H_k + rho I)^{-1} with uniformly sampled columns, built column by column.
Matrix nystrom_dense_inverse(const DenseOperator& a, double rho, Index k, std::uint64_t sampling_seed);
/// Dense truncated Neumann approximation of (A + rho I)^{-1}.
Matrix neumann_dense_inverse(const DenseOperator& a, double rho, int truncation, double alpha);

// ---------------------------------------------------------------------------
// logreg

struct SweepCell {
    std::string sweep;  // "rho" | "k" | "alpha"
    double value = 0.0;
    IhvpConfig ihvp;
};

struct LogregResult {
    std::vector<RunRecord> runs;   // main comparison, config-major then seed
    std::vector<SweepCell> sweep;  // one entry per swept configuration
    std::vector<RunRecord> sweep_runs;  // sweep.size() * seeds.size(), cell-major
};

/// Mean final validation loss over seeds; nullopt when any run failed.
struct LabelSummary {
    std::string label;
    std::string backend;
    int runs = 0;
    int failed = 0;
    std::optional<double> mean_final_val_loss{};
};

std::vector<LabelSummary> summarize(const std::vector<RunRecord>& runs);

LogregResult logreg(const ExperimentConfig& cfg);

/// One row per recorded inner step.
CsvTable logreg_steps_table(const std::vector<RunRecord>& runs, bool record_wall_time);

// ---------------------------------------------------------------------------
// quadratic-oracle

struct QuadraticOracleRow {
    int instance = 0;
    std::uint64_t seed = 0;
    double inner_grad_norm = 0.0;
    double relative_error = 0.0;
    bool pass = false;
};

std::vector<QuadraticOracleRow> quadratic_oracle(const ExperimentConfig& cfg);

// ---------------------------------------------------------------------------
// bound-check

struct BoundCheckRow {
    int instance = 0;
    std::uint64_t seed = 0;
    Index p = 0;
    Index rank = 0;  // rank of H before any indefinite shift
    Index h = 0;
    Index k = 0;
    double rho = 0.0;
    bool psd = true;
    double error = 0.0;
    double bound = 0.0;
    double nystrom_opnorm = 0.0;
    std::string status = "ok";

    double ratio() const { return bound > 0.0 ? error / bound : 0.0; }
    bool violation(double slack) const { return psd && status == "ok" && !(error <= bound + slack); }
};

std::vector<BoundCheckRow> bound_check(const ExperimentConfig& cfg);

// ---------------------------------------------------------------------------
// bench

struct BenchCell {
    std::string backend;  // "nystrom-full" | "nystrom-rank1" | "neumann" | "cg"
    Index size = 0;       // k or l
    double median_seconds = 0.0;
    std::vector<double> seconds{};  // every timed repetition
    std::size_t workspace_bytes = 0;
    std::size_t factor_bytes = 0;
    std::uint64_t oracle_calls = 0;
};

struct BenchReport {
    Index dim = 0;
    Index samples = 0;
    int warmup = 0;
    int reps = 0;
    std::vector<BenchCell> cells{};

    const BenchCell& cell(const std::string& backend, Index size) const;
};

BenchReport bench(const ExperimentConfig& cfg);

// ---------------------------------------------------------------------------

/// Runs the experiment, writes its files under cfg.output_dir and returns the
/// process exit code (0, or 2 on a numerical failure). Progress goes to `log`.
int execute(const ExperimentConfig& cfg, std::ostream& log);

}  // namespace nysgrad::cli
