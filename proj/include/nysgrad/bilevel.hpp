#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "nysgrad/error.hpp"
#include "nysgrad/hypergrad.hpp"
#include "nysgrad/optimizers.hpp"

namespace nysgrad {

/// Row indices into a data split; empty means the full split.
using Batch = std::span<const Index>;

/// Inner objective f(theta, phi) on training data, outer objective g(theta, phi)
/// on validation data, and their analytic derivatives.
struct BilevelProblem {
    Index p = 0;
    Index h = 0;
    Index n_train = 0;
    Index n_val = 0;
    Vector phi0;
    std::function<Vector(std::uint64_t seed)> init_theta;

    std::function<double(const Vector& theta, const Vector& phi, Batch)> inner_loss;
    std::function<Vector(const Vector& theta, const Vector& phi, Batch)> inner_grad;
    std::function<HvpOracle(const Vector& theta, const Vector& phi, Batch)> hvp_at;
    std::function<TransposeApplyFn(const Vector& theta, const Vector& phi, Batch)> mixed_at;
    std::function<Vector(const Vector& theta, const Vector& phi, Batch)> hessian_diag_at;  // optional

    std::function<double(const Vector& theta, const Vector& phi, Batch)> outer_loss;
    std::function<Vector(const Vector& theta, const Vector& phi, Batch)> outer_grad_theta;
    std::function<Vector(const Vector& theta, const Vector& phi, Batch)> outer_grad_phi;

    /// Derivative bundle at (theta, phi): inner second derivatives on `train`,
    /// outer gradients on `val`.
    DerivativeBundle bundle_at(const Vector& theta, const Vector& phi, Batch train, Batch val) const;
};

struct ScheduleConfig {
    int inner_steps_per_outer = 100;  // T
    int total_outer_steps = 50;
    bool reset_inner_on_outer = true;
    OptimizerConfig inner_optimizer = Sgd{0.1};
    OptimizerConfig outer_optimizer = SgdMomentum{1.0, 0.9};
    std::uint64_t seed = 0;
    Index batch_size = 0;         // 0 = full batch
    bool keep_theta_snapshots = false;

    bool operator==(const ScheduleConfig&) const = default;
};

void validate(const ScheduleConfig& schedule);

struct OuterStepRecord {
    int outer_step = 0;           // 1-based
    double val_loss = 0.0;        // at (theta_T, phi) before the update
    double hypergrad_norm = 0.0;
    double inner_grad_norm = 0.0;  // ||grad_theta f(theta_T, phi)||, premise monitor
    double wall_seconds = 0.0;     // hypergradient computation
    std::uint64_t oracle_calls = 0;
    std::size_t workspace_bytes = 0;
};

/// Trajectory of one bilevel run.
///
/// The run trains total_outer_steps + 1 inner windows of T steps each; an outer
/// update sits between consecutive windows. `train_loss` holds the loss before
/// every inner step, so its first entry in each window is the loss right after
/// a reset.
struct RunRecord {
    std::string backend;
    std::string ihvp_label;
    std::uint64_t seed = 0;
    ScheduleConfig schedule;
    IhvpConfig ihvp;

    std::vector<double> train_loss;
    std::vector<OuterStepRecord> outer;
    double final_val_loss = 0.0;
    Vector final_phi;
    double total_seconds = 0.0;

    std::vector<Vector> window_start_theta;  // only with keep_theta_snapshots
    std::vector<Vector> window_end_theta;

    std::optional<std::string> error;
    std::optional<ErrorKind> error_kind;

    bool ok() const noexcept { return !error.has_value(); }
};

/// Thrown by run(); carries everything recorded before the failure.
class RunAborted : public Error {
public:
    RunAborted(ErrorKind kind, const std::string& what, RunRecord partial)
        : Error(kind, what), partial_(std::move(partial)) {}
    const RunRecord& partial() const noexcept { return partial_; }

private:
    RunRecord partial_;
};

RunRecord run(const BilevelProblem& problem, const ScheduleConfig& schedule, const IhvpConfig& ihvp);

using ProblemFactory = std::function<BilevelProblem(std::uint64_t data_seed)>;

/// Runs every (config, seed) cell; records are ordered config-major, then by seed.
/// Each seed fixes both the data and the schedule randomness, so records of one
/// seed differ only in the IHVP backend. Failures are recorded, not thrown.
std::vector<RunRecord> compare_backends(const ProblemFactory& make_problem, const ScheduleConfig& schedule,
                                        const std::vector<IhvpConfig>& ihvps,
                                        const std::vector<std::uint64_t>& seeds, int jobs = 1);

}  // namespace nysgrad
