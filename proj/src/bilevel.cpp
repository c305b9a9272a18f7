#include "nysgrad/bilevel.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <numeric>
#include <string>
#include <thread>

#include "nysgrad/random.hpp"

namespace nysgrad {
namespace {

using Clock = std::chrono::steady_clock;

class BatchSampler {
public:
    BatchSampler(Index n, Index batch_size, std::uint64_t seed) : n_(n), size_(batch_size), rng_(seed) {
        if (size_ > 0) {
            pool_.resize(static_cast<std::size_t>(n_));
            std::iota(pool_.begin(), pool_.end(), Index{0});
        }
    }

    Batch next() {
        if (size_ <= 0 || size_ >= n_) return {};
        for (Index i = 0; i < size_; ++i) {
            std::uniform_int_distribution<Index> pick(i, n_ - 1);
            std::swap(pool_[static_cast<std::size_t>(i)], pool_[static_cast<std::size_t>(pick(rng_))]);
        }
        current_.assign(pool_.begin(), pool_.begin() + size_);
        return current_;
    }

private:
    Index n_;
    Index size_;
    Rng rng_;
    std::vector<Index> pool_;
    std::vector<Index> current_;
};

IhvpConfig reseed_for_step(IhvpConfig cfg, std::uint64_t run_seed, int outer_step) {
    if (auto* ny = std::get_if<NystromIhvp>(&cfg)) {
        ny->sampling.seed = mix_seed(ny->sampling.seed ^ run_seed, static_cast<std::uint64_t>(outer_step));
    }
    return cfg;
}

[[noreturn]] void abort_run(RunRecord& record, ErrorKind kind, const std::string& what) {
    record.error = what;
    record.error_kind = kind;
    throw RunAborted(kind, what, record);
}

}  // namespace

DerivativeBundle BilevelProblem::bundle_at(const Vector& theta, const Vector& phi, Batch train, Batch val) const {
    DerivativeBundle bundle{
        .grad_outer_theta = outer_grad_theta(theta, phi, val),
        .grad_outer_phi = outer_grad_phi(theta, phi, val),
        .hvp = hvp_at(theta, phi, train),
        .mixed_apply_transpose = mixed_at(theta, phi, train),
        .hessian_diagonal = std::nullopt,
    };
    if (hessian_diag_at) bundle.hessian_diagonal = hessian_diag_at(theta, phi, train);
    return bundle;
}

void validate(const ScheduleConfig& schedule) {
    if (schedule.inner_steps_per_outer < 1) throw ArgumentError("schedule: T must be >= 1");
    if (schedule.total_outer_steps < 0) throw ArgumentError("schedule: total_outer_steps must be >= 0");
    if (schedule.batch_size < 0) throw ArgumentError("schedule: batch_size must be >= 0");
    validate(schedule.inner_optimizer);
    validate(schedule.outer_optimizer);
}

RunRecord run(const BilevelProblem& problem, const ScheduleConfig& schedule, const IhvpConfig& ihvp) {
    validate(schedule);
    validate(ihvp);

    RunRecord record;
    record.backend = backend_tag(ihvp);
    record.ihvp_label = label(ihvp);
    record.seed = schedule.seed;
    record.schedule = schedule;
    record.ihvp = ihvp;

    const auto run_start = Clock::now();
    const int T = schedule.inner_steps_per_outer;
    BatchSampler train_batches(problem.n_train, schedule.batch_size, mix_seed(schedule.seed, 101));
    BatchSampler val_batches(problem.n_val, schedule.batch_size, mix_seed(schedule.seed, 202));

    Vector phi = problem.phi0;
    Vector theta = problem.init_theta(mix_seed(schedule.seed, 0));
    Optimizer inner_opt(schedule.inner_optimizer, problem.p);
    Optimizer outer_opt(schedule.outer_optimizer, problem.h);
    record.train_loss.reserve(static_cast<std::size_t>(T) * (schedule.total_outer_steps + 1));

    auto inner_window = [&](int window) {
        if (schedule.keep_theta_snapshots) record.window_start_theta.push_back(theta);
        for (int t = 0; t < T; ++t) {
            const Batch batch = train_batches.next();
            const double loss = problem.inner_loss(theta, phi, batch);
            if (!std::isfinite(loss)) {
                abort_run(record, ErrorKind::Divergence,
                          "non-finite training loss at inner step " + std::to_string(window * T + t));
            }
            record.train_loss.push_back(loss);
            inner_opt.step(theta, problem.inner_grad(theta, phi, batch));
        }
        if (schedule.keep_theta_snapshots) record.window_end_theta.push_back(theta);
    };

    inner_window(0);
    for (int step = 1; step <= schedule.total_outer_steps; ++step) {
        const Batch train = train_batches.next();
        const Batch val = val_batches.next();

        OuterStepRecord rec;
        rec.outer_step = step;
        rec.val_loss = problem.outer_loss(theta, phi, val);
        rec.inner_grad_norm = problem.inner_grad(theta, phi, train).norm();
        if (!std::isfinite(rec.val_loss)) {
            abort_run(record, ErrorKind::Divergence, "non-finite validation loss at outer step " + std::to_string(step));
        }

        HypergradResult hg;
        try {
            const DerivativeBundle bundle = problem.bundle_at(theta, phi, train, val);
            hg = hypergradient(bundle, reseed_for_step(ihvp, schedule.seed, step));
        } catch (const Error& e) {
            abort_run(record, e.kind(),
                      "outer step " + std::to_string(step) + " [" + e.backend() + "]: " + e.what());
        }
        if (!hg.value.allFinite()) {
            abort_run(record, ErrorKind::Divergence, "non-finite hypergradient at outer step " + std::to_string(step));
        }
        rec.hypergrad_norm = hg.value.norm();
        rec.wall_seconds = hg.diagnostics.wall_seconds;
        rec.oracle_calls = hg.diagnostics.oracle_calls;
        rec.workspace_bytes = hg.diagnostics.workspace_bytes;
        record.outer.push_back(rec);

        outer_opt.step(phi, hg.value);
        if (schedule.reset_inner_on_outer) {
            theta = problem.init_theta(mix_seed(schedule.seed, static_cast<std::uint64_t>(step)));
            inner_opt.reset();
        }
        inner_window(step);
    }

    record.final_val_loss = problem.outer_loss(theta, phi, {});
    record.final_phi = phi;
    record.total_seconds = std::chrono::duration<double>(Clock::now() - run_start).count();
    if (!std::isfinite(record.final_val_loss)) {
        abort_run(record, ErrorKind::Divergence, "non-finite final validation loss");
    }
    return record;
}

std::vector<RunRecord> compare_backends(const ProblemFactory& make_problem, const ScheduleConfig& schedule,
                                        const std::vector<IhvpConfig>& ihvps,
                                        const std::vector<std::uint64_t>& seeds, int jobs) {
    if (ihvps.empty() || seeds.empty()) throw ArgumentError("compare_backends: empty config or seed list");
    validate(schedule);

    const std::size_t cells = ihvps.size() * seeds.size();
    std::vector<RunRecord> records(cells);

    auto run_cell = [&](std::size_t cell) {
        const IhvpConfig& cfg = ihvps[cell / seeds.size()];
        const std::uint64_t seed = seeds[cell % seeds.size()];
        ScheduleConfig sched = schedule;
        sched.seed = seed;
        try {
            const BilevelProblem problem = make_problem(seed);
            records[cell] = run(problem, sched, cfg);
        } catch (const RunAborted& e) {
            records[cell] = e.partial();
        } catch (const Error& e) {
            RunRecord failed;
            failed.backend = backend_tag(cfg);
            failed.ihvp_label = label(cfg);
            failed.seed = seed;
            failed.schedule = sched;
            failed.ihvp = cfg;
            failed.error = e.what();
            failed.error_kind = e.kind();
            records[cell] = std::move(failed);
        }
    };

    const int workers = std::max(1, std::min<int>(jobs, static_cast<int>(cells)));
    if (workers == 1) {
        for (std::size_t cell = 0; cell < cells; ++cell) run_cell(cell);
        return records;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (std::size_t cell = next++; cell < cells; cell = next++) run_cell(cell);
        });
    }
    for (auto& t : pool) t.join();
    return records;
}

}  // namespace nysgrad
