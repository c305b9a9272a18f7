#include "doctest.h"

#include <cmath>
#include <vector>

#include "nysgrad/bilevel.hpp"
#include "nysgrad/error.hpp"
#include "nysgrad/optimizers.hpp"
#include "nysgrad/tasks.hpp"
#include "support.hpp"

using namespace nysgrad;

namespace {

// Fixed quadratic 1/2 x^T Q x - c^T x for the optimizer reference checks.
struct Quadratic {
    Matrix q;
    Vector c;
    Vector grad(const Vector& x) const { return q * x - c; }
};

Quadratic fixed_quadratic() {
    Quadratic out;
    out.q = testing::random_psd(4, 4, 1) / 4.0 + 0.5 * Matrix::Identity(4, 4);
    out.c = testing::random_vector(4, 2);
    return out;
}

// Reference trajectories written element by element.
std::vector<Vector> reference_sgd(const Quadratic& f, Vector x, double lr, int steps) {
    std::vector<Vector> out;
    for (int t = 0; t < steps; ++t) {
        const Vector g = f.grad(x);
        for (Index i = 0; i < x.size(); ++i) x(i) = x(i) - lr * g(i);
        out.push_back(x);
    }
    return out;
}

std::vector<Vector> reference_momentum(const Quadratic& f, Vector x, double lr, double mu, int steps) {
    std::vector<Vector> out;
    std::vector<double> buf(static_cast<std::size_t>(x.size()), 0.0);
    for (int t = 0; t < steps; ++t) {
        const Vector g = f.grad(x);
        for (Index i = 0; i < x.size(); ++i) {
            auto& b = buf[static_cast<std::size_t>(i)];
            b = t == 0 ? g(i) : mu * b + g(i);
            x(i) = x(i) - lr * b;
        }
        out.push_back(x);
    }
    return out;
}

std::vector<Vector> reference_adam(const Quadratic& f, Vector x, double lr, double b1, double b2, double eps,
                                   int steps) {
    std::vector<Vector> out;
    std::vector<double> m(static_cast<std::size_t>(x.size()), 0.0);
    std::vector<double> v(static_cast<std::size_t>(x.size()), 0.0);
    for (int t = 1; t <= steps; ++t) {
        const Vector g = f.grad(x);
        for (Index i = 0; i < x.size(); ++i) {
            const auto k = static_cast<std::size_t>(i);
            m[k] = b1 * m[k] + (1.0 - b1) * g(i);
            v[k] = b2 * v[k] + (1.0 - b2) * g(i) * g(i);
            const double mhat = m[k] / (1.0 - std::pow(b1, t));
            const double vhat = v[k] / (1.0 - std::pow(b2, t));
            x(i) = x(i) - lr * mhat / (std::sqrt(vhat) + eps);
        }
        out.push_back(x);
    }
    return out;
}

std::vector<Vector> library_trajectory(const Quadratic& f, Vector x, const OptimizerConfig& cfg, int steps) {
    Optimizer opt(cfg, x.size());
    std::vector<Vector> out;
    for (int t = 0; t < steps; ++t) {
        opt.step(x, f.grad(x));
        out.push_back(x);
    }
    return out;
}

void check_trajectories(const std::vector<Vector>& got, const std::vector<Vector>& want) {
    REQUIRE(got.size() == want.size());
    for (std::size_t t = 0; t < got.size(); ++t) CHECK((got[t] - want[t]).cwiseAbs().maxCoeff() <= 1e-12);
}

BilevelProblem quadratic_problem(std::uint64_t seed, double phi0 = 0.5) {
    auto spec = std::make_shared<const QuadraticTaskSpec>(QuadraticTaskSpec::random(10, seed));
    return make_quadratic_problem(spec, Vector::Constant(10, phi0));
}

BilevelProblem small_logreg(std::uint64_t seed) {
    LogRegTaskSpec spec;
    spec.dim = 10;
    spec.n_train = 60;
    spec.n_val = 60;
    spec.seed = seed;
    return make_logreg_problem(std::make_shared<const LogRegTask>(spec));
}

bool same_record(const RunRecord& a, const RunRecord& b) {
    if (a.train_loss != b.train_loss || a.outer.size() != b.outer.size()) return false;
    for (std::size_t i = 0; i < a.outer.size(); ++i) {
        if (a.outer[i].val_loss != b.outer[i].val_loss || a.outer[i].hypergrad_norm != b.outer[i].hypergrad_norm ||
            a.outer[i].oracle_calls != b.outer[i].oracle_calls)
            return false;
    }
    return a.final_val_loss == b.final_val_loss && a.final_phi == b.final_phi;
}

}  // namespace

TEST_CASE("optimizers follow reference trajectories") {
    const Quadratic f = fixed_quadratic();
    const Vector x0 = testing::random_vector(4, 3);
    check_trajectories(library_trajectory(f, x0, Sgd{0.1}, 10), reference_sgd(f, x0, 0.1, 10));
    check_trajectories(library_trajectory(f, x0, SgdMomentum{0.05, 0.9}, 10),
                       reference_momentum(f, x0, 0.05, 0.9, 10));
    check_trajectories(library_trajectory(f, x0, Adam{0.01, 0.9, 0.999, 1e-8}, 10),
                       reference_adam(f, x0, 0.01, 0.9, 0.999, 1e-8, 10));
}

TEST_CASE("optimizer reset and validation") {
    const Quadratic f = fixed_quadratic();
    Vector a = testing::random_vector(4, 5);
    Vector b = a;
    Optimizer opt(Adam{0.01}, 4);
    for (int t = 0; t < 3; ++t) opt.step(a, f.grad(a));
    opt.reset();
    CHECK(opt.steps() == 0);
    Optimizer fresh(Adam{0.01}, 4);
    Vector a2 = b;
    opt.step(b, f.grad(b));
    fresh.step(a2, f.grad(a2));
    CHECK(a2 == b);

    CHECK_THROWS_AS(Optimizer(Sgd{0.0}, 2), ArgumentError);
    CHECK_THROWS_AS(Optimizer(SgdMomentum{0.1, 1.0}, 2), ArgumentError);
    CHECK_THROWS_AS(Optimizer(Adam{0.1, 0.9, 1.0}, 2), ArgumentError);
    Vector wrong = Vector::Zero(3);
    CHECK_THROWS_AS(opt.step(wrong, Vector::Zero(3)), ArgumentError);
}

TEST_CASE("schedule edge: no outer steps") {
    ScheduleConfig s;
    s.inner_steps_per_outer = 1;
    s.total_outer_steps = 0;
    const RunRecord r = run(quadratic_problem(1), s, NystromIhvp{.k = 10});
    CHECK(r.train_loss.size() == 1);
    CHECK(r.outer.empty());
    CHECK(r.ok());
}

TEST_CASE("record lengths follow the schedule") {
    ScheduleConfig s;
    s.inner_steps_per_outer = 7;
    s.total_outer_steps = 4;
    s.inner_optimizer = Sgd{0.05};
    s.outer_optimizer = Sgd{0.01};
    const RunRecord r = run(quadratic_problem(2), s, CgIhvp{.cg = {10, 0.0}, .rho = 1e-6});
    CHECK(r.train_loss.size() == 7 * 5);
    REQUIRE(r.outer.size() == 4);
    for (int i = 0; i < 4; ++i) CHECK(r.outer[static_cast<std::size_t>(i)].outer_step == i + 1);
    CHECK(r.final_phi.size() == 10);
}

TEST_CASE("outer loss strictly decreases on the quadratic task") {
    ScheduleConfig s;
    s.inner_steps_per_outer = 400;
    s.total_outer_steps = 10;
    s.reset_inner_on_outer = false;
    s.inner_optimizer = Sgd{0.3};
    s.outer_optimizer = Sgd{0.05};
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
        const RunRecord r = run(quadratic_problem(seed), s, NystromIhvp{.k = 10, .rho = 1e-8});
        REQUIRE(r.outer.size() == 10);
        for (std::size_t i = 1; i < r.outer.size(); ++i) CHECK(r.outer[i].val_loss < r.outer[i - 1].val_loss);
        CHECK(r.final_val_loss < r.outer.back().val_loss);
        // the inner problem is solved before each outer step
        for (const auto& o : r.outer) CHECK(o.inner_grad_norm <= 1e-6);
    }
}

TEST_CASE("outer steps match closed-form descent on the quadratic task") {
    const auto spec = std::make_shared<const QuadraticTaskSpec>(QuadraticTaskSpec::random(6, 4));
    const BilevelProblem problem = make_quadratic_problem(spec, Vector::Constant(6, 0.5));
    ScheduleConfig s;
    s.inner_steps_per_outer = 2000;
    s.total_outer_steps = 3;
    s.reset_inner_on_outer = false;
    s.inner_optimizer = Sgd{0.3};
    s.outer_optimizer = Sgd{0.1};
    const RunRecord r = run(problem, s, NystromIhvp{.k = 6, .rho = 1e-10});

    Vector phi = Vector::Constant(6, 0.5);
    for (int i = 0; i < 3; ++i) phi -= 0.1 * quadratic_closed_form_hypergradient(*spec, phi);
    CHECK(testing::rel_err(r.final_phi, phi) <= 1e-6);
}

TEST_CASE("warm start keeps theta continuous across outer steps") {
    ScheduleConfig s;
    s.inner_steps_per_outer = 5;
    s.total_outer_steps = 4;
    s.reset_inner_on_outer = false;
    s.keep_theta_snapshots = true;
    s.outer_optimizer = Sgd{0.01};
    const RunRecord warm = run(small_logreg(1), s, NystromIhvp{.k = 4});
    REQUIRE(warm.window_start_theta.size() == 5);
    for (std::size_t w = 1; w < warm.window_start_theta.size(); ++w)
        CHECK(warm.window_start_theta[w] == warm.window_end_theta[w - 1]);

    s.reset_inner_on_outer = true;
    const RunRecord reset = run(small_logreg(1), s, NystromIhvp{.k = 4});
    for (std::size_t w = 1; w < reset.window_start_theta.size(); ++w)
        CHECK(reset.window_start_theta[w] != reset.window_end_theta[w - 1]);
}

TEST_CASE("runs are deterministic") {
    ScheduleConfig s;
    s.inner_steps_per_outer = 10;
    s.total_outer_steps = 3;
    s.outer_optimizer = Sgd{0.1};
    s.seed = 9;
    for (const IhvpConfig& cfg : std::vector<IhvpConfig>{NystromIhvp{.k = 3}, CgIhvp{}, NeumannIhvp{}}) {
        CHECK(same_record(run(small_logreg(2), s, cfg), run(small_logreg(2), s, cfg)));
    }
    s.batch_size = 16;
    CHECK(same_record(run(small_logreg(2), s, NystromIhvp{.k = 3}), run(small_logreg(2), s, NystromIhvp{.k = 3})));
}

TEST_CASE("compare_backends") {
    ScheduleConfig s;
    s.inner_steps_per_outer = 10;
    s.total_outer_steps = 2;
    s.outer_optimizer = Sgd{0.1};

    SUBCASE("singleton equals run") {
        const auto recs = compare_backends(small_logreg, s, {NystromIhvp{.k = 3}}, {5});
        REQUIRE(recs.size() == 1);
        ScheduleConfig seeded = s;
        seeded.seed = 5;
        CHECK(same_record(recs[0], run(small_logreg(5), seeded, NystromIhvp{.k = 3})));
    }
    SUBCASE("identical backends give identical records, in config-major order") {
        const std::vector<IhvpConfig> cfgs{CgIhvp{}, CgIhvp{}, NeumannIhvp{}};
        const std::vector<std::uint64_t> seeds{1, 2};
        const auto recs = compare_backends(small_logreg, s, cfgs, seeds);
        REQUIRE(recs.size() == 6);
        CHECK(same_record(recs[0], recs[2]));
        CHECK(same_record(recs[1], recs[3]));
        CHECK(recs[0].seed == 1);
        CHECK(recs[1].seed == 2);
        CHECK(recs[4].backend == "neumann");

        const auto parallel = compare_backends(small_logreg, s, cfgs, seeds, 3);
        for (std::size_t i = 0; i < recs.size(); ++i) CHECK(same_record(recs[i], parallel[i]));
    }
    SUBCASE("failures are recorded") {
        ScheduleConfig bad = s;
        bad.outer_optimizer = Sgd{1e6};
        const auto recs = compare_backends(small_logreg, bad, {NeumannIhvp{.neumann = {500, 5.0}}}, {1});
        REQUIRE(recs.size() == 1);
        CHECK_FALSE(recs[0].ok());
        CHECK(recs[0].error_kind.has_value());
    }
    SUBCASE("empty lists") {
        CHECK_THROWS_AS(compare_backends(small_logreg, s, {}, {1}), ArgumentError);
        CHECK_THROWS_AS(compare_backends(small_logreg, s, {CgIhvp{}}, {}), ArgumentError);
    }
}

TEST_CASE("run aborts with the partial record") {
    ScheduleConfig s;
    s.inner_steps_per_outer = 5;
    s.total_outer_steps = 3;
    try {
        run(small_logreg(3), s, NeumannIhvp{.neumann = {2000, 50.0}, .rho = 0.0});
        FAIL("expected abort");
    } catch (const RunAborted& e) {
        CHECK(e.kind() == ErrorKind::Divergence);
        CHECK(e.partial().train_loss.size() == 5);
        CHECK(e.partial().error.has_value());
        CHECK(std::string(e.what()).find("neumann") != std::string::npos);
    }
}

TEST_CASE("paper-scale reset losses start near ln 2") {
    LogRegTaskSpec spec;
    const auto problem = make_logreg_problem(std::make_shared<const LogRegTask>(spec));
    ScheduleConfig s;
    s.total_outer_steps = 2;
    s.outer_optimizer = SgdMomentum{0.01, 0.9};
    const RunRecord r = run(problem, s, CgIhvp{});
    for (std::size_t w = 0; w < 3; ++w) {
        const double first = r.train_loss[w * 100];
        CHECK(std::abs(first - 0.7) <= 0.1);
        CHECK(r.train_loss[w * 100 + 99] < first);
    }
}
