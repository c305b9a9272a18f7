#include "nysgrad/tasks.hpp"

#include <cmath>
#include <string>

#include <Eigen/Cholesky>

#include "nysgrad/error.hpp"
#include "nysgrad/random.hpp"

namespace nysgrad {
namespace {

// log(1 + e^z), overflow-safe
double softplus(double z) { return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

double sigmoid(double z) {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

struct SplitView {
    std::shared_ptr<const Matrix> x;
    std::shared_ptr<const Vector> y;
};

SplitView view_of(const std::shared_ptr<const LogRegTask>& task, Split split, Batch batch) {
    if (batch.empty()) {
        // aliasing constructors keep the task alive without copying the data
        return {std::shared_ptr<const Matrix>(task, &task->inputs(split)),
                std::shared_ptr<const Vector>(task, &task->labels(split))};
    }
    std::vector<Index> rows(batch.begin(), batch.end());
    return {std::make_shared<const Matrix>(task->inputs(split)(rows, Eigen::all)),
            std::make_shared<const Vector>(task->labels(split)(rows))};
}

Vector gaussian_theta(Index dim, double scale, std::uint64_t seed) {
    Rng rng(seed);
    return normal_vector(rng, dim, scale);
}

}  // namespace

// ---------------------------------------------------------------------------

void validate(const LowRankDemoSpec& spec) {
    if (spec.p < 1 || spec.rank < 1 || spec.rank > spec.p)
        throw ArgumentError("low-rank demo: need 1 <= rank <= p");
    if (!(spec.rho > 0.0)) throw ArgumentError("low-rank demo: rho must be positive");
}

DenseOperator make_lowrank_demo(const LowRankDemoSpec& spec) {
    validate(spec);
    Rng rng(spec.seed);
    const Matrix g = normal_matrix(rng, spec.p, spec.rank);
    return DenseOperator(g * g.transpose());
}

// ---------------------------------------------------------------------------

void validate(const LogRegTaskSpec& spec) {
    if (spec.dim < 1 || spec.n_train < 1 || spec.n_val < 1)
        throw ArgumentError("logreg: dimensions and sample counts must be positive");
    if (!(spec.noise_sigma >= 0.0)) throw ArgumentError("logreg: noise_sigma must be >= 0");
    if (!(spec.init_scale >= 0.0)) throw ArgumentError("logreg: init_scale must be >= 0");
}

LogRegTask::LogRegTask(const LogRegTaskSpec& spec) : spec_(spec) {
    validate(spec_);
    Rng w_rng(mix_seed(spec_.seed, 1));
    w_star_ = normal_vector(w_rng, spec_.dim);

    auto draw = [&](Index n, std::uint64_t stream, Matrix& x, Vector& y) {
        Rng rng(mix_seed(spec_.seed, stream));
        x = normal_matrix(rng, spec_.dim, n).transpose();  // one sample per row
        const Vector noise = normal_vector(rng, n, spec_.noise_sigma);
        y = ((x * w_star_ + noise).array() > 0.0).cast<double>();
    };
    draw(spec_.n_train, 2, x_train_, y_train_);
    draw(spec_.n_val, 3, x_val_, y_val_);
}

LogRegDerivatives logreg_derivatives(std::shared_ptr<const LogRegTask> task, const Vector& theta,
                                     const Vector& phi, Split split, Batch batch) {
    const Index d = task->spec().dim;
    if (theta.size() != d || phi.size() != d) throw ArgumentError("logreg: theta/phi have wrong dimension");

    const SplitView data = view_of(task, split, batch);
    const Matrix& x = *data.x;
    const Vector& y = *data.y;
    const double n = static_cast<double>(x.rows());

    const Vector z = x * theta;
    Vector sig(z.size());
    double bce = 0.0;
    for (Index i = 0; i < z.size(); ++i) {
        bce += softplus(z(i)) - y(i) * z(i);
        sig(i) = sigmoid(z(i));
    }
    bce /= n;
    auto curvature = std::make_shared<const Vector>((sig.array() * (1.0 - sig.array())).matrix() / n);
    auto two_phi = std::make_shared<const Vector>(2.0 * phi);

    LogRegDerivatives out{
        .bce = bce,
        .inner_loss = bce + theta.dot(phi.cwiseProduct(theta)),
        .bce_grad = x.transpose() * (sig - y) / n,
        .inner_grad = {},
        .hessian_diag = x.array().square().matrix().transpose() * (*curvature) + *two_phi,
        .hvp = HvpOracle(
            d,
            [xs = data.x, curvature, two_phi](const Vector& v) -> Vector {
                return xs->transpose() * curvature->cwiseProduct(*xs * v) + two_phi->cwiseProduct(v);
            },
            [xs = data.x, curvature, two_phi](const Matrix& v) -> Matrix {
                Matrix xv = *xs * v;
                xv = curvature->asDiagonal() * xv;
                Matrix out = xs->transpose() * xv;
                out += two_phi->asDiagonal() * v;
                return out;
            }),
        .mixed = [two_theta = Vector(2.0 * theta)](const Vector& v) -> Vector {
            if (v.size() != two_theta.size()) throw ArgumentError("logreg mixed partial: wrong dimension");
            return two_theta.cwiseProduct(v);
        },
    };
    out.inner_grad = out.bce_grad + two_phi->cwiseProduct(theta);
    return out;
}

LogRegBundle logreg_bundle(std::shared_ptr<const LogRegTask> task, const Vector& theta, const Vector& phi,
                           Split inner_split) {
    LogRegDerivatives inner = logreg_derivatives(task, theta, phi, inner_split);
    LogRegDerivatives outer = logreg_derivatives(task, theta, phi, Split::Val);
    return LogRegBundle{
        .bundle =
            DerivativeBundle{
                .grad_outer_theta = std::move(outer.bce_grad),
                .grad_outer_phi = Vector::Zero(phi.size()),
                .hvp = std::move(inner.hvp),
                .mixed_apply_transpose = std::move(inner.mixed),
                .hessian_diagonal = std::move(inner.hessian_diag),
            },
        .inner_loss = inner.inner_loss,
        .val_loss = outer.bce,
    };
}

BilevelProblem make_logreg_problem(std::shared_ptr<const LogRegTask> task) {
    const LogRegTaskSpec& spec = task->spec();
    BilevelProblem problem;
    problem.p = spec.dim;
    problem.h = spec.dim;
    problem.n_train = spec.n_train;
    problem.n_val = spec.n_val;
    problem.phi0 = Vector::Constant(spec.dim, spec.phi0);
    problem.init_theta = [dim = spec.dim, scale = spec.init_scale](std::uint64_t seed) {
        return gaussian_theta(dim, scale, seed);
    };

    // Inner loss and gradient are evaluated directly to avoid building an oracle per step.
    problem.inner_loss = [task](const Vector& theta, const Vector& phi, Batch batch) {
        const SplitView data = view_of(task, Split::Train, batch);
        const Vector z = *data.x * theta;
        double bce = 0.0;
        for (Index i = 0; i < z.size(); ++i) bce += softplus(z(i)) - (*data.y)(i) * z(i);
        return bce / static_cast<double>(z.size()) + theta.dot(phi.cwiseProduct(theta));
    };
    problem.inner_grad = [task](const Vector& theta, const Vector& phi, Batch batch) -> Vector {
        const SplitView data = view_of(task, Split::Train, batch);
        const Vector z = *data.x * theta;
        const Vector sig = z.unaryExpr([](double v) { return sigmoid(v); });
        return data.x->transpose() * (sig - *data.y) / static_cast<double>(z.size()) +
               2.0 * phi.cwiseProduct(theta);
    };
    problem.hvp_at = [task](const Vector& theta, const Vector& phi, Batch batch) {
        return logreg_derivatives(task, theta, phi, Split::Train, batch).hvp;
    };
    problem.mixed_at = [task](const Vector& theta, const Vector& phi, Batch batch) {
        return logreg_derivatives(task, theta, phi, Split::Train, batch).mixed;
    };
    problem.hessian_diag_at = [task](const Vector& theta, const Vector& phi, Batch batch) {
        return logreg_derivatives(task, theta, phi, Split::Train, batch).hessian_diag;
    };
    problem.outer_loss = [task](const Vector& theta, const Vector& phi, Batch batch) {
        const SplitView data = view_of(task, Split::Val, batch);
        (void)phi;
        const Vector z = *data.x * theta;
        double bce = 0.0;
        for (Index i = 0; i < z.size(); ++i) bce += softplus(z(i)) - (*data.y)(i) * z(i);
        return bce / static_cast<double>(z.size());
    };
    problem.outer_grad_theta = [task](const Vector& theta, const Vector& phi, Batch batch) -> Vector {
        (void)phi;
        const SplitView data = view_of(task, Split::Val, batch);
        const Vector z = *data.x * theta;
        const Vector sig = z.unaryExpr([](double v) { return sigmoid(v); });
        return data.x->transpose() * (sig - *data.y) / static_cast<double>(z.size());
    };
    problem.outer_grad_phi = [](const Vector& theta, const Vector&, Batch) -> Vector {
        return Vector::Zero(theta.size());
    };
    return problem;
}

// ---------------------------------------------------------------------------

QuadraticTaskSpec QuadraticTaskSpec::random(Index p, std::uint64_t seed) {
    if (p < 1) throw ArgumentError("quadratic task: p must be positive");
    Rng rng(seed);
    QuadraticTaskSpec spec;
    spec.p = p;
    spec.seed = seed;
    const Matrix g = normal_matrix(rng, p, p);
    spec.a = g * g.transpose() / static_cast<double>(p);
    spec.a = 0.5 * (spec.a + spec.a.transpose());
    spec.a.diagonal().array() += 0.1;
    spec.b = normal_vector(rng, p);
    spec.theta_target = normal_vector(rng, p);
    return spec;
}

void validate(const QuadraticTaskSpec& spec) {
    if (spec.p < 1 || spec.a.rows() != spec.p || spec.a.cols() != spec.p || spec.b.size() != spec.p ||
        spec.theta_target.size() != spec.p) {
        throw ArgumentError("quadratic task: inconsistent dimensions");
    }
    Eigen::LLT<Matrix> llt(spec.a);
    if (llt.info() != Eigen::Success) throw ArgumentError("quadratic task: A must be SPD");
}

namespace {

Eigen::LDLT<Matrix> regularized_system(const QuadraticTaskSpec& spec, const Vector& phi) {
    if (phi.size() != spec.p) throw ArgumentError("quadratic task: phi has wrong dimension");
    Matrix m = spec.a;
    m.diagonal() += phi;
    Eigen::LDLT<Matrix> ldlt(m);
    if (ldlt.info() != Eigen::Success || !(ldlt.rcond() > 1e-14) || !ldlt.isPositive()) {
        throw IllConditionedError("quadratic task: A + diag(phi) is singular or not positive definite");
    }
    return ldlt;
}

}  // namespace

Vector quadratic_inner_solution(const QuadraticTaskSpec& spec, const Vector& phi) {
    return regularized_system(spec, phi).solve(spec.b);
}

Vector quadratic_closed_form_hypergradient(const QuadraticTaskSpec& spec, const Vector& phi) {
    const auto ldlt = regularized_system(spec, phi);
    const Vector theta = ldlt.solve(spec.b);
    return -theta.cwiseProduct(ldlt.solve(theta - spec.theta_target));
}

double quadratic_inner_loss(const QuadraticTaskSpec& spec, const Vector& theta, const Vector& phi) {
    return 0.5 * theta.dot(spec.a * theta) - spec.b.dot(theta) + 0.5 * theta.dot(phi.cwiseProduct(theta));
}

Vector quadratic_inner_grad(const QuadraticTaskSpec& spec, const Vector& theta, const Vector& phi) {
    return spec.a * theta - spec.b + phi.cwiseProduct(theta);
}

DerivativeBundle quadratic_bundle(const QuadraticTaskSpec& spec, const Vector& theta, const Vector& phi) {
    auto h = std::make_shared<Matrix>(spec.a);
    h->diagonal() += phi;
    return DerivativeBundle{
        .grad_outer_theta = theta - spec.theta_target,
        .grad_outer_phi = Vector::Zero(spec.p),
        .hvp = HvpOracle(
            spec.p, [h](const Vector& v) -> Vector { return *h * v; },
            [h](const Matrix& v) -> Matrix { return *h * v; }),
        .mixed_apply_transpose = [theta](const Vector& v) -> Vector { return theta.cwiseProduct(v); },
        .hessian_diagonal = Vector(h->diagonal()),
    };
}

BilevelProblem make_quadratic_problem(std::shared_ptr<const QuadraticTaskSpec> spec, Vector phi0,
                                      double init_scale) {
    validate(*spec);
    BilevelProblem problem;
    problem.p = spec->p;
    problem.h = spec->p;
    problem.phi0 = std::move(phi0);
    problem.init_theta = [p = spec->p, init_scale](std::uint64_t seed) { return gaussian_theta(p, init_scale, seed); };
    problem.inner_loss = [spec](const Vector& theta, const Vector& phi, Batch) {
        return quadratic_inner_loss(*spec, theta, phi);
    };
    problem.inner_grad = [spec](const Vector& theta, const Vector& phi, Batch) {
        return quadratic_inner_grad(*spec, theta, phi);
    };
    problem.hvp_at = [spec](const Vector& theta, const Vector& phi, Batch) {
        return quadratic_bundle(*spec, theta, phi).hvp;
    };
    problem.mixed_at = [](const Vector& theta, const Vector&, Batch) -> TransposeApplyFn {
        return [theta](const Vector& v) -> Vector { return theta.cwiseProduct(v); };
    };
    problem.hessian_diag_at = [spec](const Vector&, const Vector& phi, Batch) -> Vector {
        return spec->a.diagonal() + phi;
    };
    problem.outer_loss = [spec](const Vector& theta, const Vector&, Batch) {
        return 0.5 * (theta - spec->theta_target).squaredNorm();
    };
    problem.outer_grad_theta = [spec](const Vector& theta, const Vector&, Batch) -> Vector {
        return theta - spec->theta_target;
    };
    problem.outer_grad_phi = [spec](const Vector&, const Vector&, Batch) -> Vector { return Vector::Zero(spec->p); };
    return problem;
}

}  // namespace nysgrad
