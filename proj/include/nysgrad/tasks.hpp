#pragma once

#include <cstdint>
#include <memory>

#include "nysgrad/bilevel.hpp"
#include "nysgrad/hypergrad.hpp"
#include "nysgrad/linop.hpp"

namespace nysgrad {

// ---------------------------------------------------------------------------
// Low-rank inverse-comparison instance

struct LowRankDemoSpec {
    Index p = 40;
    Index rank = 20;
    double rho = 0.1;
    std::uint64_t seed = 0;

    bool operator==(const LowRankDemoSpec&) const = default;
};

void validate(const LowRankDemoSpec& spec);

/// H = G G^T with G a p x rank standard-normal matrix.
DenseOperator make_lowrank_demo(const LowRankDemoSpec& spec);

// ---------------------------------------------------------------------------
// Per-parameter weight decay for logistic regression
//
//   f(theta, phi) = mean BCE(X theta, y) + theta^T diag(phi) theta   (train)
//   g(theta, phi) = mean BCE(X theta, y)                             (val)

struct LogRegTaskSpec {
    Index dim = 100;
    Index n_train = 500;
    Index n_val = 500;
    double noise_sigma = 0.1;   // per-sample logit noise
    std::uint64_t seed = 0;
    double init_scale = 0.01;   // theta ~ N(0, init_scale^2) at every (re)initialization
    double phi0 = 1.0;

    bool operator==(const LogRegTaskSpec&) const = default;
};

void validate(const LogRegTaskSpec& spec);

enum class Split { Train, Val };

class LogRegTask {
public:
    explicit LogRegTask(const LogRegTaskSpec& spec);

    const LogRegTaskSpec& spec() const noexcept { return spec_; }
    const Vector& w_star() const noexcept { return w_star_; }
    const Matrix& inputs(Split split) const noexcept { return split == Split::Train ? x_train_ : x_val_; }
    const Vector& labels(Split split) const noexcept { return split == Split::Train ? y_train_ : y_val_; }

private:
    LogRegTaskSpec spec_;
    Vector w_star_;
    Matrix x_train_;
    Vector y_train_;
    Matrix x_val_;
    Vector y_val_;
};

/// Analytic quantities of the inner objective on one split.
struct LogRegDerivatives {
    double bce = 0.0;         // mean BCE
    double inner_loss = 0.0;  // bce + theta^T diag(phi) theta
    Vector bce_grad;          // X^T (sigma - y) / n
    Vector inner_grad;        // bce_grad + 2 phi .* theta
    Vector hessian_diag;
    HvpOracle hvp;            // v -> X^T (s .* X v) / n + 2 phi .* v
    TransposeApplyFn mixed;   // v -> 2 theta .* v
};

LogRegDerivatives logreg_derivatives(std::shared_ptr<const LogRegTask> task, const Vector& theta,
                                     const Vector& phi, Split split, Batch batch = {});

struct LogRegBundle {
    DerivativeBundle bundle;
    double inner_loss = 0.0;  // on `inner_split`
    double val_loss = 0.0;    // unregularized validation BCE
};

/// Inner second derivatives from `inner_split`, outer gradient from validation;
/// dg/dphi is identically zero.
LogRegBundle logreg_bundle(std::shared_ptr<const LogRegTask> task, const Vector& theta, const Vector& phi,
                           Split inner_split = Split::Train);

BilevelProblem make_logreg_problem(std::shared_ptr<const LogRegTask> task);

// ---------------------------------------------------------------------------
// Quadratic bilevel task with closed-form hypergradient
//
//   f(theta, phi) = 1/2 theta^T A theta - b^T theta + 1/2 theta^T diag(phi) theta
//   g(theta)      = 1/2 ||theta - theta_target||^2

struct QuadraticTaskSpec {
    Index p = 20;
    Matrix a;
    Vector b;
    Vector theta_target;
    std::uint64_t seed = 0;

    /// A = G G^T / p + 0.1 I with Gaussian G; b, theta_target standard normal.
    static QuadraticTaskSpec random(Index p, std::uint64_t seed);
};

void validate(const QuadraticTaskSpec& spec);

/// theta*(phi) = (A + diag(phi))^{-1} b.
Vector quadratic_inner_solution(const QuadraticTaskSpec& spec, const Vector& phi);

/// dg/dphi = -diag(theta*) (A + diag(phi))^{-1} (theta* - theta_target), computed densely.
Vector quadratic_closed_form_hypergradient(const QuadraticTaskSpec& spec, const Vector& phi);

double quadratic_inner_loss(const QuadraticTaskSpec& spec, const Vector& theta, const Vector& phi);
Vector quadratic_inner_grad(const QuadraticTaskSpec& spec, const Vector& theta, const Vector& phi);
DerivativeBundle quadratic_bundle(const QuadraticTaskSpec& spec, const Vector& theta, const Vector& phi);

BilevelProblem make_quadratic_problem(std::shared_ptr<const QuadraticTaskSpec> spec, Vector phi0,
                                      double init_scale = 0.1);

}  // namespace nysgrad
