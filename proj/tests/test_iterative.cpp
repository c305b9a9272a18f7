#include "doctest.h"

#include <cmath>

#include "nysgrad/error.hpp"
#include "nysgrad/iterative.hpp"
#include "support.hpp"

using namespace nysgrad;
using testing::rel_err;

namespace {

HvpOracle diag_oracle(const Vector& d) {
    return DenseOperator(Matrix(d.asDiagonal())).oracle();
}

}  // namespace

TEST_CASE("cg_solve") {
    SUBCASE("identity system converges in one step") {
        const Vector b = testing::random_vector(6, 1);
        const auto r = cg_solve(DenseOperator(Matrix::Identity(6, 6)).oracle(), 0.0, b, {10, 0.0});
        CHECK(r.iters_used == 1);
        CHECK(r.final_residual == doctest::Approx(0.0).epsilon(1e-14));
        CHECK(rel_err(r.x, b) <= 1e-15);
    }
    SUBCASE("p iterations solve an SPD system") {
        const Matrix a = testing::random_psd(10, 10, 2) + 0.5 * Matrix::Identity(10, 10);
        const Vector b = testing::random_vector(10, 3);
        const auto r = cg_solve(DenseOperator(a).oracle(), 0.0, b, {10, 0.0});
        CHECK(rel_err(r.x, testing::gauss_solve(a, b)) <= 1e-6);
    }
    SUBCASE("one step on a two-cluster spectrum leaves a residual") {
        Vector d(2);
        d << 1.0, 1e6;
        const auto r = cg_solve(diag_oracle(d), 0.0, Vector::Ones(2), {1, 0.0});
        CHECK(r.iters_used == 1);
        CHECK(r.final_residual > 0.0);
    }
    SUBCASE("rho shifts the operator") {
        const Matrix h = testing::random_psd(8, 3, 4);
        const Vector b = testing::random_vector(8, 5);
        const auto r = cg_solve(DenseOperator(h).oracle(), 0.7, b, {8, 0.0});
        CHECK(rel_err(r.x, testing::gauss_solve(h + 0.7 * Matrix::Identity(8, 8), b)) <= 1e-6);
    }
    SUBCASE("residual tolerance stops early") {
        const Matrix a = testing::random_psd(30, 30, 6) + Matrix::Identity(30, 30);
        const Vector b = testing::random_vector(30, 7);
        const auto r = cg_solve(DenseOperator(a).oracle(), 0.0, b, {200, 1e-3});
        CHECK(r.iters_used < 200);
        CHECK(r.final_residual <= 1e-3 * b.norm());
    }
    SUBCASE("uses at most l products") {
        const HvpOracle op = DenseOperator(testing::random_psd(12, 12, 8)).oracle().with_fresh_counter();
        cg_solve(op, 0.1, testing::random_vector(12, 9), {5, 0.0});
        CHECK(op.calls() == 5);
    }
    SUBCASE("residual does not grow over iterations on SPD systems") {
        const Matrix a = testing::random_psd(20, 20, 10) + 0.1 * Matrix::Identity(20, 20);
        const DenseOperator op(a);
        const Vector b = testing::random_vector(20, 11);
        // the A-norm error of CG is monotone
        const Vector xs = testing::gauss_solve(a, b);
        double prev = INFINITY;
        for (int l = 1; l <= 20; ++l) {
            const Vector e = cg_solve(op.oracle(), 0.0, b, {l, 0.0}).x - xs;
            const double anorm = std::sqrt(e.dot(a * e));
            CHECK(anorm <= prev * (1.0 + 1e-9));
            prev = anorm;
        }
    }
    SUBCASE("breakdown on a singular indefinite system") {
        Vector d(2);
        d << 1.0, -1.0;
        // b = (1, 1) gives p^T A p = 0 on the first step
        try {
            cg_solve(diag_oracle(d), 0.0, Vector::Ones(2), {5, 0.0});
            FAIL("expected divergence");
        } catch (const DivergenceError& e) {
            CHECK(e.step() == 1);
            CHECK(e.last_finite_iterate().isZero());
        }
    }
    SUBCASE("argument errors") {
        const HvpOracle op = DenseOperator(Matrix::Identity(2, 2)).oracle();
        CHECK_THROWS_AS(cg_solve(op, 0.0, Vector::Ones(2), {0, 0.0}), ArgumentError);
        CHECK_THROWS_AS(cg_solve(op, 0.0, Vector::Ones(3), {1, 0.0}), ArgumentError);
        CHECK_THROWS_AS(cg_solve(op, -1.0, Vector::Ones(2), {1, 0.0}), ArgumentError);
    }
}

TEST_CASE("neumann_apply") {
    SUBCASE("alpha A = I leaves b") {
        const Vector b = testing::random_vector(4, 1);
        for (int l : {1, 3, 17}) {
            const Vector x = neumann_apply(DenseOperator(Matrix::Identity(4, 4)).oracle(), 0.0, b, {l, 1.0});
            CHECK(rel_err(x, b) <= 1e-15);
        }
    }
    SUBCASE("geometric series on 2I") {
        Vector b(2);
        b << 1.0, 0.0;
        const Vector x = neumann_apply(DenseOperator(2.0 * Matrix::Identity(2, 2)).oracle(), 0.0, b, {30, 0.25});
        // alpha * sum_{i=0}^{30} (1/2)^i = 0.5 (1 - 0.5^31)
        CHECK(x(0) == doctest::Approx(0.5 * (1.0 - std::pow(0.5, 31))).epsilon(1e-15));
        CHECK(std::abs(x(0) - 0.5) <= 1e-6);
        CHECK(x(1) == 0.0);
    }
    SUBCASE("matches the explicit partial sum") {
        const Matrix h = testing::random_psd(10, 10, 3);
        const Vector b = testing::random_vector(10, 4);
        const double rho = 0.2;
        const double alpha = 0.5 / (h.norm() + rho);
        const Matrix step = Matrix::Identity(10, 10) - alpha * (h + rho * Matrix::Identity(10, 10));
        Vector term = b;
        Vector sum = b;
        for (int i = 1; i <= 7; ++i) {
            term = step * term;
            sum += term;
        }
        const Vector x = neumann_apply(DenseOperator(h).oracle(), rho, b, {7, alpha});
        CHECK(rel_err(x, alpha * sum) <= 1e-12);
    }
    SUBCASE("exactly l products") {
        const HvpOracle op = DenseOperator(testing::random_psd(6, 6, 5)).oracle().with_fresh_counter();
        neumann_apply(op, 0.0, Vector::Ones(6), {9, 0.001});
        CHECK(op.calls() == 9);
    }
    SUBCASE("diverges when |1 - alpha lambda| > 1") {
        const HvpOracle op = DenseOperator(4.0 * Matrix::Identity(2, 2)).oracle();
        CHECK_NOTHROW(neumann_apply(op, 0.0, Vector::Ones(2), {10, 1.0}));
        CHECK_THROWS_AS(neumann_apply(op, 0.0, Vector::Ones(2), {50, 1.0}), DivergenceError);
        CHECK_THROWS_AS(neumann_apply(op, 0.0, Vector::Ones(2), {2000, 1.0}), DivergenceError);
    }
    SUBCASE("argument errors") {
        const HvpOracle op = DenseOperator(Matrix::Identity(2, 2)).oracle();
        CHECK_THROWS_AS(neumann_apply(op, 0.0, Vector::Ones(2), {0, 0.1}), ArgumentError);
        CHECK_THROWS_AS(neumann_apply(op, 0.0, Vector::Ones(2), {1, 0.0}), ArgumentError);
    }
}
