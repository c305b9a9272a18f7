#include "doctest.h"

#include "nysgrad/error.hpp"
#include "nysgrad/hypergrad.hpp"
#include "nysgrad/tasks.hpp"
#include "support.hpp"

using namespace nysgrad;
using testing::rel_err;

namespace {

// Random bundle with dense H (p x p) and dense F (p x h).
struct DenseBundle {
    Matrix h;
    Matrix f;
    DerivativeBundle bundle;
};

DenseBundle random_bundle(Index p, Index h, Index rank, std::uint64_t seed) {
    const Matrix hess = testing::random_psd(p, rank, seed);
    Rng rng(mix_seed(seed, 1));
    const Matrix f = normal_matrix(rng, p, h);
    const Vector grad_theta = normal_vector(rng, p);
    const Vector grad_phi = normal_vector(rng, h);
    return DenseBundle{
        .h = hess,
        .f = f,
        .bundle =
            DerivativeBundle{
                .grad_outer_theta = grad_theta,
                .grad_outer_phi = grad_phi,
                .hvp = DenseOperator(hess).oracle(),
                .mixed_apply_transpose = [f](const Vector& v) -> Vector { return f.transpose() * v; },
                .hessian_diagonal = hess.diagonal(),
            },
    };
}

Vector dense_reference(const DenseBundle& d, double rho) {
    const Index p = d.h.rows();
    const Vector v = testing::gauss_solve(d.h + rho * Matrix::Identity(p, p), d.bundle.grad_outer_theta);
    return d.bundle.grad_outer_phi - d.f.transpose() * v;
}

}  // namespace

TEST_CASE("zero outer gradient returns dg/dphi for every backend") {
    DenseBundle d = random_bundle(12, 4, 12, 1);
    d.bundle.grad_outer_theta.setZero();
    for (const IhvpConfig& cfg : std::vector<IhvpConfig>{NystromIhvp{.k = 4}, CgIhvp{}, NeumannIhvp{}}) {
        const auto r = hypergradient(d.bundle, cfg);
        CHECK(r.value == d.bundle.grad_outer_phi);
    }
}

TEST_CASE("full-rank Nystrom equals the dense hypergradient") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const DenseBundle d = random_bundle(30, 7, 30, seed);
        const Vector want = dense_reference(d, 0.01);
        for (Index kappa : {Index{0}, Index{1}, Index{6}}) {
            const auto r = hypergradient(d.bundle, NystromIhvp{.k = 30, .kappa = kappa, .rho = 0.01});
            CHECK((r.value - want).norm() <= 1e-8 * want.norm());
            CHECK(r.diagnostics.oracle_calls == 30);
            CHECK(r.diagnostics.sampled_indices.size() == 30);
        }
    }
}

TEST_CASE("exact backends agree") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const Index p = 10 + 8 * static_cast<Index>(seed);
        // well-conditioned H so that l = p CG steps are exact in floating point too
        DenseBundle d = random_bundle(p, 5, p, seed + 10);
        d.h /= static_cast<double>(p);
        d.bundle.hvp = DenseOperator(d.h).oracle();
        const double rho = 0.5;
        const Vector ny = hypergradient(d.bundle, NystromIhvp{.k = p, .rho = rho}).value;
        const Vector cg = hypergradient(d.bundle, CgIhvp{.cg = {static_cast<int>(p), 0.0}, .rho = rho}).value;
        const Vector ref = dense_reference(d, rho);
        CHECK(rel_err(ny, cg) <= 1e-6);
        CHECK(rel_err(ny, ref) <= 1e-6);

        // Neumann converges when alpha ||H + rho I|| < 1; give it enough terms
        const double alpha = 1.0 / (operator_norm(DenseOperator(d.h)) + rho);
        const Vector nm = hypergradient(d.bundle, NeumannIhvp{.neumann = {10000, alpha}, .rho = rho}).value;
        CHECK(rel_err(nm, ref) <= 1e-6);
    }
}

TEST_CASE("scalar sign convention") {
    // f = 1/2 theta^2 - phi theta, g = 1/2 theta^2, at theta = phi
    const double phi = 1.7;
    const double rho = 1e-6;
    Vector grad_theta(1);
    grad_theta << phi;
    const DerivativeBundle bundle{
        .grad_outer_theta = grad_theta,
        .grad_outer_phi = Vector::Zero(1),
        .hvp = DenseOperator(Matrix::Identity(1, 1)).oracle(),
        .mixed_apply_transpose = [](const Vector& v) -> Vector { return -v; },
        .hessian_diagonal = std::nullopt,
    };
    for (const IhvpConfig& cfg :
         std::vector<IhvpConfig>{NystromIhvp{.k = 1, .rho = rho}, CgIhvp{.cg = {1, 0.0}, .rho = rho}}) {
        const auto r = hypergradient(bundle, cfg);
        CHECK(r.value(0) == doctest::Approx(phi).epsilon(1e-4));
        // the Woodbury form cancels two terms of size |b| / rho
        CHECK(r.value(0) == doctest::Approx(phi / (1.0 + rho)).epsilon(1e-9));
    }
}

TEST_CASE("backend errors carry the backend tag") {
    DenseBundle d = random_bundle(6, 2, 6, 3);
    d.bundle.hvp = DenseOperator(4.0 * Matrix::Identity(6, 6)).oracle();
    try {
        hypergradient(d.bundle, NeumannIhvp{.neumann = {500, 1.0}, .rho = 0.0});
        FAIL("expected divergence");
    } catch (const DivergenceError& e) {
        CHECK(e.backend() == "neumann");
    }

    DenseBundle zero = random_bundle(6, 2, 6, 4);
    zero.bundle.hvp = DenseOperator(Matrix::Zero(6, 6)).oracle();
    try {
        hypergradient(zero.bundle, NystromIhvp{.k = 2});
        FAIL("expected a degenerate pivot");
    } catch (const DegeneratePivotError& e) {
        CHECK(e.backend() == "nystrom");
    }
}

TEST_CASE("diagonal-squared sampling needs the diagonal") {
    DenseBundle d = random_bundle(8, 2, 8, 5);
    NystromIhvp cfg{.k = 3, .sampling = {SamplingKind::DiagonalSquared, 1}};
    CHECK_NOTHROW(hypergradient(d.bundle, cfg));
    d.bundle.hessian_diagonal.reset();
    CHECK_THROWS_AS(hypergradient(d.bundle, cfg), ArgumentError);
}

TEST_CASE("config labels and validation") {
    CHECK(backend_tag(NystromIhvp{}) == "nystrom");
    CHECK(backend_tag(CgIhvp{}) == "cg");
    CHECK(backend_tag(NeumannIhvp{}) == "neumann");
    CHECK(label(NystromIhvp{.k = 5, .rho = 0.01}) == "nystrom(k=5,kappa=5,rho=0.01)");
    CHECK(rho_of(CgIhvp{.rho = 0.25}) == 0.25);
    CHECK_THROWS_AS(validate(IhvpConfig{NystromIhvp{.k = 0}}), ArgumentError);
    CHECK_THROWS_AS(validate(IhvpConfig{NystromIhvp{.k = 3, .kappa = 4}}), ArgumentError);
    CHECK_THROWS_AS(validate(IhvpConfig{NeumannIhvp{.neumann = {5, 0.0}}}), ArgumentError);
}

TEST_CASE("hypergradient_error") {
    SUBCASE("k = p is exact") {
        const DenseBundle d = random_bundle(20, 4, 20, 7);
        const auto e = hypergradient_error(d.bundle, DenseOperator(d.h), d.f, NystromIhvp{.k = 20, .rho = 0.1});
        CHECK(e.error <= 1e-9);
        CHECK(e.bound <= 1e-9);
    }
    SUBCASE("rank-10 capture") {
        const DenseBundle d = random_bundle(40, 6, 10, 8);
        const auto e = hypergradient_error(d.bundle, DenseOperator(d.h), NystromIhvp{.k = 10, .rho = 0.01});
        CHECK(e.error <= 1e-6 * e.reference_norm);
    }
    SUBCASE("the bound holds on low-rank samples") {
        for (std::uint64_t seed = 0; seed < 10; ++seed) {
            const DenseBundle d = random_bundle(50, 5, 50, 20 + seed);
            const auto e = hypergradient_error(d.bundle, DenseOperator(d.h), NystromIhvp{.k = 5, .rho = 0.01});
            CHECK(e.error <= e.bound + 1e-9);
            CHECK(e.nystrom_opnorm > 0.0);
        }
    }
    SUBCASE("dense cap") {
        const DenseBundle d = random_bundle(10, 2, 10, 9);
        CHECK_THROWS_AS(dense_mixed(d.bundle, 5), CapabilityError);
    }
}

TEST_CASE("quadratic task with exact Nystrom matches the closed form") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const auto spec = QuadraticTaskSpec::random(8, seed);
        const Vector phi = Vector::Constant(8, 0.3);
        const Vector theta = quadratic_inner_solution(spec, phi);
        const auto r = hypergradient(quadratic_bundle(spec, theta, phi), NystromIhvp{.k = 8, .rho = 1e-8});
        const Vector want = quadratic_closed_form_hypergradient(spec, phi);
        CHECK(rel_err(r.value, want) <= 1e-6);
    }
}
