#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "nysgrad/iterative.hpp"
#include "nysgrad/linop.hpp"
#include "nysgrad/nystrom.hpp"

namespace nysgrad {

/// v (length p) -> F^T v (length h), F = d^2 f / (dphi dtheta) laid out p x h.
using TransposeApplyFn = std::function<Vector(const Vector&)>;

/// Derivatives of the inner objective f and outer objective g at (theta_T, phi).
struct DerivativeBundle {
    Vector grad_outer_theta;  // dg/dtheta, length p
    Vector grad_outer_phi;    // dg/dphi, length h
    HvpOracle hvp;            // d^2 f / dtheta^2
    TransposeApplyFn mixed_apply_transpose;
    std::optional<Vector> hessian_diagonal;  // needed only for diagonal-squared sampling

    Index p() const noexcept { return grad_outer_theta.size(); }
    Index h() const noexcept { return grad_outer_phi.size(); }
    void validate() const;
};

struct NystromIhvp {
    Index k = 5;
    Index kappa = 0;  // 0 means kappa = k (single Woodbury solve)
    double rho = 0.01;
    SamplingStrategy sampling{};
    double eig_floor = 1e-10;

    bool operator==(const NystromIhvp&) const = default;
};

struct CgIhvp {
    CgConfig cg{};
    double rho = 0.01;

    bool operator==(const CgIhvp&) const = default;
};

struct NeumannIhvp {
    NeumannConfig neumann{};
    double rho = 0.01;

    bool operator==(const NeumannIhvp&) const = default;
};

using IhvpConfig = std::variant<NystromIhvp, CgIhvp, NeumannIhvp>;

std::string backend_tag(const IhvpConfig& cfg);  // "nystrom" | "cg" | "neumann"
std::string label(const IhvpConfig& cfg);        // e.g. "nystrom(k=5,kappa=5,rho=0.01)"
double rho_of(const IhvpConfig& cfg);
void validate(const IhvpConfig& cfg);

struct RunDiagnostics {
    std::string backend;
    std::uint64_t oracle_calls = 0;
    double wall_seconds = 0.0;
    std::size_t workspace_bytes = 0;  // peak solver scratch
    // cg
    int cg_iters = 0;
    double cg_residual = 0.0;
    // nystrom
    std::vector<Index> sampled_indices;
    Index dropped_eigvals = 0;
    Index negative_eigvals = 0;
    bool sampling_fallback = false;
    std::size_t factor_bytes = 0;
};

struct HypergradResult {
    Vector value;  // length h
    RunDiagnostics diagnostics;
};

/// Approximate inverse-Hessian-vector product v ~ (H + rho I)^{-1} b with the
/// configured backend.
Vector ihvp(const DerivativeBundle& bundle, const IhvpConfig& cfg, const Vector& b,
            RunDiagnostics* diagnostics = nullptr);

/// -F^T (H + rho I)^{-1} dg/dtheta + dg/dphi.
HypergradResult hypergradient(const DerivativeBundle& bundle, const IhvpConfig& cfg);

/// Dense F (p x h) obtained by probing the transpose-apply with basis vectors.
Matrix dense_mixed(const DerivativeBundle& bundle, Index max_dim = kDefaultDenseCap);

struct HypergradError {
    double error = 0.0;        // ||h* - h||_2
    double bound = 0.0;        // hypergradient_error_bound(...)
    double reference_norm = 0.0;  // ||h*||_2
    double nystrom_opnorm = 0.0;  // ||H - H_k||_op
};

/// Measures the Nystrom hypergradient against the exact regularized one and
/// evaluates the error bound with the same sampled columns.
HypergradError hypergradient_error(const DerivativeBundle& bundle, const DenseOperator& dense_h,
                                   const Matrix& dense_f, const NystromIhvp& cfg);
HypergradError hypergradient_error(const DerivativeBundle& bundle, const DenseOperator& dense_h,
                                   const NystromIhvp& cfg);

}  // namespace nysgrad
