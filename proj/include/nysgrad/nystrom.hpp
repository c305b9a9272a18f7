#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "nysgrad/linop.hpp"

namespace nysgrad {

enum class SamplingKind {
    Uniform,          // without replacement
    DiagonalSquared,  // without replacement, inclusion weight ~ H_ii^2
};

struct SamplingStrategy {
    SamplingKind kind = SamplingKind::Uniform;
    std::uint64_t seed = 0;

    bool operator==(const SamplingStrategy&) const = default;
};

struct IndexSample {
    std::vector<Index> indices;  // sorted ascending, distinct
    bool all_zero_weights = false;  // weighted strategy saw an all-zero diagonal
    int uniform_fallback_draws = 0;
};

/// Draws k distinct column indices from [0, p). `diag` is required for the
/// diagonal-squared strategy and ignored otherwise.
IndexSample sample_indices(Index p, Index k, const SamplingStrategy& strategy,
                           std::span<const double> diag = {});

struct FactorOptions {
    double eig_floor = 1e-10;       // relative to max |lambda| of the pivot
    bool allow_degenerate = false;  // permit factors whose every pivot eigenvalue was dropped
};

/// Nystrom factors of H: C = H[:, K], pivot H[K, K] = U diag(lambda) U^T, and the
/// regularizer rho. Represents (H_k + rho I)^{-1} implicitly.
///
/// Pivot eigenvalues below the floor are recorded as dropped; every inverse
/// variant works on the retained subspace only.
class NystromFactors {
public:
    NystromFactors(std::vector<Index> indices, Matrix columns, Matrix pivot_eigvecs,
                   Vector pivot_eigvals, double rho, double eig_floor);

    Index dim() const noexcept { return columns_.rows(); }
    Index rank() const noexcept { return columns_.cols(); }
    double rho() const noexcept { return rho_; }

    const std::vector<Index>& indices() const noexcept { return indices_; }
    const Matrix& columns() const noexcept { return columns_; }
    const Matrix& pivot_eigvecs() const noexcept { return pivot_eigvecs_; }
    const Vector& pivot_eigvals() const noexcept { return pivot_eigvals_; }

    const std::vector<bool>& retained_mask() const noexcept { return retained_; }
    const Matrix& retained_eigvecs() const noexcept { return retained_eigvecs_; }
    const Vector& retained_eigvals() const noexcept { return retained_eigvals_; }
    Index retained_count() const noexcept { return retained_eigvals_.size(); }
    Index dropped_count() const noexcept { return rank() - retained_count(); }
    Index negative_count() const noexcept { return negative_count_; }

    /// Dense H_k = (CU_r) diag(lambda_r)^{-1} (CU_r)^T. Only for small p.
    Matrix reconstruct() const;

    /// Approximate memory held by the factors (C, U, lambda).
    std::size_t bytes() const noexcept;

private:
    std::vector<Index> indices_;
    Matrix columns_;
    Matrix pivot_eigvecs_;
    Vector pivot_eigvals_;
    double rho_;
    std::vector<bool> retained_;
    Matrix retained_eigvecs_;
    Vector retained_eigvals_;
    Index negative_count_ = 0;
};

/// Extracts C with k oracle products, then eigendecomposes the symmetrized pivot.
/// Throws DegeneratePivotError if every eigenvalue is dropped, unless allowed.
NystromFactors build_factors(const HvpOracle& op, std::span<const Index> indices, double rho,
                             const FactorOptions& options = {});

enum class InverseVariant {
    Full,     // one Woodbury solve on the whole retained block
    Rank1,    // rank-one recurrence, one retained column at a time
    Chunked,  // block recurrence over width-kappa chunks
};

struct InverseApplyPlan {
    InverseVariant variant = InverseVariant::Full;
    Index kappa = 0;  // chunk width; k for Full, 1 for Rank1

    static InverseApplyPlan full(Index k) { return {InverseVariant::Full, k}; }
    static InverseApplyPlan rank1() { return {InverseVariant::Rank1, 1}; }
    static InverseApplyPlan chunked(Index kappa) { return {InverseVariant::Chunked, kappa}; }
    /// Full when kappa >= k, Rank1 when kappa == 1, Chunked otherwise.
    static InverseApplyPlan for_kappa(Index k, Index kappa);
};

const char* to_string(InverseVariant variant);

/// Returns (H_k + rho I)^{-1} b without forming any p x p array.
Vector inverse_apply(const NystromFactors& factors, const InverseApplyPlan& plan, const Vector& b);

/// ||H - H_k||_op for a dense H (symmetric, so the spectral norm).
double nystrom_error_opnorm(const DenseOperator& dense_h, const NystromFactors& factors);

/// ||g|| ||F||_op (1/rho) err / (rho + err): bound on the hypergradient error
/// when H is PSD.
double hypergradient_error_bound(double g_norm, double f_opnorm, double rho, double err_opnorm);

}  // namespace nysgrad
